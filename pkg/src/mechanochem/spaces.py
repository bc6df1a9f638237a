"""Reference-element bases, degree-of-freedom maps and triangle quadrature.

The displacement space is P1 enriched with one cubic bubble per triangle and
per component (the MINI pair together with P1 pressure); species use plain P1.
Displacement dofs are interleaved ``[v0x, v0y, v1x, v1y, ...]`` followed by
the per-triangle bubble pairs; species dofs are blocked per species
``w[i * n_vertices + node]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError

BUBBLE_SCALE = 27.0  # unit value at the barycenter


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points and weights on the reference triangle (area 1/2)."""

    points: np.ndarray   # (Q, 3)
    weights: np.ndarray  # (Q,)
    degree: int

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)


def _orbit(rule, a, w):
    rule += [((a, a, 1 - 2 * a), w), ((a, 1 - 2 * a, a), w), ((1 - 2 * a, a, a), w)]


def _orbit6(rule, a, b, w):
    c = 1.0 - a - b
    for p in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
        rule.append((p, w))


def _build_rules():
    rules = {}
    rules[1] = [((1 / 3, 1 / 3, 1 / 3), 1.0)]

    r2 = []
    _orbit(r2, 1 / 6, 1 / 3)
    rules[2] = r2

    # positive 6-point rule of degree 4 (also used for degree 3; the classic
    # 4-point degree-3 rule carries a negative centroid weight)
    r4 = []
    _orbit(r4, 0.445948490915965, 0.223381589678011)
    _orbit(r4, 0.091576213509771, 0.109951743655322)
    rules[3] = r4
    rules[4] = r4

    r5 = [((1 / 3, 1 / 3, 1 / 3), 0.225)]
    _orbit(r5, 0.470142064105115, 0.132394152788506)
    _orbit(r5, 0.101286507323456, 0.125939180544827)
    rules[5] = r5

    r6 = []
    _orbit(r6, 0.063089014491502, 0.050844906370207)
    _orbit(r6, 0.249286745170910, 0.116786275726379)
    _orbit6(r6, 0.310352451033785, 0.053145049844816, 0.082851075618374)
    rules[6] = r6
    return rules


_RULES = _build_rules()


def quadrature(degree: int) -> QuadratureRule:
    """Symmetric Gauss rule exact for bivariate polynomials up to ``degree``.

    Weights are positive and sum to the reference-triangle area 1/2.
    """
    if degree not in _RULES:
        raise ValueError(f"unsupported quadrature degree {degree}; choose 1..6")
    pts, wts = zip(*_RULES[degree])
    points = np.asarray(pts, dtype=float)
    weights = 0.5 * np.asarray(wts, dtype=float)  # published weights sum to 1
    return QuadratureRule(points, weights, degree)


def p1_gradients(coords: np.ndarray):
    """Constant P1 gradients and the signed area of one triangle.

    ``coords`` is the (3, 2) vertex array.  Raises :class:`GeometryError`
    for degenerate triangles.
    """
    d1 = coords[1] - coords[0]
    d2 = coords[2] - coords[0]
    det = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(det) < 1e-300 or det <= 0.0:
        raise GeometryError(f"degenerate or inverted triangle (2*area={det:.3e})")
    grads = np.array([
        [coords[1, 1] - coords[2, 1], coords[2, 0] - coords[1, 0]],
        [coords[2, 1] - coords[0, 1], coords[0, 0] - coords[2, 0]],
        [coords[0, 1] - coords[1, 1], coords[1, 0] - coords[0, 0]],
    ]) / det
    return grads, 0.5 * det


def p1_eval(coords: np.ndarray, bary):
    """P1 basis values and gradients on the triangle with vertices ``coords``.

    Values equal the barycentric coordinates; gradients are constant.
    """
    bary = np.asarray(bary, dtype=float)
    grads, _ = p1_gradients(coords)
    return bary.copy(), grads


def bubble_eval(coords: np.ndarray, bary):
    """Cubic bubble value and gradient at barycentric point ``bary``.

    Normalised to 1 at the barycenter; vanishes on all edges.
    """
    bary = np.asarray(bary, dtype=float)
    grads, _ = p1_gradients(coords)
    l1, l2, l3 = bary
    value = BUBBLE_SCALE * l1 * l2 * l3
    grad = BUBBLE_SCALE * (l2 * l3 * grads[0] + l1 * l3 * grads[1] + l1 * l2 * grads[2])
    return value, grad


@dataclass(frozen=True)
class DofMap:
    """Block sizes and index helpers for one subdomain.

    Displacement block: ``2 * (n_vertices + n_triangles)`` (vertex P1 pairs
    then bubble pairs).  Pressure block: ``n_vertices``.  Species block:
    ``n_species * n_vertices``.
    """

    n_vertices: int
    n_triangles: int
    n_species: int

    @property
    def n_displacement(self) -> int:
        return 2 * (self.n_vertices + self.n_triangles)

    @property
    def n_pressure(self) -> int:
        return self.n_vertices

    @property
    def n_species_dofs(self) -> int:
        return self.n_species * self.n_vertices

    def vertex_dof(self, vertex, component):
        return 2 * np.asarray(vertex) + component

    def bubble_dof(self, triangle, component):
        return 2 * self.n_vertices + 2 * np.asarray(triangle) + component

    def species_dof(self, species, vertex):
        return species * self.n_vertices + np.asarray(vertex)

    def species_block(self, species) -> slice:
        return slice(species * self.n_vertices, (species + 1) * self.n_vertices)
