"""Benchmark the compiled element kernels against the pure numpy fallback.

Both backends are imported directly (independent of the package's import-time
selection) and timed on identical inputs; agreement is checked alongside.

Run:  python3 benchmarks/bench_kernels.py [--nx 160] [--repeats 7]
"""

import argparse
import time

import numpy as np

from mechanochem import mesh as msh
from mechanochem.kernels import _fallback
from mechanochem.spaces import quadrature

try:
    from mechanochem.kernels import _core
except ImportError:
    _core = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=160,
                    help="cells per direction of the benchmark layer")
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()

    mesh, _, _ = msh.build_bilayer((0, 1, 0, 1), (0, 1, 1, 1.4),
                                   args.nx, args.nx, max(1, args.nx // 2))
    rule2 = quadrature(2)
    rule6 = quadrature(6)
    rng = np.random.default_rng(0)

    area, grads = _fallback.tri_geometry(mesh.vertices, mesh.triangles)
    nt = mesh.n_triangles
    nq = rule2.points.shape[0]
    coeff1 = rng.uniform(0.5, 2.0, nt)
    coeff_qp = rng.uniform(0.5, 2.0, (nt, nq))
    vel = rng.normal(size=(nt, nq, 2))
    load = rng.normal(size=(nt, nq))

    cases = [
        ("tri_geometry", lambda b: b.tri_geometry(mesh.vertices, mesh.triangles)),
        ("p1_mass", lambda b: b.p1_mass(area)),
        ("p1_stiffness", lambda b: b.p1_stiffness(area, grads, coeff1)),
        ("p1_mass_coeff", lambda b: b.p1_mass_coeff(area, coeff_qp, rule2.points,
                                                    rule2.weights)),
        ("p1_advection", lambda b: b.p1_advection(area, grads, vel, rule2.points,
                                                  rule2.weights)),
        ("p1_load", lambda b: b.p1_load(area, load, rule2.points, rule2.weights)),
        ("mini_elasticity", lambda b: b.mini_elasticity(area, grads, 1.7,
                                                        rule6.points, rule6.weights)),
    ]

    print(f"mesh: {nt} triangles, {mesh.n_vertices} vertices; "
          f"best of {args.repeats} runs")
    header = f"{'kernel':18s} {'numpy [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s} {'max|diff|':>10s}"
    print(header)
    print("-" * len(header))
    for name, call in cases:
        t_py, out_py = best_of(lambda: call(_fallback), args.repeats)
        if _core is None:
            print(f"{name:18s} {1e3 * t_py:12.3f} {'n/a':>12s} {'n/a':>8s}")
            continue
        t_c, out_c = best_of(lambda: call(_core), args.repeats)
        ref = out_py if isinstance(out_py, tuple) else (out_py,)
        got = out_c if isinstance(out_c, tuple) else (out_c,)
        dev = max(float(np.max(np.abs(r - g))) for r, g in zip(ref, got))
        print(f"{name:18s} {1e3 * t_py:12.3f} {1e3 * t_c:12.3f} "
              f"{t_py / t_c:8.2f} {dev:10.2e}")


if __name__ == "__main__":
    main()
