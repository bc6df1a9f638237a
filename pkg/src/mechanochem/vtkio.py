"""Legacy VTK ASCII output (version 3.0, UNSTRUCTURED_GRID).

One file per subdomain and snapshot: point scalars for each species and the
pressure, displacement magnitude as a scalar and the displacement itself as a
vector field.  The format choice favours viewer ubiquity.
"""

from __future__ import annotations

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, mesh, point_scalars=None, point_vectors=None):
    """Write one triangulation with named point data to ``path``."""
    point_scalars = point_scalars or {}
    point_vectors = point_vectors or {}
    n_pts = mesh.n_vertices
    n_cells = mesh.n_triangles
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"mechanochem snapshot ({mesh.subdomain})\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n_pts} double\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.10g} {y:.10g} 0\n")
        fh.write(f"CELLS {n_cells} {4 * n_cells}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"3 {i} {j} {k}\n")
        fh.write(f"CELL_TYPES {n_cells}\n")
        fh.write("\n".join([str(VTK_TRIANGLE)] * n_cells) + "\n")
        if point_scalars or point_vectors:
            fh.write(f"POINT_DATA {n_pts}\n")
        for name, values in point_scalars.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.10g}" for v in np.asarray(values)) + "\n")
        for name, values in point_vectors.items():
            fh.write(f"VECTORS {name} double\n")
            arr = np.asarray(values)
            for row in arr:
                fh.write(f"{row[0]:.10g} {row[1]:.10g} 0\n")


def snapshot_fields(system, state, side):
    """Collect the standard per-side output fields of one bilayer state."""
    mesh = system.meshes[side]
    V = mesh.n_vertices
    w = state.step.w[system.slices[side]]
    scalars = {}
    for i in range(system.m):
        scalars[f"w{i + 1}"] = w[i * V:(i + 1) * V]
    vectors = {}
    if state.u[side].size:
        ux = state.u[side][0:2 * V:2]
        uy = state.u[side][1:2 * V:2]
        scalars["u_magnitude"] = np.hypot(ux, uy)
        scalars["pressure"] = state.p[side]
        vectors["displacement"] = np.column_stack([ux, uy])
    return scalars, vectors


def write_snapshot(directory, system, state, index):
    """Write both subdomain files of one snapshot; returns the paths."""
    paths = []
    for side in ("D", "E"):
        scalars, vectors = snapshot_fields(system, state, side)
        path = f"{directory}/snapshot_{side}_{index:06d}.vtk"
        write_vtk(path, system.meshes[side], scalars, vectors)
        paths.append(path)
    return paths
