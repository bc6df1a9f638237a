import numpy as np

from mechanochem import mesh as msh
from mechanochem import vtkio


def test_legacy_vtk_structure(tmp_path):
    mesh = msh.rectangle_mesh((0, 1, 0, 1), 2, 2)
    path = tmp_path / "snap.vtk"
    scalars = {"w1": np.arange(mesh.n_vertices, dtype=float)}
    vectors = {"displacement": np.ones((mesh.n_vertices, 2))}
    vtkio.write_vtk(path, mesh, scalars, vectors)
    lines = path.read_text().splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    assert lines[4] == f"POINTS {mesh.n_vertices} double"
    cells_at = lines.index(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    # every cell line lists three 0-based vertex ids
    for line in lines[cells_at + 1:cells_at + 1 + mesh.n_triangles]:
        toks = line.split()
        assert toks[0] == "3"
        assert all(0 <= int(t) < mesh.n_vertices for t in toks[1:])
    types_at = lines.index(f"CELL_TYPES {mesh.n_triangles}")
    assert all(line == "5" for line in
               lines[types_at + 1:types_at + 1 + mesh.n_triangles])
    assert f"POINT_DATA {mesh.n_vertices}" in lines
    assert "SCALARS w1 double 1" in lines
    assert "VECTORS displacement double" in lines
    # point coordinates parse as floats with z = 0
    for line in lines[5:5 + mesh.n_vertices]:
        x, y, z = map(float, line.split())
        assert z == 0.0


def test_snapshot_files(tmp_path):
    from mechanochem.scenario import ScenarioConfig

    cfg = ScenarioConfig()
    system, coupler, w0 = cfg.build()
    state = coupler.initial_state(w0, 0.0, 1e-3)
    paths = vtkio.write_snapshot(tmp_path, system, state, 3)
    assert len(paths) == 2
    for p in paths:
        text = open(p).read()
        assert "w1" in text and "w2" in text
