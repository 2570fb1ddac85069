"""Brute-force marching-cubes reference for cross-checking the extractor.

Deliberately naive: one cell at a time, no vertex sharing, no
vectorization, interpolation along the table's corner pairs. Shares
only the static lookup tables with the production code.
"""

import numpy as np

from isochr.mc_tables import CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE


def reference_triangles(grid, k, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """All triangles as a (nt, 3, 3) float array of world coordinates.

    Cells are visited z-outer, y, x-inner and triangles emitted in
    table order, matching the production scan so outputs can be
    compared row by row.
    """
    grid = np.asarray(grid, dtype=np.float64)
    nx, ny, nz = grid.shape
    tris = []
    for cz in range(nz - 1):
        for cy in range(ny - 1):
            for cx in range(nx - 1):
                corners = []
                values = []
                for ox, oy, oz in CORNER_OFFSETS:
                    px, py, pz = cx + ox, cy + oy, cz + oz
                    corners.append((px, py, pz))
                    values.append(grid[px, py, pz])
                code = 0
                for i, v in enumerate(values):
                    if v >= k:
                        code |= 1 << i
                row = TRI_TABLE[code]
                for e0, e1, e2 in zip(row[0::3], row[1::3], row[2::3]):
                    if e0 < 0:
                        break
                    tri = []
                    for e in (e0, e1, e2):
                        a, b = EDGE_CORNERS[e]
                        va, vb = values[a], values[b]
                        if vb == va:
                            t = 0.0
                        else:
                            t = (k - va) / (vb - va)
                        pa = np.array(corners[a], dtype=np.float64)
                        pb = np.array(corners[b], dtype=np.float64)
                        p = pa + t * (pb - pa)
                        tri.append(
                            [origin[i] + p[i] * spacing[i] for i in range(3)]
                        )
                    tris.append(tri)
    if not tris:
        return np.empty((0, 3, 3), dtype=np.float64)
    return np.asarray(tris, dtype=np.float64)


def read_obj(path):
    """Minimal OBJ reader: (vertices, triangles) int 0-based."""
    verts = []
    faces = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p) - 1 for p in parts[1:4]])
    verts = np.asarray(verts, dtype=np.float64) if verts else np.empty((0, 3))
    faces = np.asarray(faces, dtype=np.int64) if faces else np.empty((0, 3), dtype=np.int64)
    return verts, faces
