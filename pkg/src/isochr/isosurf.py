"""Marching-cubes extraction, case codes, and topology verification.

The inside convention everywhere is value >= k, matching
:mod:`isochr.bound`. Two extraction paths produce bit-identical
meshes: a numba loop kernel and a vectorized numpy fallback, selected
by :data:`isochr.backend.USE_NUMBA`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backend, kernels
from .errors import ParameterError
from .mc_tables import (
    CORNER_OFFSETS,
    EDGE_AXIS,
    EDGE_LOW,
    NTRI_TABLE,
    TRI_TABLE,
)


@dataclass(frozen=True)
class TriangleMesh:
    """Triangle soup with shared vertices in world coordinates."""

    vertices: np.ndarray  # (nv, 3) float64
    triangles: np.ndarray  # (nt, 3) int32

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    def area(self) -> float:
        """Total surface area."""
        if self.num_triangles == 0:
            return 0.0
        p = self.vertices[self.triangles]
        cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        return float(0.5 * np.linalg.norm(cross, axis=1).sum())


@dataclass(frozen=True)
class CaseField:
    """Per-cell 8-bit case codes; bit i = corner (i&1, i>>1&1, i>>2&1) inside."""

    cell_dims: tuple[int, int, int]
    codes: np.ndarray  # flat uint8, x fastest


@dataclass(frozen=True)
class TopologyReport:
    """Comparison of two fields' case codes at one isovalue."""

    preserved_fraction: float
    differing_cells: int
    total_cells: int
    first_diff: tuple[int, int, int] | None


def cell_case(corners, k: float) -> int:
    """8-bit code of one cell: bit i set iff corners[i] >= k."""
    code = 0
    for i, v in enumerate(corners):
        if v >= k:
            code |= 1 << i
    return code


def case_field(samples, k: float) -> CaseField:
    """Case codes for every cell of a sample grid."""
    grid = np.asarray(samples, dtype=np.float64)
    if grid.ndim != 3 or any(n < 2 for n in grid.shape):
        raise ParameterError(f"need a 3D grid with >= 2 samples per axis, got {grid.shape}")
    inside = grid >= k
    codes = np.zeros(tuple(n - 1 for n in grid.shape), dtype=np.uint8)
    for i in range(8):
        ox, oy, oz = i & 1, (i >> 1) & 1, (i >> 2) & 1
        nx, ny, nz = codes.shape
        codes |= inside[ox : ox + nx, oy : oy + ny, oz : oz + nz].astype(np.uint8) << i
    return CaseField(cell_dims=codes.shape, codes=codes.ravel(order="F"))


def verify_topology(original, reconstructed, k: float) -> TopologyReport:
    """Fraction of cells whose case codes agree between two fields."""
    a = np.asarray(original, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch: {a.shape} vs {b.shape}")
    ca = case_field(a, k)
    cb = case_field(b, k)
    diff = ca.codes != cb.codes
    ndiff = int(diff.sum())
    total = ca.codes.size
    first = None
    if ndiff:
        flat = int(np.argmax(diff))
        ncx, ncy, _ = ca.cell_dims
        cz, rem = divmod(flat, ncx * ncy)
        cy, cx = divmod(rem, ncx)
        first = (cx, cy, cz)
    return TopologyReport(
        preserved_fraction=(total - ndiff) / total,
        differing_cells=ndiff,
        total_cells=total,
        first_diff=first,
    )


def _mc_vectorized(grid: np.ndarray, k: float) -> tuple[np.ndarray, np.ndarray]:
    """Pure-numpy extraction; replicates the loop kernel's ordering.

    Works on the flattened (cell scan order, table slot) emission
    sequence: first occurrence of a canonical edge id assigns the next
    vertex index, exactly as the loop does.
    """
    nx, ny, nz = grid.shape
    ncx, ncy, ncz = nx - 1, ny - 1, nz - 1
    inside = grid >= k
    codes = np.zeros((ncx, ncy, ncz), dtype=np.uint8)
    for i in range(8):
        ox, oy, oz = (int(v) for v in CORNER_OFFSETS[i])
        codes |= inside[ox : ox + ncx, oy : oy + ncy, oz : oz + ncz].astype(np.uint8) << i
    codes_flat = codes.ravel(order="F")
    active = np.flatnonzero((codes_flat != 0) & (codes_flat != 255))
    if active.size == 0:
        return np.empty((0, 3), dtype=np.float64), np.empty((0, 3), dtype=np.int32)

    cx = active % ncx
    cy = (active // ncx) % ncy
    cz = active // (ncx * ncy)
    acodes = codes_flat[active]
    rows = TRI_TABLE[acodes].astype(np.int64)  # (na, 16)
    nslots = 3 * NTRI_TABLE[acodes]
    slot_mask = np.arange(16)[None, :] < nslots[:, None]
    local_e = rows[slot_mask]  # row-major: cell order then slot order
    reps = nslots
    ecx = np.repeat(cx, reps) + EDGE_LOW[local_e, 0]
    ecy = np.repeat(cy, reps) + EDGE_LOW[local_e, 1]
    ecz = np.repeat(cz, reps) + EDGE_LOW[local_e, 2]
    eax = EDGE_AXIS[local_e]
    eids = ((ecz * ny + ecy) * nx + ecx) * 3 + eax

    uniq, first_pos = np.unique(eids, return_index=True)
    order = np.argsort(first_pos, kind="stable")
    rank = np.empty(uniq.size, dtype=np.int64)
    rank[order] = np.arange(uniq.size)
    tris = rank[np.searchsorted(uniq, eids)].astype(np.int32).reshape(-1, 3)

    # vertex per unique edge, in first-touch order
    ft = uniq[order]
    vax = ft % 3
    pt = ft // 3
    px = pt % nx
    py = (pt // nx) % ny
    pz = pt // (nx * ny)
    s0 = grid[px, py, pz]
    s1 = grid[
        px + (vax == 0).astype(np.int64),
        py + (vax == 1).astype(np.int64),
        pz + (vax == 2).astype(np.int64),
    ]
    denom = s1 - s0
    degenerate = denom == 0.0
    t = np.where(degenerate, 0.0, (k - s0) / np.where(degenerate, 1.0, denom))
    verts = np.empty((ft.size, 3), dtype=np.float64)
    verts[:, 0] = px
    verts[:, 1] = py
    verts[:, 2] = pz
    for ax in range(3):
        sel = vax == ax
        verts[sel, ax] = verts[sel, ax] + t[sel]
    return verts, tris


def marching_cubes(samples, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), k: float = 0.0) -> TriangleMesh:
    """Extract the isosurface of a sample grid at isovalue k.

    Deterministic: cells are scanned z-outer, y, x-inner, triangle
    edges in table order, and shared edges reuse one vertex. Vertex
    output is identical for the numba and numpy paths.
    """
    grid = np.asarray(samples, dtype=np.float64)
    if grid.ndim != 3 or any(n < 2 for n in grid.shape):
        raise ParameterError(f"need a 3D grid with >= 2 samples per axis, got {grid.shape}")
    grid = np.asfortranarray(grid)
    k = float(k)
    if backend.USE_NUMBA:
        lattice, tris = kernels.mc_extract(
            grid, k, NTRI_TABLE, TRI_TABLE, EDGE_AXIS, EDGE_LOW
        )
    else:
        lattice, tris = _mc_vectorized(grid, k)
    verts = np.empty_like(lattice)
    for ax in range(3):
        verts[:, ax] = origin[ax] + lattice[:, ax] * spacing[ax]
    return TriangleMesh(vertices=verts, triangles=tris)


def merge_meshes(meshes) -> TriangleMesh:
    """Concatenate meshes, offsetting triangle indices. No seam welding."""
    meshes = list(meshes)
    if not meshes:
        return TriangleMesh(
            vertices=np.empty((0, 3), dtype=np.float64),
            triangles=np.empty((0, 3), dtype=np.int32),
        )
    verts = []
    tris = []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + offset)
        offset += m.num_vertices
    return TriangleMesh(
        vertices=np.concatenate(verts, axis=0),
        triangles=np.concatenate(tris, axis=0).astype(np.int32),
    )


def export_obj(mesh: TriangleMesh, path) -> None:
    """Write ASCII OBJ (1-based indices), deterministic line order."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# isochr isosurface: {mesh.num_vertices} vertices, {mesh.num_triangles} triangles\n")
        for x, y, z in mesh.vertices:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
