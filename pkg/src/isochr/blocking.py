"""Domain decomposition, isovalue indexing, and region merging.

The cell grid (one cell per 8 neighboring samples) is tiled into cubic
blocks. Each block's sample window carries a one-sample ghost layer on
its high faces so every owned cell is self-contained. Blocks are
classified per candidate isovalue by the span test vmin <= k <= vmax,
then blocks with identical relevance are greedily merged into larger
rectangular regions.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .volume import Volume


@dataclass(frozen=True)
class BlockMeta:
    """One decomposition block and its sample-window extrema."""

    block_id: int
    block_coords: tuple[int, int, int]
    sample_origin: tuple[int, int, int]
    sample_extent: tuple[int, int, int]
    vmin: float
    vmax: float


@dataclass(frozen=True)
class IsoIndex:
    """Candidate isovalues and, per candidate, the relevant block ids."""

    candidates: tuple[float, ...]
    relevant: tuple[frozenset[int], ...]

    def relevance_key(self, block_id: int) -> frozenset[int]:
        """Indices of the candidates this block is relevant to."""
        return frozenset(
            ci for ci, ids in enumerate(self.relevant) if block_id in ids
        )


@dataclass(frozen=True)
class Region:
    """A rectangular box of whole blocks sharing one relevance key."""

    region_id: int
    block_span: tuple[tuple[int, int, int], tuple[int, int, int]]  # lo, hi inclusive
    sample_origin: tuple[int, int, int]
    sample_extent: tuple[int, int, int]
    relevance_key: frozenset[int]

    @property
    def num_blocks(self) -> int:
        lo, hi = self.block_span
        return (hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1)


def block_grid_shape(dims, block_size: int) -> tuple[int, int, int]:
    """Number of blocks per axis for a volume of the given sample dims."""
    return tuple(max(1, -(-(d - 1) // block_size)) for d in dims)


def _window(bc: int, block_size: int, nsamples: int) -> tuple[int, int]:
    # sample window of block index bc along one axis: owned cells plus
    # the shared high-face sample (ghost except at the volume boundary)
    lo = bc * block_size
    hi = min((bc + 1) * block_size, nsamples - 1)
    return lo, hi - lo + 1


def decompose(volume: Volume, block_size: int, workers: int = 1) -> list[BlockMeta]:
    """Tile the volume's cell grid into blocks and scan their extrema.

    Per-block extrema scans may run on a thread pool; results are
    assembled in block_id order so the output does not depend on the
    worker count.
    """
    if block_size < 2:
        raise ParameterError(f"block_size must be >= 2, got {block_size}")
    if any(d < 2 for d in volume.dims):
        raise ParameterError(f"volume dims must be >= 2 per axis, got {volume.dims}")
    nbx, nby, nbz = block_grid_shape(volume.dims, block_size)
    grid = volume.grid

    def make(block_id: int) -> BlockMeta:
        bz, rem = divmod(block_id, nbx * nby)
        by, bx = divmod(rem, nbx)
        ox, ex = _window(bx, block_size, volume.dims[0])
        oy, ey = _window(by, block_size, volume.dims[1])
        oz, ez = _window(bz, block_size, volume.dims[2])
        window = grid[ox : ox + ex, oy : oy + ey, oz : oz + ez]
        return BlockMeta(
            block_id=block_id,
            block_coords=(bx, by, bz),
            sample_origin=(ox, oy, oz),
            sample_extent=(ex, ey, ez),
            vmin=float(window.min()),
            vmax=float(window.max()),
        )

    ids = range(nbx * nby * nbz)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(make, ids))
    return [make(i) for i in ids]


def build_index(blocks: list[BlockMeta], candidates) -> IsoIndex:
    """Classify blocks per candidate isovalue by the span test."""
    cands = [float(k) for k in candidates]
    if not cands:
        raise ParameterError("candidates must be non-empty")
    if any(not np.isfinite(k) for k in cands):
        raise ParameterError("candidates must be finite")
    if any(later <= earlier for earlier, later in zip(cands, cands[1:])):
        raise ParameterError(f"candidates must be strictly increasing, got {cands}")
    relevant = tuple(
        frozenset(b.block_id for b in blocks if b.vmin <= k <= b.vmax)
        for k in cands
    )
    return IsoIndex(candidates=tuple(cands), relevant=relevant)


def merge_regions(blocks: list[BlockMeta], index: IsoIndex) -> list[Region]:
    """Greedily merge same-relevance blocks into rectangular regions.

    Blocks are scanned lexicographically (z, then y, then x). A region
    grows maximally along +x, then extends that run along +y while the
    whole slab is unclaimed and in-group, then likewise along +z.
    Deterministic; pruned blocks (empty relevance) merge too.
    """
    if not blocks:
        return []
    nbx = max(b.block_coords[0] for b in blocks) + 1
    nby = max(b.block_coords[1] for b in blocks) + 1
    nbz = max(b.block_coords[2] for b in blocks) + 1
    by_coords = {b.block_coords: b for b in blocks}
    keys = {b.block_coords: index.relevance_key(b.block_id) for b in blocks}
    claimed: set[tuple[int, int, int]] = set()

    def free_run(x0, x1, y0, y1, z0, z1, key) -> bool:
        for z in range(z0, z1 + 1):
            for y in range(y0, y1 + 1):
                for x in range(x0, x1 + 1):
                    c = (x, y, z)
                    if c in claimed or keys[c] != key:
                        return False
        return True

    regions: list[Region] = []
    for bz in range(nbz):
        for by in range(nby):
            for bx in range(nbx):
                seed = (bx, by, bz)
                if seed in claimed:
                    continue
                key = keys[seed]
                hx = bx
                while hx + 1 < nbx and free_run(hx + 1, hx + 1, by, by, bz, bz, key):
                    hx += 1
                hy = by
                while hy + 1 < nby and free_run(bx, hx, hy + 1, hy + 1, bz, bz, key):
                    hy += 1
                hz = bz
                while hz + 1 < nbz and free_run(bx, hx, by, hy, hz + 1, hz + 1, key):
                    hz += 1
                for z in range(bz, hz + 1):
                    for y in range(by, hy + 1):
                        for x in range(bx, hx + 1):
                            claimed.add((x, y, z))
                lo_block = by_coords[seed]
                hi_block = by_coords[(hx, hy, hz)]
                origin = lo_block.sample_origin
                extent = tuple(
                    hi_block.sample_origin[a] + hi_block.sample_extent[a] - origin[a]
                    for a in range(3)
                )
                regions.append(
                    Region(
                        region_id=len(regions),
                        block_span=((bx, by, bz), (hx, hy, hz)),
                        sample_origin=origin,
                        sample_extent=extent,
                        relevance_key=key,
                    )
                )
    return regions
