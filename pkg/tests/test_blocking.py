import numpy as np
import pytest

from isochr import (
    build_index,
    decompose,
    gen_smooth_random,
    gen_sphere,
    marching_cubes,
    merge_regions,
)
from isochr.blocking import BlockMeta, IsoIndex
from isochr.errors import ParameterError
from isochr.isosurf import case_field


def test_decompose_128_cube():
    vol = gen_sphere((128, 128, 128), radius=20.0)
    blocks = decompose(vol, 64)
    assert len(blocks) == 8
    low = [b for b in blocks if b.block_coords == (0, 0, 0)]
    assert low[0].sample_extent == (65, 65, 65)
    hi = [b for b in blocks if b.block_coords == (1, 1, 1)]
    assert hi[0].sample_extent == (64, 64, 64)


def test_decompose_ragged_100():
    vol = gen_sphere((100, 100, 100), radius=20.0)
    blocks = decompose(vol, 64)
    assert len(blocks) == 8
    extents = {b.block_coords[0]: b.sample_extent[0] for b in blocks}
    assert extents[0] == 65  # 64 cells + ghost sample
    assert extents[1] == 36


def test_decompose_validates():
    vol = gen_sphere((8, 8, 8), radius=2.0)
    with pytest.raises(ParameterError):
        decompose(vol, 1)


def test_block_extrema_brute_force(rng):
    vol = gen_smooth_random((13, 9, 11), seed=5, num_modes=3)
    g = vol.grid
    for b in decompose(vol, 4):
        ox, oy, oz = b.sample_origin
        ex, ey, ez = b.sample_extent
        window = g[ox : ox + ex, oy : oy + ey, oz : oz + ez]
        assert b.vmin == window.min()
        assert b.vmax == window.max()


def test_blocks_tile_cells_exactly_once(rng):
    for _ in range(5):
        dims = tuple(int(d) for d in rng.integers(4, 20, size=3))
        bs = int(rng.integers(2, 8))
        vol = gen_smooth_random(dims, seed=int(rng.integers(1 << 30)), num_modes=2)
        blocks = decompose(vol, bs)
        counts = np.zeros(tuple(d - 1 for d in dims), dtype=int)
        for b in blocks:
            ox, oy, oz = b.sample_origin
            ex, ey, ez = b.sample_extent
            counts[ox : ox + ex - 1, oy : oy + ey - 1, oz : oz + ez - 1] += 1
        assert (counts == 1).all()


def test_decompose_worker_independence():
    vol = gen_smooth_random((17, 13, 15), seed=3, num_modes=3)
    assert decompose(vol, 4, workers=1) == decompose(vol, 4, workers=4)


def test_span_test():
    block = BlockMeta(0, (0, 0, 0), (0, 0, 0), (3, 3, 3), vmin=5.0, vmax=7.0)
    idx = build_index([block], [3.0, 6.0])
    assert idx.relevant[0] == frozenset()
    assert idx.relevant[1] == {0}
    assert idx.relevance_key(0) == {1}


def test_build_index_validates():
    block = BlockMeta(0, (0, 0, 0), (0, 0, 0), (3, 3, 3), vmin=0.0, vmax=1.0)
    with pytest.raises(ParameterError):
        build_index([block], [])
    with pytest.raises(ParameterError):
        build_index([block], [2.0, 1.0])
    with pytest.raises(ParameterError):
        build_index([block], [1.0, 1.0])
    with pytest.raises(ParameterError):
        build_index([block], [np.nan])


def test_index_matches_brute_force_span_scan(rng):
    # 100 random (volume, candidates) pairs against a direct rescan
    for trial in range(100):
        dims = tuple(int(d) for d in rng.integers(4, 12, size=3))
        vol = gen_smooth_random(dims, seed=trial + 1000, num_modes=2)
        ncand = int(rng.integers(1, 5))
        cands = sorted(
            float(q) for q in np.unique(np.quantile(vol.values, rng.uniform(0, 1, ncand)))
        )
        blocks = decompose(vol, int(rng.integers(2, 6)))
        idx = build_index(blocks, cands)
        g = vol.grid
        for ci, k in enumerate(idx.candidates):
            expect = set()
            for b in blocks:
                ox, oy, oz = b.sample_origin
                ex, ey, ez = b.sample_extent
                w = g[ox : ox + ex, oy : oy + ey, oz : oz + ez]
                if w.min() <= k <= w.max():
                    expect.add(b.block_id)
            assert idx.relevant[ci] == expect


def test_irrelevant_blocks_have_no_straddling_cells(rng):
    # span relevance is conservative: a pruned block can hold no surface
    for seed in range(10):
        vol = gen_smooth_random((14, 14, 14), seed=seed, num_modes=3)
        k = float(np.median(vol.values))
        blocks = decompose(vol, 5)
        idx = build_index(blocks, [k])
        g = vol.grid
        for b in blocks:
            if b.block_id in idx.relevant[0]:
                continue
            ox, oy, oz = b.sample_origin
            ex, ey, ez = b.sample_extent
            window = g[ox : ox + ex, oy : oy + ey, oz : oz + ez]
            codes = case_field(window, k).codes
            assert ((codes == 0) | (codes == 255)).all()
            assert marching_cubes(window, k=k).num_triangles == 0


def test_conservativeness_every_straddling_cell_covered(rng):
    for seed in range(5):
        vol = gen_smooth_random((15, 11, 13), seed=seed + 50, num_modes=3)
        k = float(np.median(vol.values))
        blocks = decompose(vol, 4)
        idx = build_index(blocks, [k])
        codes = case_field(vol.grid, k)
        mixed = (codes.codes != 0) & (codes.codes != 255)
        ncx, ncy, ncz = codes.cell_dims
        covered = np.zeros((ncx, ncy, ncz), dtype=bool)
        for b in blocks:
            if b.block_id not in idx.relevant[0]:
                continue
            ox, oy, oz = b.sample_origin
            ex, ey, ez = b.sample_extent
            covered[ox : ox + ex - 1, oy : oy + ey - 1, oz : oz + ez - 1] = True
        assert covered.ravel(order="F")[mixed].all()


def _synthetic_blocks(coords_to_key):
    blocks = []
    keys = {}
    for i, (coords, key) in enumerate(sorted(coords_to_key.items(), key=lambda kv: tuple(reversed(kv[0])))):
        # vmin/vmax chosen so build_index reproduces the wanted key
        blocks.append(
            BlockMeta(i, coords, tuple(4 * c for c in coords), (5, 5, 5), 0.0, 0.0)
        )
        keys[i] = key
    candidates = sorted({k for key in coords_to_key.values() for k in key})
    relevant = tuple(
        frozenset(b.block_id for b in blocks if ci in keys[b.block_id])
        for ci in candidates
    )
    index = IsoIndex(candidates=tuple(float(c) for c in candidates), relevant=relevant)
    return blocks, index


def test_merge_two_adjacent_blocks():
    blocks, index = _synthetic_blocks({(0, 0, 0): {0}, (1, 0, 0): {0}})
    regions = merge_regions(blocks, index)
    assert len(regions) == 1
    assert regions[0].block_span == ((0, 0, 0), (1, 0, 0))


def test_merge_full_grid_single_region():
    coords = {(x, y, z): {0} for x in range(2) for y in range(2) for z in range(2)}
    blocks, index = _synthetic_blocks(coords)
    regions = merge_regions(blocks, index)
    assert len(regions) == 1
    assert regions[0].num_blocks == 8


def test_merge_l_shape_scan_order():
    coords = {
        (0, 0, 0): {0},
        (1, 0, 0): {0},
        (0, 1, 0): {0},
        (1, 1, 0): {1},
    }
    blocks, index = _synthetic_blocks(coords)
    regions = merge_regions(blocks, index)
    group = [r for r in regions if r.relevance_key == frozenset({0})]
    assert [r.block_span for r in group] == [
        ((0, 0, 0), (1, 0, 0)),
        ((0, 1, 0), (0, 1, 0)),
    ]


def test_regions_partition_blocks(rng):
    for seed in range(8):
        vol = gen_smooth_random((17, 14, 12), seed=seed + 9, num_modes=3)
        qs = np.quantile(vol.values, [0.3, 0.5, 0.8])
        blocks = decompose(vol, 4)
        index = build_index(blocks, list(qs))
        regions = merge_regions(blocks, index)
        seen = set()
        for r in regions:
            lo, hi = r.block_span
            for z in range(lo[2], hi[2] + 1):
                for y in range(lo[1], hi[1] + 1):
                    for x in range(lo[0], hi[0] + 1):
                        assert (x, y, z) not in seen
                        seen.add((x, y, z))
        assert len(seen) == len(blocks)
        assert sum(r.num_blocks for r in regions) == len(blocks)


def test_merge_deterministic():
    vol = gen_smooth_random((15, 15, 15), seed=2, num_modes=3)
    blocks = decompose(vol, 4)
    index = build_index(blocks, [float(np.median(vol.values))])
    assert merge_regions(blocks, index) == merge_regions(blocks, index)


def test_region_key_requires_all_member_blocks_relevant(rng):
    vol = gen_smooth_random((15, 15, 15), seed=11, num_modes=3)
    ks = [float(q) for q in np.quantile(vol.values, [0.4, 0.6])]
    blocks = decompose(vol, 4)
    index = build_index(blocks, ks)
    by_id = {b.block_id: b for b in blocks}
    for r in merge_regions(blocks, index):
        lo, hi = r.block_span
        members = [
            b for b in blocks
            if lo[0] <= b.block_coords[0] <= hi[0]
            and lo[1] <= b.block_coords[1] <= hi[1]
            and lo[2] <= b.block_coords[2] <= hi[2]
        ]
        for ci, k in enumerate(index.candidates):
            expect = all(by_id[b.block_id].vmin <= k <= by_id[b.block_id].vmax for b in members)
            assert (ci in r.relevance_key) == expect
