import numpy as np
import pytest

from isochr import (
    Volume,
    build_chr,
    case_field,
    gen_smooth_random,
    gen_sphere,
    read_chr,
    request,
    stitch,
    write_chr,
)
from isochr.chr_archive import MAGIC
from isochr.errors import (
    BadMagicError,
    ChecksumError,
    InsufficientAccuracyError,
    IsochrError,
    NoSuchIsovalueError,
    ParameterError,
    VersionError,
)


@pytest.fixture(scope="module")
def sphere_archive():
    vol = gen_sphere((24, 24, 24), radius=8.0)
    archive = build_chr(vol, [-4.0, 0.0, 5.0], block_size=8, accuracy=1.0)
    return vol, archive


def test_relevant_regions_cover_surface(sphere_archive):
    vol, archive = sphere_archive
    ci = archive.candidates.index(0.0)
    codes = case_field(vol.grid, 0.0)
    mixed = (codes.codes != 0) & (codes.codes != 255)
    covered = np.zeros(codes.cell_dims, dtype=bool, order="F")
    for r in archive.regions:
        if not r.is_relevant(ci):
            continue
        ox, oy, oz = r.sample_origin
        ex, ey, ez = r.sample_extent
        covered[ox : ox + ex - 1, oy : oy + ey - 1, oz : oz + ez - 1] = True
    assert covered.ravel(order="F")[mixed].all()


def test_constant_field_prunes_everything():
    vol = Volume(dims=(8, 8, 8), values=np.full(512, 3.0))
    with pytest.warns(UserWarning):
        archive = build_chr(vol, [7.0], block_size=4, out_of_range="warn")
    assert all(not r.relevance for r in archive.regions)
    recon = request(archive, 7.0, drop_pruned=False)
    assert np.array_equal(stitch(recon, vol.dims), vol.grid)


def test_out_of_range_candidate_refused():
    vol = gen_sphere((8, 8, 8), radius=2.0)
    with pytest.raises(ParameterError):
        build_chr(vol, [1e6], block_size=4)


def test_rebuild_is_byte_identical(tmp_path):
    vol = gen_smooth_random((20, 20, 20), seed=8, num_modes=3)
    k = float(np.median(vol.values))
    a = tmp_path / "a.chr"
    b = tmp_path / "b.chr"
    write_chr(build_chr(vol, [k], block_size=8, accuracy=0.95), a)
    write_chr(build_chr(vol, [k], block_size=8, accuracy=0.95), b)
    assert a.read_bytes() == b.read_bytes()


def test_write_read_roundtrip(tmp_path, sphere_archive):
    _, archive = sphere_archive
    path = tmp_path / "s.chr"
    write_chr(archive, path)
    back = read_chr(path)
    assert back == archive


def test_build_workers_equivalent(tmp_path):
    vol = gen_smooth_random((20, 20, 20), seed=12, num_modes=3)
    k = float(np.median(vol.values))
    a = build_chr(vol, [k], block_size=8, workers=1)
    b = build_chr(vol, [k], block_size=8, workers=4)
    assert a == b


def test_truncated_file_detected(tmp_path, sphere_archive):
    _, archive = sphere_archive
    path = tmp_path / "t.chr"
    write_chr(archive, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 10])
    with pytest.raises(ChecksumError):
        read_chr(path)


def test_bad_magic_and_version(tmp_path, sphere_archive):
    _, archive = sphere_archive
    path = tmp_path / "m.chr"
    write_chr(archive, path)
    blob = bytearray(path.read_bytes())
    bad = bytearray(blob)
    bad[:4] = b"NOPE"
    path.write_bytes(bytes(bad))
    with pytest.raises(BadMagicError):
        read_chr(path)
    bad = bytearray(blob)
    bad[4] = 99  # version field; fix the trailing checksum so only version trips
    import struct
    import zlib

    bad[-4:] = struct.pack("<I", zlib.crc32(bytes(bad[:-4])))
    path.write_bytes(bytes(bad))
    with pytest.raises(VersionError):
        read_chr(path)


def test_single_byte_corruption_always_detected(tmp_path, rng):
    vol = gen_smooth_random((10, 10, 10), seed=3, num_modes=2)
    k = float(np.median(vol.values))
    archive = build_chr(vol, [k], block_size=4)
    path = tmp_path / "c.chr"
    write_chr(archive, path)
    blob = bytearray(path.read_bytes())
    positions = set(range(0, 64)) | {
        int(p) for p in rng.integers(0, len(blob), size=200)
    } | set(range(len(blob) - 8, len(blob)))
    corrupt = tmp_path / "corrupt.chr"
    for pos in sorted(positions):
        tampered = bytearray(blob)
        tampered[pos] ^= 0x01
        corrupt.write_bytes(bytes(tampered))
        with pytest.raises(IsochrError):
            read_chr(corrupt)


def test_request_selects_relevant_only(sphere_archive):
    _, archive = sphere_archive
    recon = request(archive, 0.0, drop_pruned=True)
    rep = recon.report
    assert rep.regions_returned < rep.regions_total
    assert rep.bytes_touched < rep.bytes_total
    ci = rep.candidate_index
    expected = archive.header_table_nbytes() + sum(
        r.payload_nbytes for r in archive.regions if r.is_relevant(ci)
    )
    assert rep.bytes_touched == expected


def test_request_full_includes_everything(sphere_archive):
    _, archive = sphere_archive
    recon = request(archive, 0.0, drop_pruned=False)
    assert recon.report.regions_returned == recon.report.regions_total
    assert recon.report.bytes_touched == recon.report.bytes_total - 4


def test_request_unknown_isovalue(sphere_archive):
    _, archive = sphere_archive
    with pytest.raises(NoSuchIsovalueError):
        request(archive, 0.25)


def test_request_snap_tie_breaks_low(sphere_archive):
    _, archive = sphere_archive
    recon = request(archive, 2.5, snap=True)  # equidistant from 0.0 and 5.0
    assert recon.report.isovalue == 0.0
    assert recon.report.snapped
    recon = request(archive, 4.9, snap=True)
    assert recon.report.isovalue == 5.0


def test_request_rejects_higher_accuracy():
    vol = gen_sphere((12, 12, 12), radius=4.0)
    archive = build_chr(vol, [0.0], block_size=6, accuracy=0.9)
    with pytest.raises(InsufficientAccuracyError) as exc:
        request(archive, 0.0, accuracy=0.95)
    assert exc.value.requested == 0.95
    assert exc.value.stored == 0.9
    request(archive, 0.0, accuracy=0.5)  # weaker ask is fine


def test_reconstruction_respects_region_bounds(sphere_archive):
    vol, archive = sphere_archive
    recon = request(archive, 0.0, drop_pruned=False)
    g = vol.grid
    for region, samples in recon.regions:
        ox, oy, oz = region.sample_origin
        ex, ey, ez = region.sample_extent
        orig = g[ox : ox + ex, oy : oy + ey, oz : oz + ez]
        assert np.abs(samples - orig).max() <= region.error_bound


def test_stitched_field_within_bounds(sphere_archive):
    vol, archive = sphere_archive
    recon = request(archive, 0.0, drop_pruned=False)
    stitched = stitch(recon, vol.dims)
    bound = max(r.error_bound for r in archive.regions)
    assert np.isfinite(stitched).all()
    assert np.abs(stitched - vol.grid).max() <= bound


def test_lossless_candidate_stitches_bit_exact():
    # a sample exactly on the candidate forces a zero bound everywhere
    # it matters; with one region the whole grid is verbatim
    values = np.arange(27.0)
    vol = Volume(dims=(3, 3, 3), values=values)
    archive = build_chr(vol, [13.0], block_size=4)
    assert archive.regions[0].error_bound == 0.0
    recon = request(archive, 13.0, drop_pruned=False)
    assert np.array_equal(stitch(recon, vol.dims), vol.grid)


def test_request_worker_independence(sphere_archive):
    _, archive = sphere_archive
    a = request(archive, 0.0, drop_pruned=False, workers=1)
    b = request(archive, 0.0, drop_pruned=False, workers=4)
    assert a.report == b.report
    for (ra, sa), (rb, sb) in zip(a.regions, b.regions):
        assert ra == rb
        assert np.array_equal(sa, sb)


def test_ghost_overlap_owner_wins():
    # ramp along x; k = 1.0 makes the low block lossless (exact sample
    # hit) and leaves the high block pruned with a lossy loose bound
    x = np.arange(9, dtype=np.float64)
    vol = Volume(dims=(9, 4, 4), values=np.tile(x, 16))
    archive = build_chr(vol, [1.0], block_size=4)
    assert len(archive.regions) == 2
    by_origin = {r.sample_origin: r for r in archive.regions}
    recon = request(archive, 1.0, drop_pruned=False)
    stitched = stitch(recon, vol.dims)
    arrays = {r.sample_origin: s for r, s in recon.regions}
    low = min(arrays)
    ex = by_origin[low].sample_extent[0]
    shared_x = low[0] + ex - 1  # ghost plane shared with the next region
    assert np.array_equal(stitched[shared_x, :, :], arrays[low][ex - 1, :, :])


def test_pluggable_codec_flows_through(tmp_path):
    from isochr.codec import CompressedBlock, register_codec
    import zlib

    def xor_compress(samples, error_bound, source_dtype="f64"):
        # toy lossless backend: raw f64 bytes, xor-masked
        grid = np.asfortranarray(np.asarray(samples, dtype=np.float64))
        payload = bytes(b ^ 0x5A for b in grid.ravel(order="F").astype("<f8").tobytes())
        return CompressedBlock(
            codec_id=200,
            dims=grid.shape,
            error_bound=float(error_bound),
            source_dtype=source_dtype,
            payload=payload,
            checksum=zlib.crc32(payload),
        )

    def xor_decompress(block):
        n = block.dims[0] * block.dims[1] * block.dims[2]
        raw = bytes(b ^ 0x5A for b in block.payload)
        return (
            np.frombuffer(raw, dtype="<f8", count=n)
            .astype(np.float64)
            .reshape(block.dims, order="F")
        )

    register_codec(200, "xor-test", xor_decompress)
    vol = gen_sphere((12, 12, 12), radius=4.0)
    archive = build_chr(vol, [0.0], block_size=6, codec=xor_compress)
    assert all(r.block.codec_id == 200 for r in archive.regions)
    path = tmp_path / "xor.chr"
    write_chr(archive, path)
    recon = request(read_chr(path), 0.0, drop_pruned=False)
    assert np.array_equal(stitch(recon, vol.dims), vol.grid)


def test_archives_differ_only_in_bound_fields(tmp_path):
    vol = gen_smooth_random((16, 16, 16), seed=6, num_modes=3)
    k = float(np.median(vol.values))
    a = build_chr(vol, [k], block_size=8, accuracy=1.0)
    b = build_chr(vol, [k], block_size=8, accuracy=0.8)
    assert len(a.regions) == len(b.regions)
    for ra, rb in zip(a.regions, b.regions):
        assert ra.region_id == rb.region_id
        assert ra.block_span == rb.block_span
        assert ra.sample_origin == rb.sample_origin
        assert ra.sample_extent == rb.sample_extent
        assert ra.relevance == rb.relevance
        if ra.relevance:
            assert ra.error_bound <= rb.error_bound
        assert ra.accuracy == 1.0 and rb.accuracy == 0.8
