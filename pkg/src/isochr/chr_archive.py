"""The CHR archive: indexed, compressed regions keyed by candidate isovalues.

Building an archive runs the full producer side: decompose into
blocks, classify per candidate, merge into regions, derive each
region's topology-preserving error bound, and compress. A request
selects only the regions relevant to one candidate, which is what
makes remote isosurface extraction cheap: untouched payload bytes are
never streamed.

On-disk layout (all little-endian) is documented field by field in
FORMAT.md. Rebuilding from identical inputs yields identical bytes.
"""

from __future__ import annotations

import struct
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import codec as codec_mod
from .blocking import build_index, decompose, merge_regions
from .bound import (
    DEFAULT_LOOSE_FRACTION,
    DEFAULT_SAFETY_FACTOR,
    MODE_PAPER,
    MODE_STRICT,
    region_bound,
)
from .codec import CompressedBlock
from .errors import (
    BadMagicError,
    ChecksumError,
    InsufficientAccuracyError,
    NoSuchIsovalueError,
    ParameterError,
    VersionError,
)
from .volume import DTYPE_TAGS, Volume

MAGIC = b"CHR1"
VERSION = 1

BOUND_MODE_TAGS = {MODE_STRICT: 0, MODE_PAPER: 1}
_MODE_FROM_TAG = {v: k for k, v in BOUND_MODE_TAGS.items()}

_FILE_HEADER = struct.Struct("<4sH3I3dBIdd")  # magic, version, dims, spacing, dtype, block_size, vmin, vmax
_REGION_FIXED = struct.Struct("<I3I3I3I3IBddQQ")


@dataclass(frozen=True)
class ArchiveRegion:
    """Region-table entry plus its compressed payload."""

    region_id: int
    block_span: tuple[tuple[int, int, int], tuple[int, int, int]]
    sample_origin: tuple[int, int, int]
    sample_extent: tuple[int, int, int]
    relevance: frozenset[int]  # candidate indices
    bound_mode: str
    accuracy: float
    error_bound: float
    block: CompressedBlock

    @property
    def payload_nbytes(self) -> int:
        return self.block.nbytes

    def is_relevant(self, candidate_index: int) -> bool:
        return candidate_index in self.relevance


@dataclass(frozen=True)
class CHRArchive:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    source_dtype: str
    block_size: int
    value_range: tuple[float, float]
    candidates: tuple[float, ...]
    regions: tuple[ArchiveRegion, ...]

    @property
    def stored_accuracy(self) -> float:
        return self.regions[0].accuracy

    @property
    def bound_mode(self) -> str:
        return self.regions[0].bound_mode

    def header_table_nbytes(self) -> int:
        mask_bytes = (len(self.candidates) + 7) // 8
        return (
            _FILE_HEADER.size
            + 4 + 8 * len(self.candidates)
            + 4 + len(self.regions) * (_REGION_FIXED.size + mask_bytes)
        )

    def payload_nbytes(self) -> int:
        return sum(r.payload_nbytes for r in self.regions)

    def file_nbytes(self) -> int:
        return self.header_table_nbytes() + self.payload_nbytes() + 4  # + trailing crc


@dataclass(frozen=True)
class RequestReport:
    requested_isovalue: float
    isovalue: float  # after snapping
    snapped: bool
    candidate_index: int
    requested_accuracy: float
    stored_accuracy: float
    drop_pruned: bool
    regions_returned: int
    regions_total: int
    bytes_touched: int
    bytes_total: int


@dataclass(frozen=True)
class ReconstructionSet:
    """Decompressed region windows plus the coverage report."""

    regions: tuple[tuple[ArchiveRegion, np.ndarray], ...]
    report: RequestReport


def build_chr(
    volume: Volume,
    candidates,
    block_size: int,
    accuracy: float = 1.0,
    bound_mode: str = MODE_STRICT,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
    loose_fraction: float = DEFAULT_LOOSE_FRACTION,
    out_of_range: str = "error",
    workers: int = 1,
    codec=None,
) -> CHRArchive:
    """Compress a volume into a CHR archive for the given candidates.

    ``out_of_range`` controls candidates outside the volume's value
    range: "error" refuses, "warn" keeps them (they simply prune every
    block). ``codec`` swaps in an alternative backend: any callable
    ``(samples, error_bound, source_dtype) -> CompressedBlock`` whose
    codec id is registered for decompression. Deterministic for
    identical inputs.
    """
    compress_fn = codec_mod.compress if codec is None else codec
    if out_of_range not in ("error", "warn"):
        raise ParameterError(f"out_of_range must be 'error' or 'warn', got {out_of_range!r}")
    if not 0.0 < loose_fraction:
        raise ParameterError(f"loose_fraction must be positive, got {loose_fraction}")
    blocks = decompose(volume, block_size, workers=workers)
    index = build_index(blocks, candidates)
    vmin, vmax = volume.value_range
    outside = [k for k in index.candidates if not vmin <= k <= vmax]
    if outside:
        msg = f"candidates outside the volume's value range [{vmin}, {vmax}]: {outside}"
        if out_of_range == "error":
            raise ParameterError(msg)
        warnings.warn(msg, stacklevel=2)
    regions = merge_regions(blocks, index)
    loose_bound = loose_fraction * (vmax - vmin)
    grid = volume.grid

    def build_one(region) -> ArchiveRegion:
        ox, oy, oz = region.sample_origin
        ex, ey, ez = region.sample_extent
        samples = grid[ox : ox + ex, oy : oy + ey, oz : oz + ez]
        served = [index.candidates[ci] for ci in sorted(region.relevance_key)]
        spec = region_bound(
            samples,
            served,
            accuracy=accuracy,
            mode=bound_mode,
            safety_factor=safety_factor,
            loose_bound=loose_bound,
            all_candidates=index.candidates,
        )
        block = compress_fn(samples, spec.error_bound, volume.source_dtype)
        return ArchiveRegion(
            region_id=region.region_id,
            block_span=region.block_span,
            sample_origin=region.sample_origin,
            sample_extent=region.sample_extent,
            relevance=region.relevance_key,
            bound_mode=bound_mode,
            accuracy=accuracy,
            error_bound=spec.error_bound,
            block=block,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            built = list(pool.map(build_one, regions))
    else:
        built = [build_one(r) for r in regions]

    return CHRArchive(
        dims=volume.dims,
        spacing=volume.spacing,
        source_dtype=volume.source_dtype,
        block_size=block_size,
        value_range=volume.value_range,
        candidates=index.candidates,
        regions=tuple(built),
    )


def _select_candidate(archive: CHRArchive, k: float, snap: bool) -> tuple[int, bool]:
    cands = np.asarray(archive.candidates)
    exact = np.flatnonzero(cands == k)
    if exact.size:
        return int(exact[0]), False
    if not snap:
        raise NoSuchIsovalueError(k, archive.candidates)
    # nearest candidate; ties break toward the smaller one
    return int(np.argmin(np.abs(cands - k))), True


def request(
    archive: CHRArchive,
    k: float,
    accuracy: float | None = None,
    drop_pruned: bool = True,
    snap: bool = False,
    workers: int = 1,
) -> ReconstructionSet:
    """Decompress the regions needed to extract isovalue k.

    With ``drop_pruned`` only regions relevant to the (possibly
    snapped) candidate are returned, mirroring what would actually be
    streamed; otherwise every region is returned so the full field can
    be stitched. Requests for more accuracy than the archive stores
    are refused.
    """
    k = float(k)
    ci, snapped = _select_candidate(archive, k, snap)
    stored = archive.stored_accuracy
    requested = stored if accuracy is None else float(accuracy)
    if requested > stored:
        raise InsufficientAccuracyError(requested, stored)
    if drop_pruned:
        selected = [r for r in archive.regions if r.is_relevant(ci)]
    else:
        selected = list(archive.regions)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            arrays = list(pool.map(lambda r: codec_mod.decompress(r.block), selected))
    else:
        arrays = [codec_mod.decompress(r.block) for r in selected]

    header_bytes = archive.header_table_nbytes()
    touched = header_bytes + sum(r.payload_nbytes for r in selected)
    report = RequestReport(
        requested_isovalue=k,
        isovalue=archive.candidates[ci],
        snapped=snapped,
        candidate_index=ci,
        requested_accuracy=requested,
        stored_accuracy=stored,
        drop_pruned=drop_pruned,
        regions_returned=len(selected),
        regions_total=len(archive.regions),
        bytes_touched=touched,
        bytes_total=archive.file_nbytes(),
    )
    return ReconstructionSet(regions=tuple(zip(selected, arrays)), report=report)


def stitch(recon: ReconstructionSet, dims, fill: float = np.nan) -> np.ndarray:
    """Reassemble region windows into one (nx, ny, nz) grid.

    Ghost-sample overlaps resolve owner-wins: the lower-origin
    region's copy lands last. Missing regions (a pruned request) leave
    the fill value.
    """
    out = np.full(dims, fill, dtype=np.float64, order="F")
    ordered = sorted(
        recon.regions,
        key=lambda pair: tuple(reversed(pair[0].sample_origin)),
        reverse=True,
    )
    for region, samples in ordered:
        ox, oy, oz = region.sample_origin
        ex, ey, ez = region.sample_extent
        out[ox : ox + ex, oy : oy + ey, oz : oz + ez] = samples
    return out


def write_chr(archive: CHRArchive, path) -> None:
    """Serialize an archive; bit-exact for equal archives."""
    mask_bytes = (len(archive.candidates) + 7) // 8
    parts = [
        _FILE_HEADER.pack(
            MAGIC,
            VERSION,
            *archive.dims,
            *archive.spacing,
            DTYPE_TAGS[archive.source_dtype],
            archive.block_size,
            *archive.value_range,
        ),
        struct.pack("<I", len(archive.candidates)),
        struct.pack(f"<{len(archive.candidates)}d", *archive.candidates),
        struct.pack("<I", len(archive.regions)),
    ]
    offset = archive.header_table_nbytes()
    for r in archive.regions:
        mask = 0
        for ci in r.relevance:
            mask |= 1 << ci
        parts.append(
            _REGION_FIXED.pack(
                r.region_id,
                *r.block_span[0],
                *r.block_span[1],
                *r.sample_origin,
                *r.sample_extent,
                BOUND_MODE_TAGS[r.bound_mode],
                r.accuracy,
                r.error_bound,
                offset,
                r.payload_nbytes,
            )
        )
        parts.append(mask.to_bytes(mask_bytes, "little"))
        offset += r.payload_nbytes
    for r in archive.regions:
        parts.append(r.block.to_bytes())
    blob = b"".join(parts)
    blob += struct.pack("<I", zlib.crc32(blob))
    with open(path, "wb") as fh:
        fh.write(blob)


def read_chr(path) -> CHRArchive:
    """Parse and validate a CHR file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _FILE_HEADER.size + 4:
        raise ChecksumError(f"{path}: file too short to be a CHR archive")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    actual_crc = zlib.crc32(blob[:-4])
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"{path}: checksum mismatch (stored {stored_crc:#010x}, computed {actual_crc:#010x})"
        )
    (magic, version, nx, ny, nz, dx, dy, dz, dtype_tag, block_size, vmin, vmax) = _FILE_HEADER.unpack_from(blob, 0)
    del magic
    if version != VERSION:
        raise VersionError(f"{path}: unsupported CHR version {version}")
    pos = _FILE_HEADER.size
    (m,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    candidates = struct.unpack_from(f"<{m}d", blob, pos)
    pos += 8 * m
    mask_bytes = (m + 7) // 8
    (nregions,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    regions = []
    for _ in range(nregions):
        fields = _REGION_FIXED.unpack_from(blob, pos)
        pos += _REGION_FIXED.size
        mask = int.from_bytes(blob[pos : pos + mask_bytes], "little")
        pos += mask_bytes
        (rid, lx, ly, lz, hx, hy, hz, ox, oy, oz, ex, ey, ez,
         mode_tag, accuracy, error_bound, poffset, plen) = fields
        if poffset + plen > len(blob) - 4:
            raise ChecksumError(f"{path}: region {rid} payload exceeds file size")
        block = CompressedBlock.from_bytes(blob, poffset)
        if block.nbytes != plen:
            raise ChecksumError(
                f"{path}: region {rid} payload length mismatch "
                f"(table {plen}, block {block.nbytes})"
            )
        regions.append(
            ArchiveRegion(
                region_id=rid,
                block_span=((lx, ly, lz), (hx, hy, hz)),
                sample_origin=(ox, oy, oz),
                sample_extent=(ex, ey, ez),
                relevance=frozenset(ci for ci in range(m) if (mask >> ci) & 1),
                bound_mode=_MODE_FROM_TAG[mode_tag],
                accuracy=accuracy,
                error_bound=error_bound,
                block=block,
            )
        )
    dtype = {v: kk for kk, v in DTYPE_TAGS.items()}[dtype_tag]
    return CHRArchive(
        dims=(nx, ny, nz),
        spacing=(dx, dy, dz),
        source_dtype=dtype,
        block_size=block_size,
        value_range=(vmin, vmax),
        candidates=tuple(candidates),
        regions=tuple(regions),
    )
