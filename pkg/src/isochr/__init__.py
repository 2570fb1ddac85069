"""isochr: topology-preserving compression for remote isosurface extraction.

Compresses volumetric scalar fields into an indexed archive (CHR)
whose per-region error bounds guarantee that marching-cubes case codes
survive reconstruction, then streams only the regions a requested
isovalue touches.
"""

from .blocking import BlockMeta, IsoIndex, Region, build_index, decompose, merge_regions
from .bound import (
    MODE_PAPER,
    MODE_STRICT,
    BoundSpec,
    DistanceArray,
    collect_distances,
    region_bound,
    select_bound,
)
from .chr_archive import (
    CHRArchive,
    ReconstructionSet,
    build_chr,
    read_chr,
    request,
    stitch,
    write_chr,
)
from .codec import CompressedBlock, compress, decompress
from .isosurf import (
    CaseField,
    TriangleMesh,
    case_field,
    cell_case,
    export_obj,
    marching_cubes,
    merge_meshes,
    verify_topology,
)
from .pipeline import StreamModel, TimingBreakdown, emit_report, run_benchmark, simulate_stream
from .volume import Volume, gen_smooth_random, gen_sphere, load_raw, save_raw

__version__ = "0.1.0"

__all__ = [
    "BlockMeta",
    "BoundSpec",
    "CHRArchive",
    "CaseField",
    "CompressedBlock",
    "DistanceArray",
    "IsoIndex",
    "MODE_PAPER",
    "MODE_STRICT",
    "ReconstructionSet",
    "Region",
    "StreamModel",
    "TimingBreakdown",
    "TriangleMesh",
    "Volume",
    "build_chr",
    "build_index",
    "case_field",
    "cell_case",
    "collect_distances",
    "compress",
    "decompose",
    "decompress",
    "emit_report",
    "export_obj",
    "gen_smooth_random",
    "gen_sphere",
    "load_raw",
    "marching_cubes",
    "merge_meshes",
    "merge_regions",
    "read_chr",
    "region_bound",
    "request",
    "run_benchmark",
    "save_raw",
    "select_bound",
    "simulate_stream",
    "stitch",
    "verify_topology",
    "write_chr",
]
