"""Command-line interface: isochr <command>."""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import backend, chr_archive, isosurf, pipeline
from .bound import (
    DEFAULT_LOOSE_FRACTION,
    DEFAULT_SAFETY_FACTOR,
    MODE_PAPER,
    MODE_STRICT,
)
from .volume import Volume, gen_smooth_random, gen_sphere, load_raw, save_raw

_MODE_FLAGS = {"strict": MODE_STRICT, "paper": MODE_PAPER}


def _dims(text: str) -> tuple[int, int, int]:
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must be NX,NY,NZ")
    return parts


def _floats(text: str) -> list[float]:
    return [float(p) for p in text.split(",")]


def _ints(text: str) -> list[int]:
    return [int(p) for p in text.split(",")]


def _add_raw_input(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="infile", required=True, help="headerless raw volume file")
    p.add_argument("--dims", type=_dims, required=True, help="NX,NY,NZ")
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.add_argument("--endianness", choices=("little", "big"), default="little")


def _load(args) -> Volume:
    return load_raw(args.infile, args.dims, args.dtype, args.endianness)


def _cmd_gen(args) -> int:
    if args.kind == "sphere":
        vol = gen_sphere(args.dims, center=args.center, radius=args.radius)
    else:
        vol = gen_smooth_random(args.dims, seed=args.seed, num_modes=args.modes)
    save_raw(vol, args.out, dtype=args.dtype, endianness=args.endianness)
    vmin, vmax = vol.value_range
    print(f"wrote {args.out}: dims {vol.dims}, dtype {args.dtype}, range [{vmin:.6g}, {vmax:.6g}]")
    return 0


def _cmd_plan(args) -> int:
    from .blocking import build_index, decompose, merge_regions

    vol = _load(args)
    blocks = decompose(vol, args.block_size, workers=args.workers)
    index = build_index(blocks, sorted(args.isovalues))
    regions = merge_regions(blocks, index)
    pruned = sum(1 for b in blocks if not index.relevance_key(b.block_id))
    print(f"blocks: {len(blocks)} (block size {args.block_size}), pruned: {pruned}")
    for ci, k in enumerate(index.candidates):
        print(f"  isovalue {k:.6g}: {len(index.relevant[ci])} relevant blocks")
    print(f"regions after merge: {len(regions)}")
    header = f"{'region':>6}  {'blocks':>6}  {'origin':>18}  {'extent':>18}  candidates"
    print(header)
    for r in regions:
        cand = ",".join(f"{index.candidates[ci]:.6g}" for ci in sorted(r.relevance_key)) or "-"
        print(
            f"{r.region_id:>6}  {r.num_blocks:>6}  {str(r.sample_origin):>18}  "
            f"{str(r.sample_extent):>18}  {cand}"
        )
    return 0


def _cmd_compress(args) -> int:
    vol = _load(args)
    t0 = time.perf_counter()
    archive = chr_archive.build_chr(
        vol,
        sorted(args.isovalues),
        block_size=args.block_size,
        accuracy=args.accuracy,
        bound_mode=_MODE_FLAGS[args.bound_mode],
        safety_factor=args.safety_factor,
        loose_fraction=args.loose_fraction,
        out_of_range="warn" if args.allow_out_of_range else "error",
        workers=args.workers,
    )
    chr_archive.write_chr(archive, args.out)
    dt = time.perf_counter() - t0
    ratio = vol.nbytes_original / archive.file_nbytes()
    print(
        f"wrote {args.out}: {archive.file_nbytes()} bytes, {len(archive.regions)} regions, "
        f"ratio {ratio:.2f}x vs {args.dtype} raw, {dt:.3f}s"
    )
    return 0


def _cmd_inspect(args) -> int:
    archive = chr_archive.read_chr(args.chr)
    vmin, vmax = archive.value_range
    print(f"CHR archive {args.chr}")
    print(f"  dims {archive.dims}  spacing {archive.spacing}  dtype {archive.source_dtype}")
    print(f"  block size {archive.block_size}  value range [{vmin:.6g}, {vmax:.6g}]")
    print(f"  accuracy {archive.stored_accuracy}  bound mode {archive.bound_mode}")
    print(f"  candidates: {', '.join(f'{k:.6g}' for k in archive.candidates)}")
    print(f"  regions: {len(archive.regions)}  file bytes {archive.file_nbytes()}")
    print(
        f"{'region':>6}  {'origin':>18}  {'extent':>18}  {'bound':>12}  "
        f"{'payload':>10}  candidates"
    )
    for r in archive.regions:
        cand = ",".join(str(ci) for ci in sorted(r.relevance)) or "-"
        print(
            f"{r.region_id:>6}  {str(r.sample_origin):>18}  {str(r.sample_extent):>18}  "
            f"{r.error_bound:>12.4e}  {r.payload_nbytes:>10}  {cand}"
        )
    return 0


def _cmd_extract(args) -> int:
    archive = chr_archive.read_chr(args.chr)
    recon = chr_archive.request(
        archive,
        args.isovalue,
        accuracy=args.accuracy,
        drop_pruned=not args.keep_pruned,
        snap=args.snap,
        workers=args.workers,
    )
    k = recon.report.isovalue
    meshes = [
        isosurf.marching_cubes(
            samples,
            spacing=archive.spacing,
            origin=tuple(o * s for o, s in zip(region.sample_origin, archive.spacing)),
            k=k,
        )
        for region, samples in recon.regions
    ]
    mesh = isosurf.merge_meshes(meshes)
    isosurf.export_obj(mesh, args.out)
    print(
        f"wrote {args.out}: {mesh.num_vertices} vertices, {mesh.num_triangles} triangles "
        f"(isovalue {k:.6g}, {recon.report.bytes_touched} bytes touched)"
    )
    if args.report:
        payload = {
            "isovalue": recon.report.isovalue,
            "requested_isovalue": recon.report.requested_isovalue,
            "snapped": recon.report.snapped,
            "accuracy": recon.report.requested_accuracy,
            "stored_accuracy": recon.report.stored_accuracy,
            "regions_returned": recon.report.regions_returned,
            "regions_total": recon.report.regions_total,
            "bytes_touched": recon.report.bytes_touched,
            "bytes_total": recon.report.bytes_total,
            "vertices": mesh.num_vertices,
            "triangles": mesh.num_triangles,
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return 0


def _cmd_verify(args) -> int:
    archive = chr_archive.read_chr(args.chr)
    vol = load_raw(args.orig, archive.dims, args.dtype, args.endianness)
    recon = chr_archive.request(
        archive, args.isovalue, accuracy=args.accuracy, drop_pruned=False, snap=args.snap
    )
    stitched = chr_archive.stitch(recon, archive.dims)
    report = isosurf.verify_topology(vol.grid, stitched, recon.report.isovalue)
    print(f"preserved_fraction: {report.preserved_fraction:.9f}")
    print(f"differing_cells: {report.differing_cells} / {report.total_cells}")
    if report.first_diff is not None:
        print(f"first_diff: {report.first_diff}")
    return 0 if report.preserved_fraction == 1.0 else 3


def _cmd_bench(args) -> int:
    vol = _load(args)
    model = pipeline.StreamModel(
        bandwidth_bps=args.bandwidth_gbps * pipeline.GBPS, latency_s=args.latency_s
    )
    rows = pipeline.run_benchmark(
        vol,
        sorted(args.isovalues),
        accuracies=args.accuracies,
        block_sizes=args.block_sizes,
        model=model,
        bound_mode=_MODE_FLAGS[args.bound_mode],
        repeats=args.repeats,
        amortize_compress=args.amortize_compress,
        workers=args.workers,
    )
    text = pipeline.emit_report(rows, fmt=args.format, path=args.out)
    if args.out is None:
        sys.stdout.write(text)
    else:
        print(f"wrote {args.out}")
    for line in pipeline.flag_imperfect(rows):
        print(line)
    return 0


def _cmd_bench_kernels(args) -> int:
    from . import codec as codec_mod

    if not backend.NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare")
        return 1
    n = args.size
    vol = gen_sphere((n, n, n), radius=n / 4.0)
    grid = vol.grid
    bound = 1e-3 * (vol.value_range[1] - vol.value_range[0])

    def timed(fn):
        best = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            fn()
            best.append(time.perf_counter() - t0)
        return min(best)

    rows = []
    prev = backend.USE_NUMBA
    try:
        backend.USE_NUMBA = True
        block = codec_mod.compress(grid, bound)
        mesh_jit = isosurf.marching_cubes(grid, k=0.0)
        t_jit = {
            "compress": timed(lambda: codec_mod.compress(grid, bound)),
            "decompress": timed(lambda: codec_mod.decompress(block)),
            "marching_cubes": timed(lambda: isosurf.marching_cubes(grid, k=0.0)),
        }
        backend.USE_NUMBA = False
        mesh_py = isosurf.marching_cubes(grid, k=0.0)
        t_py = {
            "compress": timed(lambda: codec_mod.compress(grid, bound)),
            "decompress": timed(lambda: codec_mod.decompress(block)),
            "marching_cubes": timed(lambda: isosurf.marching_cubes(grid, k=0.0)),
        }
    finally:
        backend.USE_NUMBA = prev
    same = np.array_equal(mesh_jit.vertices, mesh_py.vertices) and np.array_equal(
        mesh_jit.triangles, mesh_py.triangles
    )
    print(f"kernel backends on a {n}^3 sphere field (fallback: numpy/interpreted)")
    print(f"{'kernel':>16}  {'numba':>10}  {'fallback':>10}  {'ratio':>7}")
    for name in t_jit:
        rows.append((name, t_jit[name], t_py[name]))
        print(
            f"{name:>16}  {t_jit[name] * 1e3:>8.2f}ms  {t_py[name] * 1e3:>8.2f}ms  "
            f"{t_py[name] / t_jit[name]:>6.1f}x"
        )
    print(f"meshes identical across paths: {same}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isochr", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic raw volume")
    p.add_argument("--kind", choices=("sphere", "random"), required=True)
    p.add_argument("--dims", type=_dims, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--modes", type=int, default=4, help="sinusoid count for --kind random")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--center", type=_floats, default=None)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.add_argument("--endianness", choices=("little", "big"), default="little")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("plan", help="show block/region statistics for a decomposition")
    _add_raw_input(p)
    p.add_argument("--block-size", type=int, default=64)
    p.add_argument("--isovalues", type=_floats, required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("compress", help="build a CHR archive from a raw volume")
    _add_raw_input(p)
    p.add_argument("--isovalues", type=_floats, required=True)
    p.add_argument("--accuracy", type=float, default=1.0)
    p.add_argument("--block-size", type=int, default=64)
    p.add_argument("--bound-mode", choices=tuple(_MODE_FLAGS), default="strict")
    p.add_argument("--safety-factor", type=float, default=DEFAULT_SAFETY_FACTOR)
    p.add_argument("--loose-fraction", type=float, default=DEFAULT_LOOSE_FRACTION)
    p.add_argument("--allow-out-of-range", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_compress)

    p = sub.add_parser("inspect", help="print a CHR archive's header and region table")
    p.add_argument("chr")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("extract", help="extract an isosurface from a CHR archive")
    p.add_argument("--chr", required=True)
    p.add_argument("--isovalue", type=float, required=True)
    p.add_argument("--accuracy", type=float, default=None)
    p.add_argument("--snap", action="store_true", help="use the nearest stored candidate")
    p.add_argument("--keep-pruned", action="store_true", help="decompress irrelevant regions too")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("verify", help="compare case codes of original vs reconstruction")
    p.add_argument("--orig", required=True)
    p.add_argument("--dtype", choices=("f32", "f64"), default="f32")
    p.add_argument("--endianness", choices=("little", "big"), default="little")
    p.add_argument("--chr", required=True)
    p.add_argument("--isovalue", type=float, required=True)
    p.add_argument("--accuracy", type=float, default=None)
    p.add_argument("--snap", action="store_true")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bench", help="end-to-end streaming benchmark")
    _add_raw_input(p)
    p.add_argument("--isovalues", type=_floats, required=True)
    p.add_argument("--accuracies", type=_floats, default=[1.0, 0.99, 0.95, 0.80])
    p.add_argument("--block-sizes", type=_ints, default=[64, 128])
    p.add_argument("--bandwidth-gbps", type=float, default=1.0)
    p.add_argument("--latency-s", type=float, default=0.0)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--bound-mode", choices=tuple(_MODE_FLAGS), default="strict")
    p.add_argument("--amortize-compress", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("table", "json", "csv"), default="table")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("bench-kernels", help="compare numba kernels with the fallback path")
    p.add_argument("--size", type=int, default=48)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=_cmd_bench_kernels)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
