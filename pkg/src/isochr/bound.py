"""Topology-preserving error bounds from sample-to-isovalue distances.

A cell's marching-cubes case is determined by which side of the
isovalue k each corner sample lies on (value >= k means inside, here
and in :mod:`isochr.isosurf`). Perturbing a sample by less than its
distance to k cannot flip its side, so distances to k bound the
admissible compression error.

Two collection modes:

* ``paper_edges``: distances d0 = k - s0 and d1 = s1 - k over all
  axis-aligned edges with s0 < k < s1 (straddling edges only). This
  protects existing crossings but can let a non-straddling vertex
  drift across k, creating a new crossing.
* ``strict_vertices``: |s - k| over every sample. With accuracy 1 this
  provably preserves every cell case.

The accuracy knob relaxes the bound to the n-th smallest distance,
n = max(1, 1 + floor((1 - accuracy) * |D|)), trading topology fidelity
for compression. accuracy 1 selects the minimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParameterError

MODE_PAPER = "paper_edges"
MODE_STRICT = "strict_vertices"
MODES = (MODE_PAPER, MODE_STRICT)

# multiplicative shrink keeping the bound strictly below the selected
# distance, so a maximal perturbation cannot land a sample exactly on k
DEFAULT_SAFETY_FACTOR = 1.0 - 2.0**-20

# fallback bound for regions serving no candidate (or with no
# straddling edge), as a fraction of the global value range
DEFAULT_LOOSE_FRACTION = 0.01


@dataclass(frozen=True)
class DistanceArray:
    """Ascending distances between samples and one isovalue."""

    distances: np.ndarray
    source_mode: str
    isovalue: float

    def __len__(self) -> int:
        return self.distances.size


@dataclass(frozen=True)
class BoundSpec:
    """An absolute error bound and how it was selected."""

    error_bound: float
    accuracy: float
    n_selected: int
    safety_factor: float
    lossless_required: bool


def _straddle_distances(grid: np.ndarray, k: float) -> list[np.ndarray]:
    out = []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        a = grid[tuple(lo)]
        b = grid[tuple(hi)]
        s0 = np.minimum(a, b)
        s1 = np.maximum(a, b)
        mask = (s0 < k) & (k < s1)
        if mask.any():
            out.append(k - s0[mask])
            out.append(s1[mask] - k)
    return out


def _validate(accuracy: float, safety_factor: float, mode: str | None = None) -> None:
    if not 0.0 < accuracy <= 1.0:
        raise ParameterError(f"accuracy must be in (0, 1], got {accuracy}")
    if not 0.0 < safety_factor < 1.0:
        raise ParameterError(f"safety_factor must be in (0, 1), got {safety_factor}")
    if mode is not None and mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")


def collect_distances(samples: np.ndarray, k: float, mode: str = MODE_STRICT) -> DistanceArray:
    """Collect the sorted distance array D for one isovalue.

    Accepts 1D-3D sample arrays; lower-rank inputs are treated as
    degenerate grids (edges run only along axes with >= 2 samples).
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    grid = np.asarray(samples, dtype=np.float64)
    if grid.ndim > 3 or grid.size == 0:
        raise ParameterError(f"samples must be a non-empty 1D-3D array, got shape {grid.shape}")
    k = float(k)
    if mode == MODE_STRICT:
        d = np.abs(grid.ravel(order="K") - k)
    else:
        grid3 = grid.reshape(grid.shape + (1,) * (3 - grid.ndim))
        parts = _straddle_distances(grid3, k)
        d = np.concatenate(parts) if parts else np.empty(0, dtype=np.float64)
    d = np.sort(d)
    return DistanceArray(distances=d, source_mode=mode, isovalue=k)


def select_index(num_distances: int, accuracy: float) -> int:
    """n for the n-th-smallest rule; always 1 at accuracy 1."""
    return max(1, 1 + int(np.floor((1.0 - accuracy) * num_distances)))


def select_bound(
    d: DistanceArray,
    accuracy: float,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
    fallback_bound: float = 0.0,
) -> BoundSpec:
    """Pick the n-th smallest distance and shrink it by the safety factor.

    An empty D yields the fallback bound. A selected distance of zero
    (a sample exactly on k) forces lossless compression.
    """
    _validate(accuracy, safety_factor)
    if len(d) == 0:
        return BoundSpec(float(fallback_bound), accuracy, 1, safety_factor, False)
    n = select_index(len(d), accuracy)
    val = float(d.distances[n - 1])
    if val == 0.0:
        return BoundSpec(0.0, accuracy, n, safety_factor, True)
    return BoundSpec(val * safety_factor, accuracy, n, safety_factor, False)


def _nth_smallest(values: np.ndarray, n: int) -> float:
    # same value as sort(values)[n-1] without the full sort
    if n == 1:
        return float(values.min())
    return float(np.partition(values, n - 1)[n - 1])


def region_bound(
    samples: np.ndarray,
    served_candidates,
    accuracy: float,
    mode: str = MODE_STRICT,
    safety_factor: float = DEFAULT_SAFETY_FACTOR,
    loose_bound: float = 0.0,
    all_candidates=None,
) -> BoundSpec:
    """Single bound valid for every candidate a region serves.

    Equivalent to the minimum of ``select_bound(collect_distances(...))``
    over the served candidates; a region serving none gets the loose
    fallback. When the full candidate list is supplied, the bound is
    additionally capped below each unserved candidate's margin
    (min |s - k|), so a perturbed sample can never cross a candidate
    the region was classified as irrelevant to.
    """
    _validate(accuracy, safety_factor, mode)
    grid = np.asarray(samples, dtype=np.float64)
    if grid.ndim < 3:
        grid = grid.reshape(grid.shape + (1,) * (3 - grid.ndim))
    flat = np.ascontiguousarray(grid.ravel(order="K"))
    served = [float(k) for k in served_candidates]
    if all_candidates is None:
        unserved = []
    else:
        unserved = [float(k) for k in all_candidates if float(k) not in served]

    best: BoundSpec | None = None
    for k in served:
        if mode == MODE_STRICT:
            n = select_index(flat.size, accuracy)
            if n == 1:
                val = float(kernels.min_abs_distance(flat, k))
            else:
                val = _nth_smallest(np.abs(flat - k), n)
            nd = flat.size
        else:
            parts = _straddle_distances(grid, k)
            dist = np.concatenate(parts) if parts else np.empty(0)
            nd = dist.size
            if nd == 0:
                val = None
            else:
                n = select_index(nd, accuracy)
                val = _nth_smallest(dist, n)
        if val is None:
            spec = BoundSpec(float(loose_bound), accuracy, 1, safety_factor, False)
        elif val == 0.0:
            spec = BoundSpec(0.0, accuracy, n, safety_factor, True)
        else:
            spec = BoundSpec(val * safety_factor, accuracy, n, safety_factor, False)
        if best is None or spec.error_bound < best.error_bound:
            best = spec
        if best.lossless_required:
            return best

    if best is None:
        best = BoundSpec(float(loose_bound), accuracy, 1, safety_factor, False)

    # crossing prevention for candidates outside the region's span
    cap = best.error_bound
    for k in unserved:
        margin = float(kernels.min_abs_distance(flat, k)) * safety_factor
        if margin < cap:
            cap = margin
    if cap < best.error_bound:
        best = BoundSpec(cap, accuracy, best.n_selected, safety_factor, cap == 0.0)
    return best
