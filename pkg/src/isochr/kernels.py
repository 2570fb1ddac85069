"""Hot kernels: quantized Lorenzo transform, token codec, mesh extraction.

Each kernel ships in two implementations selected at call time by
:data:`isochr.backend.USE_NUMBA`: a numba loop and a vectorized numpy
fallback. The quantized lattice is integer-exact, so both paths
produce bit-identical outputs; tests assert that.
"""

import math

import numpy as np

from . import backend
from .backend import dual

# adding then subtracting 1.5 * 2**52 rounds a float to the nearest
# integer (ties to even); a fixup afterwards restores ties-away-from-zero
_ROUND_SHIFT = 6755399441055744.0

# quanta pass through inclusion-exclusion of 8 lattice values, so
# capping |u| at 2**27 keeps every emitted |q| at or below 2**30
_ESCAPE_UMAX = 134217728.0


def _njit(func):
    if backend.NUMBA_AVAILABLE:
        import numba

        return numba.njit(cache=True, nogil=True)(func)
    return func


# ---------------------------------------------------------------------------
# quantized Lorenzo transform
#
# Samples are quantized to the global lattice u = round(x / (2e)) (ties
# away from zero), reconstruction is u * 2e, and the stored quanta are
# the 3D Lorenzo residuals q = u - P where P is inclusion-exclusion
# over the 7 causal neighbors of the reconstructed lattice. Because P
# is integer, this equals round((x - pred') / 2e) with pred' = P * 2e
# everywhere off rounding ties, but the integer form is exact: encoder
# and decoder agree bit for bit, in either backend. Samples that would
# overflow the lattice, or whose reconstruction would land outside the
# bound, are escaped and stored verbatim (their lattice value is 0).


def _lorenzo_encode_loop(flat, nx, ny, nz, error_bound):
    n = nx * ny * nz
    q = np.empty(n, dtype=np.int64)
    escaped = np.empty(n, dtype=np.bool_)
    u = np.empty(n, dtype=np.int64)
    twoe = 2.0 * error_bound
    inv = 1.0 / twoe
    sx = 1
    sy = nx
    sz = nx * ny
    i = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                v = flat[i]
                qf = v * inv
                uf = (qf + _ROUND_SHIFT) - _ROUND_SHIFT
                d = qf - uf
                if d == 0.5:
                    uf += 1.0
                elif d == -0.5:
                    uf -= 1.0
                if math.fabs(uf) > _ESCAPE_UMAX or math.fabs(uf * twoe - v) > error_bound:
                    escaped[i] = True
                    ui = np.int64(0)
                else:
                    escaped[i] = False
                    ui = np.int64(uf)
                u[i] = ui
                p = np.int64(0)
                if x > 0:
                    p += u[i - sx]
                if y > 0:
                    p += u[i - sy]
                if z > 0:
                    p += u[i - sz]
                if x > 0 and y > 0:
                    p -= u[i - sx - sy]
                if x > 0 and z > 0:
                    p -= u[i - sx - sz]
                if y > 0 and z > 0:
                    p -= u[i - sy - sz]
                if x > 0 and y > 0 and z > 0:
                    p += u[i - sx - sy - sz]
                q[i] = ui - p
                i += 1
    return q, escaped


_lorenzo_encode_jit = _njit(_lorenzo_encode_loop)


def _lorenzo_encode_numpy(flat, nx, ny, nz, error_bound):
    twoe = 2.0 * error_bound
    inv = 1.0 / twoe
    qf = flat * inv
    uf = (qf + _ROUND_SHIFT) - _ROUND_SHIFT
    d = qf - uf
    uf = np.where(d == 0.5, uf + 1.0, np.where(d == -0.5, uf - 1.0, uf))
    escaped = (np.abs(uf) > _ESCAPE_UMAX) | (np.abs(uf * twoe - flat) > error_bound)
    u = np.where(escaped, 0.0, uf).astype(np.int64)
    grid = u.reshape((nx, ny, nz), order="F")
    q = grid.copy()
    for ax in range(3):
        hi = [slice(None)] * 3
        lo = [slice(None)] * 3
        hi[ax] = slice(1, None)
        lo[ax] = slice(None, -1)
        q[tuple(hi)] -= q[tuple(lo)]
    return q.ravel(order="F"), escaped


def lorenzo_encode(flat, nx, ny, nz, error_bound):
    """Quantize and Lorenzo-transform a flat raster-order sample array.

    Returns (q, escaped): int64 quanta, |q| <= 2**30, and the escape
    mask. Escaped samples contribute a zero lattice value; the caller
    stores their exact values separately.
    """
    if backend.USE_NUMBA:
        return _lorenzo_encode_jit(flat, nx, ny, nz, error_bound)
    return _lorenzo_encode_numpy(flat, nx, ny, nz, error_bound)


def _lorenzo_decode_loop(q, escaped, escape_values, error_bound, nx, ny, nz):
    n = nx * ny * nz
    u = np.empty(n, dtype=np.int64)
    recon = np.empty(n, dtype=np.float64)
    twoe = 2.0 * error_bound
    sx = 1
    sy = nx
    sz = nx * ny
    i = 0
    iesc = 0
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                p = q[i]
                if x > 0:
                    p += u[i - sx]
                if y > 0:
                    p += u[i - sy]
                if z > 0:
                    p += u[i - sz]
                if x > 0 and y > 0:
                    p -= u[i - sx - sy]
                if x > 0 and z > 0:
                    p -= u[i - sx - sz]
                if y > 0 and z > 0:
                    p -= u[i - sy - sz]
                if x > 0 and y > 0 and z > 0:
                    p += u[i - sx - sy - sz]
                u[i] = p
                if escaped[i]:
                    recon[i] = escape_values[iesc]
                    iesc += 1
                else:
                    recon[i] = p * twoe
                i += 1
    return recon


_lorenzo_decode_jit = _njit(_lorenzo_decode_loop)


def _lorenzo_decode_numpy(q, escaped, escape_values, error_bound, nx, ny, nz):
    u = q.reshape((nx, ny, nz), order="F").copy()
    for ax in range(3):
        np.cumsum(u, axis=ax, out=u)
    recon = u.ravel(order="F") * (2.0 * error_bound)
    if escape_values.size:
        recon[escaped] = escape_values
    return recon


def lorenzo_decode(q, escaped, escape_values, error_bound, nx, ny, nz):
    """Invert :func:`lorenzo_encode`; exact integer replay, then scale."""
    if backend.USE_NUMBA:
        return _lorenzo_decode_jit(q, escaped, escape_values, error_bound, nx, ny, nz)
    return _lorenzo_decode_numpy(q, escaped, escape_values, error_bound, nx, ny, nz)


# ---------------------------------------------------------------------------
# token stream: zigzag varints with zero-run packing
#
# Token u (LEB128 varint): u == 0 starts a zero run and is followed by
# the run length; u >= 1 is a literal with zigzag value u - 1. Single
# zeros are emitted as literals so the stream never expands past 5
# bytes per value (quanta stay within +-2**30).


def _rle_varint_encode_loop(vals):
    n = vals.shape[0]
    out = np.empty(6 * n + 16, dtype=np.uint8)
    pos = 0
    i = 0
    while i < n:
        v = vals[i]
        if v == 0:
            j = i + 1
            while j < n and vals[j] == 0:
                j += 1
            run = j - i
            if run == 1:
                out[pos] = 1  # literal zero: zigzag(0) + 1
                pos += 1
            else:
                out[pos] = 0
                pos += 1
                u = run
                while u >= 0x80:
                    out[pos] = np.uint8((u & 0x7F) | 0x80)
                    pos += 1
                    u >>= 7
                out[pos] = np.uint8(u)
                pos += 1
            i = j
        else:
            zz = (v << 1) ^ (v >> 63)
            u = zz + 1
            while u >= 0x80:
                out[pos] = np.uint8((u & 0x7F) | 0x80)
                pos += 1
                u >>= 7
            out[pos] = np.uint8(u)
            pos += 1
            i += 1
    return out[:pos].copy()


_rle_varint_encode_jit = _njit(_rle_varint_encode_loop)


def _emit_varints_numpy(tokens):
    # tokens: non-negative int64 varint payloads, each < 2**35
    utoks = tokens.astype(np.uint64)
    nbytes = np.ones(utoks.shape[0], dtype=np.int64)
    for cut in (7, 14, 21, 28):
        nbytes += utoks >= (np.uint64(1) << np.uint64(cut))
    ends = np.cumsum(nbytes)
    out = np.zeros(int(ends[-1]) if ends.size else 0, dtype=np.uint8)
    starts = ends - nbytes
    rest = utoks
    for slot in range(5):
        live = nbytes > slot
        if not live.any():
            break
        more = nbytes[live] > slot + 1
        byte = (rest[live] & np.uint64(0x7F)).astype(np.uint8) | (
            more.astype(np.uint8) << 7
        )
        out[starts[live] + slot] = byte
        rest = rest >> np.uint64(7)
    return out


def _rle_varint_encode_numpy(vals):
    n = vals.shape[0]
    if n == 0:
        return np.empty(0, dtype=np.uint8)
    zero = vals == 0
    edges = np.flatnonzero(np.diff(np.concatenate(([0], zero.view(np.int8), [0]))))
    run_starts = edges[0::2]
    run_lens = edges[1::2] - run_starts
    single = run_lens == 1
    nonzero_idx = np.flatnonzero(~zero)
    zz = (vals[nonzero_idx] << 1) ^ (vals[nonzero_idx] >> 63)
    # pieces in stream order: literals at nonzero samples, runs at run
    # starts; single zeros become the literal token 1 (zigzag(0) + 1)
    piece_pos = np.concatenate([nonzero_idx, run_starts])
    piece_first = np.concatenate([zz + 1, np.where(single, 1, 0)])
    piece_second = np.concatenate(
        [np.full(nonzero_idx.size, -1, dtype=np.int64), np.where(single, -1, run_lens)]
    )
    order = np.argsort(piece_pos, kind="stable")
    first = piece_first[order]
    second = piece_second[order]
    has_second = second >= 0
    slots = np.arange(first.size, dtype=np.int64) + np.cumsum(has_second) - has_second
    tokens = np.empty(first.size + int(has_second.sum()), dtype=np.int64)
    tokens[slots] = first
    tokens[slots[has_second] + 1] = second[has_second]
    return _emit_varints_numpy(tokens)


def rle_varint_encode(vals):
    """Serialize int64 quanta; both backends emit identical bytes."""
    if backend.USE_NUMBA:
        return _rle_varint_encode_jit(vals)
    return _rle_varint_encode_numpy(vals)


def _rle_varint_decode_loop(buf, n):
    vals = np.zeros(n, dtype=np.int64)
    nb = buf.shape[0]
    pos = 0
    i = 0
    while i < n:
        if pos >= nb:
            raise ValueError("token stream truncated")
        u = np.int64(0)
        shift = 0
        while True:
            b = np.int64(buf[pos])
            pos += 1
            u |= (b & 0x7F) << shift
            if b < 0x80:
                break
            shift += 7
            if shift > 28:
                raise ValueError("varint too long")
            if pos >= nb:
                raise ValueError("token stream truncated")
        if u == 0:
            if pos >= nb:
                raise ValueError("zero run missing length")
            run = np.int64(0)
            shift = 0
            while True:
                b = np.int64(buf[pos])
                pos += 1
                run |= (b & 0x7F) << shift
                if b < 0x80:
                    break
                shift += 7
                if shift > 28:
                    raise ValueError("varint too long")
                if pos >= nb:
                    raise ValueError("token stream truncated")
            if run < 1 or i + run > n:
                raise ValueError("zero run out of range")
            i += int(run)
        else:
            zz = u - 1
            vals[i] = (zz >> 1) ^ -(zz & 1)
            i += 1
    if pos != nb:
        raise ValueError("trailing bytes after token stream")
    return vals


_rle_varint_decode_jit = _njit(_rle_varint_decode_loop)


def _rle_varint_decode_numpy(buf, n):
    vals = np.zeros(n, dtype=np.int64)
    if n == 0:
        if buf.size:
            raise ValueError("trailing bytes after token stream")
        return vals
    if buf.size == 0:
        raise ValueError("token stream truncated")
    data = buf.astype(np.int64)
    is_end = data < 0x80
    token_of_byte = np.zeros(buf.size, dtype=np.int64)
    token_of_byte[1:] = np.cumsum(is_end[:-1])
    ntokens = int(is_end.sum())
    if not is_end[-1]:
        raise ValueError("token stream truncated")
    shifts = np.arange(buf.size, dtype=np.int64)
    token_starts = np.flatnonzero(np.concatenate(([True], is_end[:-1])))
    if np.any(np.diff(token_starts) > 5) or (buf.size - token_starts[-1]) > 5:
        raise ValueError("varint too long")
    within = shifts - token_starts[token_of_byte]
    contrib = (data & 0x7F) << (7 * within)
    tokens = np.zeros(ntokens, dtype=np.int64)
    np.add.at(tokens, token_of_byte, contrib)
    # pair "0" markers with their following run-length token
    is_marker = tokens == 0
    if is_marker.any():
        marker_idx = np.flatnonzero(is_marker)
        if marker_idx[-1] + 1 >= ntokens:
            raise ValueError("zero run missing length")
        if np.any(np.diff(marker_idx) == 1):
            # a run length of zero would leave marker pairs ambiguous
            raise ValueError("zero run out of range")
        run_lens = tokens[marker_idx + 1]
        consumed = np.zeros(ntokens, dtype=bool)
        consumed[marker_idx + 1] = True
        emit = ~consumed
        emit_tokens = tokens[emit]
        emit_is_marker = is_marker[emit]
        counts = np.where(emit_is_marker, 0, 1).astype(np.int64)
        counts[emit_is_marker] = run_lens
        if (counts < 1).any():
            raise ValueError("zero run out of range")
    else:
        emit_tokens = tokens
        emit_is_marker = np.zeros(ntokens, dtype=bool)
        counts = np.ones(ntokens, dtype=np.int64)
    ends = np.cumsum(counts)
    if ends[-1] != n:
        raise ValueError("token stream produced wrong count")
    starts = ends - counts
    lit_mask = ~emit_is_marker
    zz = emit_tokens[lit_mask] - 1
    vals[starts[lit_mask]] = (zz >> 1) ^ -(zz & 1)
    return vals


def rle_varint_decode(buf, n):
    """Inverse of :func:`rle_varint_encode`; returns n int64 values."""
    if backend.USE_NUMBA:
        return _rle_varint_decode_jit(buf, n)
    return _rle_varint_decode_numpy(buf, n)


# ---------------------------------------------------------------------------


@dual
def min_abs_distance(flat, k):
    """min |s - k| in one pass; the accuracy-1 bound for a region."""
    best = math.fabs(flat[0] - k)
    for i in range(1, flat.shape[0]):
        d = math.fabs(flat[i] - k)
        if d < best:
            best = d
    return best


@dual
def mc_extract(grid, k, ntri_table, tri_table, edge_axis, edge_low):
    """Marching cubes over one sample grid, in lattice coordinates.

    Cells are scanned z-outer, y, x-inner; each cell's triangle edges
    are emitted in table order. A vertex is created the first time its
    (canonical low-corner, axis) edge appears and reused afterwards.
    Interpolation always runs from the edge's low corner toward +axis,
    with t = (k - s0) / (s1 - s0) and t = 0 on a degenerate edge.

    Returns (verts, tris): float64 (nv, 3) lattice positions and
    int32 (nt, 3) vertex indices.
    """
    nx, ny, nz = grid.shape
    ncx, ncy, ncz = nx - 1, ny - 1, nz - 1
    ncells = ncx * ncy * ncz

    codes = np.empty(ncells, dtype=np.uint8)
    total = 0
    ic = 0
    for cz in range(ncz):
        for cy in range(ncy):
            for cx in range(ncx):
                code = 0
                if grid[cx, cy, cz] >= k:
                    code |= 1
                if grid[cx + 1, cy, cz] >= k:
                    code |= 2
                if grid[cx + 1, cy + 1, cz] >= k:
                    code |= 4
                if grid[cx, cy + 1, cz] >= k:
                    code |= 8
                if grid[cx, cy, cz + 1] >= k:
                    code |= 16
                if grid[cx + 1, cy, cz + 1] >= k:
                    code |= 32
                if grid[cx + 1, cy + 1, cz + 1] >= k:
                    code |= 64
                if grid[cx, cy + 1, cz + 1] >= k:
                    code |= 128
                codes[ic] = code
                ic += 1
                total += ntri_table[code]

    tris = np.empty((total, 3), dtype=np.int32)
    verts = np.empty((3 * total, 3), dtype=np.float64)
    vert_ids = np.full((3, nx, ny, nz), -1, dtype=np.int32)
    nv = 0
    itri = 0
    ic = 0
    for cz in range(ncz):
        for cy in range(ncy):
            for cx in range(ncx):
                code = codes[ic]
                ic += 1
                nt = ntri_table[code]
                if nt == 0:
                    continue
                for slot in range(3 * nt):
                    e = tri_table[code, slot]
                    ax = edge_axis[e]
                    px = cx + edge_low[e, 0]
                    py = cy + edge_low[e, 1]
                    pz = cz + edge_low[e, 2]
                    vid = vert_ids[ax, px, py, pz]
                    if vid < 0:
                        s0 = grid[px, py, pz]
                        if ax == 0:
                            s1 = grid[px + 1, py, pz]
                        elif ax == 1:
                            s1 = grid[px, py + 1, pz]
                        else:
                            s1 = grid[px, py, pz + 1]
                        denom = s1 - s0
                        if denom == 0.0:
                            t = 0.0
                        else:
                            t = (k - s0) / denom
                        fx = float(px)
                        fy = float(py)
                        fz = float(pz)
                        if ax == 0:
                            fx = px + t
                        elif ax == 1:
                            fy = py + t
                        else:
                            fz = pz + t
                        verts[nv, 0] = fx
                        verts[nv, 1] = fy
                        verts[nv, 2] = fz
                        vid = nv
                        vert_ids[ax, px, py, pz] = vid
                        nv += 1
                    tris[itri, slot % 3] = vid
                    if slot % 3 == 2:
                        itri += 1
    return verts[:nv].copy(), tris
