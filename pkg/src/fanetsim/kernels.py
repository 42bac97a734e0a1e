"""Hot numeric kernels.

Each kernel exists twice: an explicit-loop version compiled with numba and a
vectorized numpy version. Both use the same floating point operation order so
their results are bit-identical; the public names bind to the numba version
unless ``FANETSIM_DISABLE_NUMBA`` is set (see ``_accel``).
"""

import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "BACKEND",
    "adjacency",
    "reflect_into_box",
    "merge_newer",
    "count_below",
    "pair_errors",
]


# --------------------------------------------------------------------------
# adjacency
# --------------------------------------------------------------------------
def _adjacency_loop(pos, comm_range):
    n = pos.shape[0]
    r2 = comm_range * comm_range
    out = np.zeros((n, n), dtype=np.bool_)
    for i in range(n):
        for j in range(i + 1, n):
            dx = pos[i, 0] - pos[j, 0]
            dy = pos[i, 1] - pos[j, 1]
            dz = pos[i, 2] - pos[j, 2]
            if dx * dx + dy * dy + dz * dz <= r2:
                out[i, j] = True
                out[j, i] = True
    return out


def _adjacency_np(pos, comm_range):
    d = pos[:, None, :] - pos[None, :, :]
    d2 = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
    out = d2 <= comm_range * comm_range
    np.fill_diagonal(out, False)
    return out


# --------------------------------------------------------------------------
# reflection at arena faces
# --------------------------------------------------------------------------
def _reflect_loop(pos, lo, hi):
    out = np.empty_like(pos)
    n = pos.shape[0]
    for i in range(n):
        for k in range(3):
            w = hi[k] - lo[k]
            x = pos[i, k]
            if w <= 0.0:
                out[i, k] = lo[k]
            elif x < lo[k] or x > hi[k]:
                y = (x - lo[k]) % (2.0 * w)
                if y > w:
                    y = 2.0 * w - y
                out[i, k] = lo[k] + y
            else:
                out[i, k] = x
    return out


def _reflect_np(pos, lo, hi):
    w = hi - lo
    outside = (pos < lo) | (pos > hi)
    safe_w = np.where(w > 0.0, w, 1.0)
    y = (pos - lo) % (2.0 * safe_w)
    y = np.where(y > safe_w, 2.0 * safe_w - y, y)
    out = np.where(outside, lo + y, pos)
    return np.where(w > 0.0, out, lo)


# --------------------------------------------------------------------------
# counter-freshness merge, in place on dst; returns the number of rows taken
# --------------------------------------------------------------------------
def _merge_loop(dst_pos, dst_cnt, dst_t, src_pos, src_cnt, src_t):
    changed = 0
    for i in range(dst_cnt.shape[0]):
        if src_cnt[i] > dst_cnt[i]:
            dst_cnt[i] = src_cnt[i]
            dst_t[i] = src_t[i]
            dst_pos[i, 0] = src_pos[i, 0]
            dst_pos[i, 1] = src_pos[i, 1]
            dst_pos[i, 2] = src_pos[i, 2]
            changed += 1
    return changed


def _merge_np(dst_pos, dst_cnt, dst_t, src_pos, src_cnt, src_t):
    take = src_cnt > dst_cnt
    if not take.any():
        return 0
    dst_cnt[take] = src_cnt[take]
    dst_t[take] = src_t[take]
    dst_pos[take] = src_pos[take]
    return int(take.sum())


# --------------------------------------------------------------------------
# Monte-Carlo bit error tally
# --------------------------------------------------------------------------
def _count_below_loop(u, p):
    c = 0
    for i in range(u.shape[0]):
        if u[i] < p:
            c += 1
    return c


def _count_below_np(u, p):
    return int(np.count_nonzero(u < p))


# --------------------------------------------------------------------------
# per-pair cache error and age, summed over ordered pairs i != j
# --------------------------------------------------------------------------
def _pair_errors_loop(cache_pos, cache_cnt, cache_t, true_pos, now, diag):
    n = true_pos.shape[0]
    err = 0.0
    age = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if cache_cnt[i, j] == 0:
                err += diag
                age += now
            else:
                dx = cache_pos[i, j, 0] - true_pos[j, 0]
                dy = cache_pos[i, j, 1] - true_pos[j, 1]
                dz = cache_pos[i, j, 2] - true_pos[j, 2]
                err += np.sqrt(dx * dx + dy * dy + dz * dz)
                age += now - cache_t[i, j]
    return err, age


def _pair_errors_np(cache_pos, cache_cnt, cache_t, true_pos, now, diag):
    n = true_pos.shape[0]
    d = cache_pos - true_pos[None, :, :]
    dist = np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])
    live = cache_cnt > 0
    off = ~np.eye(n, dtype=np.bool_)
    err_terms = np.where(live, dist, diag)[off]
    age_terms = np.where(live, now - cache_t, now)[off]
    # row-major sequential sums to match the loop version exactly
    err = 0.0
    for v in err_terms.tolist():
        err += v
    age = 0.0
    for v in age_terms.tolist():
        age += v
    return err, age


numpy_impl = {
    "adjacency": _adjacency_np,
    "reflect_into_box": _reflect_np,
    "merge_newer": _merge_np,
    "count_below": _count_below_np,
    "pair_errors": _pair_errors_np,
}

loop_impl = {
    "adjacency": _adjacency_loop,
    "reflect_into_box": _reflect_loop,
    "merge_newer": _merge_loop,
    "count_below": _count_below_loop,
    "pair_errors": _pair_errors_loop,
}

if HAVE_NUMBA:
    numba_impl = {name: njit(fn) for name, fn in loop_impl.items()}
    _active = numba_impl
    BACKEND = "numba"
else:
    numba_impl = None
    _active = numpy_impl
    BACKEND = "numpy"

adjacency = _active["adjacency"]
reflect_into_box = _active["reflect_into_box"]
merge_newer = _active["merge_newer"]
count_below = _active["count_below"]
pair_errors = _active["pair_errors"]
