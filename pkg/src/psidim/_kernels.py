"""Hot inner loops: pairwise sup-distances and the shattering witness search.

Each kernel exists twice, a numba ``@njit`` loop version and a vectorised
pure-numpy version.  The public names at the bottom of this module are bound
to one or the other at import time:

* numba is used when it imports cleanly and ``PSIDIM_PURE_NUMPY`` is unset
  (or ``0``);
* setting ``PSIDIM_PURE_NUMPY=1`` forces the numpy path.

Both paths return identical results, including which certificate is found
first, so they can be swapped freely.
"""
import itertools
import os

import numpy as np

try:
    from numba import njit
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

PURE_NUMPY = os.environ.get("PSIDIM_PURE_NUMPY", "0") not in ("", "0", "false", "no")
USE_NUMBA = HAS_NUMBA and not PURE_NUMPY

_CHUNK = 4096


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def distance_matrix_numpy(values):
    """values: (n, F, Q) -> (F, F) matrix of max_{i,k} |v[i,f,k] - v[i,g,k]|."""
    diff = np.abs(values[:, :, None, :] - values[:, None, :, :])
    return diff.max(axis=(0, 3))


def _candidate_indices(row):
    # finite values, first occurrence only, in function-index order
    seen = set()
    out = []
    for f, u in enumerate(row):
        if np.isfinite(u) and u not in seen:
            seen.add(u)
            out.append(f)
    return out


def _dichotomy_bits(k):
    codes = np.arange(1 << k)
    return ((codes[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)


def shatter_search_numpy(plus_val, minus_val, upper, gamma):
    k, n_opt, n_fun = upper.shape
    n_dich = 1 << k
    ybits = _dichotomy_bits(k)  # (D, k), True means y_i = +1
    for assign in itertools.product(range(n_opt), repeat=k):
        u = upper[np.arange(k), list(assign)]  # (k, F)
        pv = plus_val[np.arange(k), list(assign)]
        mv = minus_val[np.arange(k), list(assign)]
        cands = [_candidate_indices(u[i]) for i in range(k)]
        if any(len(c) == 0 for c in cands):
            continue
        combos = itertools.product(*cands)
        while True:
            block = np.array(list(itertools.islice(combos, _CHUNK)), dtype=np.int64)
            if block.size == 0:
                break
            block = block.reshape(-1, k)
            b = u[np.arange(k)[None, :], block]  # (nb, k)
            plus = (pv[None, :, :] - b[:, :, None]) >= gamma  # (nb, k, F)
            minus = (mv[None, :, :] + b[:, :, None]) >= gamma
            ok_pt = np.where(ybits[None, :, :, None], plus[:, None], minus[:, None])
            realized = ok_pt.all(axis=2)  # (nb, D, F)
            covered = realized.any(axis=2).all(axis=1)
            hits = np.flatnonzero(covered)
            if hits.size:
                j = hits[0]
                realizers = realized[j].argmax(axis=1).astype(np.int64)
                return True, np.array(assign, dtype=np.int64), b[j].copy(), realizers
    return (False, np.zeros(k, dtype=np.int64), np.zeros(k),
            np.full(n_dich, -1, dtype=np.int64))


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def distance_matrix_numba(values):
        n, F, Q = values.shape
        out = np.zeros((F, F))
        for f in range(F):
            for g in range(f + 1, F):
                d = 0.0
                for i in range(n):
                    for q in range(Q):
                        a = abs(values[i, f, q] - values[i, g, q])
                        if a > d:
                            d = a
                out[f, g] = d
                out[g, f] = d
        return out

    @njit(cache=True)
    def _is_candidate(row, c):
        u = row[c]
        if not np.isfinite(u):
            return False
        for g in range(c):
            if row[g] == u:
                return False
        return True

    @njit(cache=True)
    def shatter_search_numba(plus_val, minus_val, upper, gamma):
        k, n_opt, n_fun = upper.shape
        n_dich = 1 << k
        full = n_dich - 1
        assign = np.zeros(k, dtype=np.int64)
        cand = np.zeros(k, dtype=np.int64)
        b = np.zeros(k)
        realizers = np.full(n_dich, -1, dtype=np.int64)
        plus = np.zeros(n_fun, dtype=np.int64)
        minus = np.zeros(n_fun, dtype=np.int64)
        while True:
            cand[:] = 0
            while True:
                valid = True
                for i in range(k):
                    if not _is_candidate(upper[i, assign[i]], cand[i]):
                        valid = False
                        break
                if valid:
                    for i in range(k):
                        b[i] = upper[i, assign[i], cand[i]]
                    for f in range(n_fun):
                        pm = 0
                        mm = 0
                        for i in range(k):
                            if plus_val[i, assign[i], f] - b[i] >= gamma:
                                pm |= 1 << i
                            if minus_val[i, assign[i], f] + b[i] >= gamma:
                                mm |= 1 << i
                        plus[f] = pm
                        minus[f] = mm
                    realizers[:] = -1
                    count = 0
                    for f in range(n_fun):
                        for y in range(n_dich):
                            if realizers[y] < 0:
                                if (y & ~plus[f] & full) == 0 and (~y & ~minus[f] & full) == 0:
                                    realizers[y] = f
                                    count += 1
                        if count == n_dich:
                            break
                    if count == n_dich:
                        return True, assign.copy(), b.copy(), realizers.copy()
                # advance candidate odometer (last point fastest)
                pos = k - 1
                while pos >= 0:
                    cand[pos] += 1
                    if cand[pos] < n_fun:
                        break
                    cand[pos] = 0
                    pos -= 1
                if pos < 0:
                    break
            pos = k - 1
            while pos >= 0:
                assign[pos] += 1
                if assign[pos] < n_opt:
                    break
                assign[pos] = 0
                pos -= 1
            if pos < 0:
                break
        realizers[:] = -1
        return False, np.zeros(k, dtype=np.int64), np.zeros(k), realizers

else:  # pragma: no cover
    distance_matrix_numba = distance_matrix_numpy
    shatter_search_numba = shatter_search_numpy


if USE_NUMBA:
    distance_matrix = distance_matrix_numba
    _shatter_search = shatter_search_numba
else:
    distance_matrix = distance_matrix_numpy
    _shatter_search = shatter_search_numpy


def _to_ordered(x):
    # float64 -> int64 with the same ordering (for bisection over floats)
    i = x.view(np.int64)
    return np.where(i < 0, np.int64(-0x8000000000000000) - i, i)


def _from_ordered(i):
    return np.where(i < 0, np.int64(-0x8000000000000000) - i, i).view(np.float64)


def largest_witness(plus_val, gamma):
    """Largest float ``b`` with ``plus_val - b >= gamma`` (as computed), elementwise.

    ``plus_val - gamma`` can be off after rounding; an exact bisection over
    the float ordering makes the definitional inequality hold and be tight.
    Non-finite entries come back as ``plus_val - gamma``.
    """
    v = np.asarray(plus_val, dtype=np.float64)
    shape = v.shape
    v = v.ravel()
    with np.errstate(invalid="ignore"):
        c = v - gamma
    out = c.copy()
    fin = np.isfinite(c)
    if fin.any():
        vf, cf = v[fin], c[fin]
        pad = 4 * np.spacing(np.maximum(np.abs(vf), abs(gamma)))
        lo = _to_ordered(cf - pad)   # satisfies the inequality
        hi = _to_ordered(cf + pad)   # violates it
        while True:
            open_ = hi - lo > 1
            if not open_.any():
                break
            mid = lo + (hi - lo) // 2
            ok = (vf - _from_ordered(mid)) >= gamma
            lo = np.where(open_ & ok, mid, lo)
            hi = np.where(open_ & ~ok, mid, hi)
        out[fin] = _from_ordered(lo)
    return out.reshape(shape)


def shatter_search(plus_val, minus_val, gamma):
    """Search for a witness vector shattering ``k`` points.

    For point ``i`` under option ``a`` (a psi-mapping or index pair),
    function ``f`` realises label +1 iff ``plus_val[i, a, f] - b_i >= gamma``
    and label -1 iff ``minus_val[i, a, f] + b_i >= gamma``; ``-inf`` entries
    never qualify.  Returns ``(found, assign, b, realizers)`` where
    ``realizers[y]`` is the first function realising dichotomy ``y`` (bit
    ``i`` set means ``y_i = +1``).
    """
    plus_val = np.ascontiguousarray(plus_val, dtype=np.float64)
    minus_val = np.ascontiguousarray(minus_val, dtype=np.float64)
    if plus_val.shape[0] == 0:
        # the empty set is shattered by any nonempty class
        return True, np.zeros(0, np.int64), np.zeros(0), np.zeros(1, np.int64)
    upper = np.ascontiguousarray(largest_witness(plus_val, gamma))
    found, assign, b, realizers = _shatter_search(plus_val, minus_val, upper, float(gamma))
    return bool(found), assign, b, realizers
