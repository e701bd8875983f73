"""Hot inner loops, each in a numba build and a numpy/python build.

The two builds of every kernel implement the same arithmetic in the same
order and consume the same pre-drawn inputs, so their outputs are identical
to the bit. `backend=None` defers to the AWGSIM_BACKEND environment flag.
"""

import math

import numpy as np

from ._backend import HAS_NUMBA, resolve_backend

if HAS_NUMBA:
    from numba import njit

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------- dead time

def _deadtime_numpy(candidates: np.ndarray, blank: int) -> np.ndarray:
    out = np.empty(candidates.size, dtype=np.int64)
    k = 0
    i = 0
    n = candidates.size
    while i < n:
        g = candidates[i]
        out[k] = g
        k += 1
        # every candidate inside the blanking window is dropped in one jump
        i = int(np.searchsorted(candidates, g + blank + 1, side="left"))
    return out[:k]


def _deadtime_serial(candidates, blank):
    out = np.empty(candidates.size, dtype=np.int64)
    k = 0
    live_from = np.int64(-(2**62))
    for i in range(candidates.size):
        g = candidates[i]
        if g >= live_from:
            out[k] = g
            k += 1
            live_from = g + blank + 1
    return out[:k]


if HAS_NUMBA:
    _deadtime_numba = njit(cache=True)(_deadtime_serial)


def deadtime_filter(candidates: np.ndarray, blank: int, backend=None) -> np.ndarray:
    """Drop clicks arriving within `blank` gates after an accepted click.

    `candidates` must be sorted, unique int64 gate indices. Returns the
    accepted subset, also sorted. Non-paralyzable: only accepted clicks
    open a blanking window.
    """
    candidates = np.ascontiguousarray(candidates, dtype=np.int64)
    if blank < 0:
        raise ValueError("blank gate count must be >= 0")
    if candidates.size == 0 or blank == 0:
        return candidates.copy()
    if resolve_backend(backend):
        return _deadtime_numba(candidates, np.int64(blank))
    return _deadtime_numpy(candidates, int(blank))


# ------------------------------------------------------------ intersection

def _intersect_serial(a, b):
    i = 0
    j = 0
    n = 0
    while i < a.size and j < b.size:
        if a[i] == b[j]:
            n += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    return n


if HAS_NUMBA:
    _intersect_numba = njit(cache=True)(_intersect_serial)


def intersect_count(a: np.ndarray, b: np.ndarray, backend=None) -> int:
    """Number of common entries of two sorted unique int64 arrays."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return 0
    if resolve_backend(backend):
        return int(_intersect_numba(a, b))
    return int(np.intersect1d(a, b, assume_unique=True).size)


# --------------------------------------------------- phase branch choice

def _choose_serial(principal, anchors):
    out = np.empty(principal.size, dtype=np.float64)
    for i in range(principal.size):
        c1 = principal[i]
        c2 = _TWO_PI - principal[i]
        a = anchors[i]
        d1 = abs((c1 - a + math.pi) % _TWO_PI - math.pi)
        d2 = abs((c2 - a + math.pi) % _TWO_PI - math.pi)
        if d2 < d1:
            out[i] = c2
        else:
            out[i] = c1
    return out


if HAS_NUMBA:
    _choose_numba = njit(cache=True)(_choose_serial)


def _choose_numpy(principal, anchors):
    c1 = principal
    c2 = _TWO_PI - principal
    d1 = np.abs((c1 - anchors + math.pi) % _TWO_PI - math.pi)
    d2 = np.abs((c2 - anchors + math.pi) % _TWO_PI - math.pi)
    return np.where(d2 < d1, c2, c1)


def choose_phase_branch(
    principal: np.ndarray, anchors: np.ndarray, backend=None
) -> np.ndarray:
    """Resolve the arccos branch ambiguity against per-sample anchors.

    `principal` holds principal-value angles in [0, pi]; for each sample the
    candidate in {p, 2*pi - p} closer, on the circle, to the matching anchor
    is kept (ties keep p). A lone intensity record cannot distinguish a phase
    from its mirror image, so anchors come from outside: a caller that knows
    the recent phase history supplies it here, one anchor per sample.
    """
    principal = np.ascontiguousarray(principal, dtype=np.float64)
    anchors = np.ascontiguousarray(anchors, dtype=np.float64)
    if principal.shape != anchors.shape:
        raise ValueError("principal and anchors must match in shape")
    if resolve_backend(backend):
        return _choose_numba(principal, anchors)
    return _choose_numpy(principal, anchors)


# ------------------------------------------------------------- CHSH scan

def _chsh_serial(e):
    n_a, n_b = e.shape
    best_abs = -1.0
    best_s = 0.0
    ia = -1
    iap = -1
    ib = -1
    ibp = -1
    for a in range(n_a):
        for ap in range(n_a):
            for b in range(n_b):
                e1 = e[a, b]
                e3 = e[ap, b]
                for bp in range(n_b):
                    s = (e1 - e[a, bp]) + (e3 + e[ap, bp])
                    if abs(s) > best_abs:  # NaN fails the compare and is skipped
                        best_abs = abs(s)
                        best_s = s
                        ia = a
                        iap = ap
                        ib = b
                        ibp = bp
    return best_s, ia, iap, ib, ibp


if HAS_NUMBA:
    _chsh_numba = njit(cache=True)(_chsh_serial)


def _chsh_numpy(e):
    n_a, n_b = e.shape
    best_abs = -1.0
    best = (0.0, -1, -1, -1, -1)
    for a in range(n_a):
        row = e[a]
        # block[ap, b, bp] = (E[a,b] - E[a,bp]) + (E[ap,b] + E[ap,bp])
        block = (row[:, None] - row[None, :]) + (e[:, :, None] + e[:, None, :])
        abs_block = np.abs(block)
        abs_block[~np.isfinite(abs_block)] = -np.inf
        flat = int(np.argmax(abs_block))
        val = float(abs_block.flat[flat])
        if val > best_abs:
            ap, rem = divmod(flat, n_b * n_b)
            b, bp = divmod(rem, n_b)
            best_abs = val
            best = (float(block[ap, b, bp]), a, ap, b, bp)
    if best_abs < 0.0 or not math.isfinite(best_abs):
        return 0.0, -1, -1, -1, -1
    return best


def chsh_scan_kernel(e: np.ndarray, backend=None):
    """Exhaustive max-|S| scan over setting quadruples.

    `e` is the correlation matrix E[a, b] with NaN marking combinations the
    data cannot support. Returns (s, ia, iap, ib, ibp); indices are -1 when
    no quadruple is fully defined. Ties resolve to the lexicographically
    smallest (a, a', b, b').
    """
    e = np.ascontiguousarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
        raise ValueError("correlation matrix must be 2-D and non-empty")
    if resolve_backend(backend):
        s, ia, iap, ib, ibp = _chsh_numba(e)
        return float(s), int(ia), int(iap), int(ib), int(ibp)
    return _chsh_numpy(e)
