"""Backend-equivalence and brute-force oracle tests for the hot kernels.

Every kernel has a numba build and a numpy/python build. Both must agree
bit-for-bit with each other and with the naive reference implementations
written out longhand below.
"""

import math

import numpy as np
import pytest

from awgsim._backend import HAS_NUMBA
from awgsim.kernels import (
    choose_phase_branch,
    chsh_scan_kernel,
    deadtime_filter,
    intersect_count,
)

BACKENDS = ["numpy"] + (["numba"] if HAS_NUMBA else [])


def brute_deadtime(candidates, blank):
    """Walk every candidate click, dropping those inside a blanking window."""
    accepted = []
    live_from = -(10**18)
    for g in candidates:
        if g >= live_from:
            accepted.append(g)
            live_from = g + blank + 1
    return np.asarray(accepted, dtype=np.int64)


def brute_choose(principal, anchors):
    out = []
    for p, a in zip(principal, anchors):
        cand1 = p
        cand2 = 2.0 * math.pi - p
        d1 = abs((cand1 - a + math.pi) % (2.0 * math.pi) - math.pi)
        d2 = abs((cand2 - a + math.pi) % (2.0 * math.pi) - math.pi)
        out.append(cand1 if d1 <= d2 else cand2)
    return np.asarray(out)


def brute_chsh(e):
    """Exhaustive quadruple loop, first (lexicographic) strict maximum wins."""
    n_a, n_b = e.shape
    best = -1.0
    best_s = 0.0
    best_idx = (-1, -1, -1, -1)
    for a in range(n_a):
        for ap in range(n_a):
            for b in range(n_b):
                for bp in range(n_b):
                    e1, e2, e3, e4 = e[a, b], e[a, bp], e[ap, b], e[ap, bp]
                    if np.isnan(e1) or np.isnan(e2) or np.isnan(e3) or np.isnan(e4):
                        continue
                    s = (e1 - e2) + (e3 + e4)
                    if abs(s) > best:
                        best = abs(s)
                        best_s = s
                        best_idx = (a, ap, b, bp)
    return best_s, best_idx


@pytest.mark.parametrize("backend", BACKENDS)
def test_deadtime_filter_matches_brute_force(backend):
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(0, 200))
        candidates = np.unique(rng.integers(0, 2000, size=n)).astype(np.int64)
        blank = int(rng.integers(0, 50))
        got = deadtime_filter(candidates, blank, backend=backend)
        want = brute_deadtime(candidates, blank)
        assert got.dtype == np.int64
        assert np.array_equal(got, want)


@pytest.mark.parametrize("backend", BACKENDS)
def test_deadtime_filter_zero_blank_is_identity(backend):
    candidates = np.arange(0, 50, dtype=np.int64)
    got = deadtime_filter(candidates, 0, backend=backend)
    assert np.array_equal(got, candidates)


@pytest.mark.parametrize("backend", BACKENDS)
def test_deadtime_filter_monotone_in_blank(backend):
    # longer dead time can only remove clicks, never add them
    rng = np.random.default_rng(11)
    for _ in range(100):
        candidates = np.unique(rng.integers(0, 5000, size=300)).astype(np.int64)
        counts = [
            deadtime_filter(candidates, blank, backend=backend).size
            for blank in (0, 1, 5, 20, 100, 1000)
        ]
        assert all(a >= b for a, b in zip(counts, counts[1:]))


@pytest.mark.parametrize("backend", BACKENDS)
def test_intersect_count(backend):
    rng = np.random.default_rng(3)
    for _ in range(200):
        a = np.unique(rng.integers(0, 400, size=rng.integers(0, 150)))
        b = np.unique(rng.integers(0, 400, size=rng.integers(0, 150)))
        got = intersect_count(a.astype(np.int64), b.astype(np.int64), backend=backend)
        assert got == np.intersect1d(a, b).size


@pytest.mark.parametrize("backend", BACKENDS)
def test_choose_phase_branch_matches_brute(backend):
    rng = np.random.default_rng(5)
    for _ in range(50):
        principal = rng.uniform(0.0, math.pi, size=300)
        anchors = rng.uniform(-10.0, 10.0, size=300)
        got = choose_phase_branch(principal, anchors, backend=backend)
        want = brute_choose(principal, anchors)
        assert np.array_equal(got, want)


@pytest.mark.parametrize("backend", BACKENDS)
def test_choose_phase_branch_picks_nearer_candidate(backend):
    rng = np.random.default_rng(29)
    principal = rng.uniform(0.0, math.pi, size=5000)
    anchors = rng.uniform(0.0, 2.0 * math.pi, size=5000)
    got = choose_phase_branch(principal, anchors, backend=backend)
    other = np.where(got == principal, 2.0 * math.pi - principal, principal)
    d_got = np.abs((got - anchors + math.pi) % (2 * math.pi) - math.pi)
    d_other = np.abs((other - anchors + math.pi) % (2 * math.pi) - math.pi)
    assert np.all(d_got <= d_other)
    # either candidate explains the same interference intensity
    assert np.allclose(np.cos(got), np.cos(principal), atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_choose_phase_branch_recovers_anchored_walk(backend):
    # with anchors from the walk itself the right branch comes back every
    # time; the residual is just the arccos(cos) round trip, which loses
    # precision only where the fringe flattens out
    rng = np.random.default_rng(9)
    true = np.cumsum(rng.normal(0.0, 0.05, size=4000)) + 1.0
    intensity = 0.5 * (1.0 + np.cos(true))
    principal = np.arccos(np.clip(2.0 * intensity - 1.0, -1.0, 1.0))
    got = choose_phase_branch(principal, true % (2 * math.pi), backend=backend)
    err = np.abs((got - true + math.pi) % (2 * math.pi) - math.pi)
    assert err.max() < 1e-6


@pytest.mark.parametrize("backend", BACKENDS)
def test_choose_phase_branch_lagged_anchor_relocks(backend):
    # anchoring on the previous sample's phase mislabels at most the sample
    # where the walk crosses a fringe extremum, and by no more than two
    # steps; the next sample snaps back to the true branch
    rng = np.random.default_rng(41)
    step = 0.03
    true = np.cumsum(rng.uniform(-step, step, size=6000)) + 0.5
    intensity = 0.5 * (1.0 + np.cos(true))
    principal = np.arccos(np.clip(2.0 * intensity - 1.0, -1.0, 1.0))
    anchors = np.concatenate(([true[0]], true[:-1])) % (2 * math.pi)
    got = choose_phase_branch(principal, anchors, backend=backend)
    err = np.abs((got - true + math.pi) % (2 * math.pi) - math.pi)
    assert err.max() <= 2 * step + 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_chsh_kernel_matches_brute_force(backend):
    rng = np.random.default_rng(17)
    for _ in range(20):
        n_a = int(rng.integers(2, 9))
        n_b = int(rng.integers(2, 9))
        e = rng.uniform(-1, 1, size=(n_a, n_b))
        holes = rng.random(size=e.shape) < 0.2
        e[holes] = np.nan
        s, ia, iap, ib, ibp = chsh_scan_kernel(e, backend=backend)
        want_s, want_idx = brute_chsh(e)
        if want_idx == (-1, -1, -1, -1):
            assert (ia, iap, ib, ibp) == (-1, -1, -1, -1)
        else:
            assert s == want_s
            assert (ia, iap, ib, ibp) == want_idx


def test_chsh_kernel_all_nan_reports_no_solution():
    e = np.full((4, 4), np.nan)
    s, ia, iap, ib, ibp = chsh_scan_kernel(e, backend="numpy")
    assert (ia, iap, ib, ibp) == (-1, -1, -1, -1)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba unavailable")
def test_backends_agree_bitwise():
    rng = np.random.default_rng(23)
    candidates = np.unique(rng.integers(0, 10**7, size=5000)).astype(np.int64)
    a1 = deadtime_filter(candidates, 1000, backend="numpy")
    a2 = deadtime_filter(candidates, 1000, backend="numba")
    assert np.array_equal(a1, a2)

    other = np.unique(rng.integers(0, 10**7, size=5000)).astype(np.int64)
    assert intersect_count(a1, other, backend="numpy") == intersect_count(
        a2, other, backend="numba"
    )

    principal = rng.uniform(0, math.pi, size=10000)
    anchors = rng.uniform(0, 2 * math.pi, size=10000)
    t1 = choose_phase_branch(principal, anchors, backend="numpy")
    t2 = choose_phase_branch(principal, anchors, backend="numba")
    assert np.array_equal(t1, t2)

    e = rng.uniform(-1, 1, size=(40, 40))
    e[rng.random(size=e.shape) < 0.1] = np.nan
    assert chsh_scan_kernel(e, backend="numpy") == chsh_scan_kernel(e, backend="numba")
