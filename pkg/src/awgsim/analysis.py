"""Turn raw coincidence records into fringe fits and a CHSH figure.

The phase plane is tiled with a mixed partition per axis: 3 degree bins
where the monitor calibration is steep, and one 45 degree bin around
each fringe extremum where the tap intensity barely moves.  Everything
downstream (fits, slices, correlation scan) consumes the binned map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .kernels import chsh_scan_kernel
from .experiment_sim import RunRecords, axis_bin_centers_rad, axis_bin_widths_rad

_TWO_PI = 2.0 * math.pi


def _conjugate_indices() -> np.ndarray:
    conj = np.empty(92, dtype=np.int64)
    conj[0], conj[46] = 46, 0
    conj[1:46] = np.arange(47, 92)
    conj[47:92] = np.arange(1, 46)
    return conj


@dataclass(frozen=True, eq=False)
class CoincidenceMap:
    """Phase-binned coincidence counts with their exposure bookkeeping.

    `phase_spread` records where the contents sit inside their bins:
    "point" means every entry was evaluated at the bin center (synthetic
    maps, scanned setpoints), "uniform" means the records wandered
    evenly across each bin (a drifting interferometer).  Uniform spread
    smears the fringe, so the fits rescale their regressors to undo it;
    see `fit_fringe`.
    """

    counts: np.ndarray
    accidentals: np.ndarray
    n_records: np.ndarray
    record_interval_s: float
    seed: int | None = None
    centers_rad: np.ndarray = field(default_factory=axis_bin_centers_rad)
    widths_rad: np.ndarray = field(default_factory=axis_bin_widths_rad)
    phase_spread: str = "point"

    def __post_init__(self) -> None:
        n = self.centers_rad.size
        for name in ("counts", "accidentals", "n_records"):
            if getattr(self, name).shape != (n, n):
                raise ValidationError(f"{name} must be a {n}x{n} matrix")
        if self.record_interval_s <= 0:
            raise ValidationError("record interval must be positive")
        if np.any(self.counts < 0) or np.any(self.accidentals < 0):
            raise ValidationError("counts cannot be negative")
        if self.phase_spread not in ("point", "uniform"):
            raise ValidationError(
                f"unknown phase spread {self.phase_spread!r}"
            )

    def bin_index(self, phi_rad: np.ndarray) -> np.ndarray:
        """Map angles to axis bin indices."""
        x = (np.degrees(np.asarray(phi_rad)) - 22.5) % 360.0
        idx = np.empty(x.shape, dtype=np.int64)
        low = x < 135.0
        mid = (x >= 135.0) & (x < 180.0)
        high = (x >= 180.0) & (x < 315.0)
        wrap = x >= 315.0
        idx[low] = 1 + (x[low] // 3.0).astype(np.int64)
        idx[mid] = 46
        idx[high] = 47 + ((x[high] - 180.0) // 3.0).astype(np.int64)
        idx[wrap] = 0
        return idx

    def exposure_s(self) -> np.ndarray:
        return self.n_records * self.record_interval_s

    def rates(self, subtract: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """Per-bin coincidence rate and its standard error, NaN where empty.

        With `subtract` the accidental estimate is removed first; the
        result is floored at zero and the uncertainties are combined in
        quadrature.
        """
        exposure = self.exposure_s()
        populated = self.n_records > 0
        if subtract:
            net, sigma_counts = subtracted_counts(self)
        else:
            net = self.counts
            sigma_counts = np.maximum(np.sqrt(self.counts), 1.0)
        rate = np.full(net.shape, np.nan)
        sigma = np.full(net.shape, np.nan)
        rate[populated] = net[populated] / exposure[populated]
        sigma[populated] = sigma_counts[populated] / exposure[populated]
        return rate, sigma

    def to_csv(self, path: str | Path) -> None:
        rate, sigma = self.rates()
        centers = np.degrees(self.centers_rad)
        with open(path, "w") as fh:
            if self.seed is not None:
                fh.write(f"# seed={self.seed}\n")
            fh.write("phi_a_deg,phi_b_deg,rate_hz,sigma\n")
            for i, j in zip(*np.nonzero(self.n_records > 0)):
                fh.write(
                    f"{float(centers[i])!r},{float(centers[j])!r},"
                    f"{float(rate[i, j])!r},{float(sigma[i, j])!r}\n"
                )


def subtracted_counts(map_: CoincidenceMap) -> tuple[np.ndarray, np.ndarray]:
    """Accidental-subtracted counts, floored at zero, with quadrature sigma."""
    net = np.maximum(map_.counts - map_.accidentals, 0.0)
    sigma = np.maximum(np.sqrt(map_.counts + map_.accidentals), 1.0)
    return net, sigma


def bin_records(
    records: RunRecords,
    record_interval_s: float | None = None,
    phase_spread: str = "uniform",
) -> CoincidenceMap:
    """Accumulate non-discarded records into the phase-plane map.

    Drifting phases wander across the bins, which is what the default
    `phase_spread` declares.  Pass "point" for scanned runs whose phases
    sit exactly on the bin centers.
    """
    kept = ~records.discarded
    if not np.any(kept):
        raise ValidationError("no usable records: everything was discarded")
    if record_interval_s is None:
        if len(records) < 2:
            raise ValidationError(
                "cannot infer the record interval from a single record; "
                "pass record_interval_s"
            )
        record_interval_s = float(np.median(np.diff(records.t_s)))
    shape = (92, 92)
    map_ = CoincidenceMap(
        counts=np.zeros(shape),
        accidentals=np.zeros(shape),
        n_records=np.zeros(shape, dtype=np.int64),
        record_interval_s=record_interval_s,
        seed=records.seed,
        phase_spread=phase_spread,
    )
    ia = map_.bin_index(records.phi_a[kept])
    ib = map_.bin_index(records.phi_b[kept])
    np.add.at(map_.counts, (ia, ib), records.coincidences[kept])
    np.add.at(map_.accidentals, (ia, ib), records.accidental_estimate[kept])
    np.add.at(map_.n_records, (ia, ib), 1)
    return map_


def make_synthetic_map(
    c0_rate_hz: float,
    visibility: float,
    delta_phi_rad: float = 0.0,
    exposure_s_per_bin: float = 100.0,
    accidental_rate_hz: float = 0.0,
    record_interval_s: float = 0.2,
    rng: np.random.Generator | None = None,
) -> CoincidenceMap:
    """Fill every bin of a map from the fringe model, optionally Poissonian.

    The model rate is C0 (1 - V cos(phi_a + phi_b + delta)) plus a flat
    accidental floor; visibilities above 1 are allowed for stress tests
    and simply clip the rate at zero.  Without `rng` the counts equal
    their expectations exactly.
    """
    if c0_rate_hz <= 0 or visibility < 0:
        raise ValidationError("need a positive rate and non-negative visibility")
    if accidental_rate_hz < 0:
        raise ValidationError("accidental rate cannot be negative")
    n_rec = int(round(exposure_s_per_bin / record_interval_s))
    if n_rec < 1:
        raise ValidationError("exposure shorter than one record")
    centers = axis_bin_centers_rad()
    phi = centers[:, None] + centers[None, :] + delta_phi_rad
    rate = np.maximum(c0_rate_hz * (1.0 - visibility * np.cos(phi)), 0.0)
    exposure = n_rec * record_interval_s
    lam = (rate + accidental_rate_hz) * exposure
    counts = rng.poisson(lam).astype(float) if rng is not None else lam
    return CoincidenceMap(
        counts=counts,
        accidentals=np.full(phi.shape, accidental_rate_hz * exposure),
        n_records=np.full(phi.shape, n_rec, dtype=np.int64),
        record_interval_s=record_interval_s,
    )


# ---------------------------------------------------------------- fitting


@dataclass(frozen=True)
class FringeFit:
    """Result of the three-parameter fringe fit r = A + B cos + C sin."""

    c0: float
    v: float
    v_sigma: float
    delta_phi_rad: float
    delta_phi_sigma_rad: float
    coefficients: tuple[float, float, float]
    covariance: np.ndarray
    n_bins: int
    n_iterations: int
    converged: bool
    subtracted: bool
    warnings: tuple[str, ...]


class FitNonConvergedError(ValidationError):
    """Raised when the reweighting loop runs out of iterations."""

    def __init__(self, message: str, fit: FringeFit):
        super().__init__(message)
        self.fit = fit


def _spread_gain(map_: CoincidenceMap, ia: np.ndarray, ib: np.ndarray) -> np.ndarray:
    """Fringe amplitude surviving the within-bin phase spread, per cell.

    Averaging cos(phi) over a bin of width w multiplies the amplitude by
    sin(w/2) / (w/2), the first Fourier coefficient of a uniform spread.
    Point-spread maps keep the full amplitude.
    """
    if map_.phase_spread == "point":
        return np.ones(ia.size)
    half = map_.widths_rad / 2.0
    gain = np.where(half > 0, np.sin(half) / np.maximum(half, 1e-300), 1.0)
    return gain[ia] * gain[ib]


def _solve_weighted(design: np.ndarray, y: np.ndarray, sigma: np.ndarray):
    w = 1.0 / sigma
    lhs = design * w[:, None]
    params, _, rank, _ = np.linalg.lstsq(lhs, y * w, rcond=None)
    if rank < 3:
        raise ValidationError(
            "phase coverage is degenerate: the fringe fit needs bins with "
            "at least three independent phase sums"
        )
    cov = np.linalg.inv(lhs.T @ lhs)
    return params, cov


def _irls(
    phi: np.ndarray,
    y: np.ndarray,
    sigma_y: np.ndarray,
    sigma_phi_sq: np.ndarray,
    exposure: np.ndarray,
    acc_counts: np.ndarray,
    damp: np.ndarray,
    max_iterations: int,
):
    """Iteratively reweighted fit that folds phase-bin width into errors.

    The effective variance of each bin is the count variance plus the
    model slope squared times the phase variance.  The first pass weights
    by observed counts; afterwards the count variance is rebuilt from the
    model prediction, because observed-count weights anticorrelate with
    the noise and bias the amplitude by roughly one count per bin.

    `damp` scales the oscillating regressors per bin.  For maps whose
    records spread across their bins the observed fringe is the
    bin-averaged one; fitting the damped model returns the amplitude of
    the underlying fringe instead of its smeared copy.
    """
    design = np.column_stack([np.ones_like(phi), damp * np.cos(phi), damp * np.sin(phi)])
    params, cov = _solve_weighted(design, y, sigma_y)
    iterations = 1
    converged = False
    while iterations < max_iterations:
        a, b, c = params
        pred = design @ params
        # floor the predicted rate so bins the model drives to zero cannot
        # grab unbounded weight and wreck the reweighting loop
        floor = 0.05 * max(a, 1e-30)
        var_counts = np.maximum(pred, floor) * exposure + 2.0 * acc_counts
        var_rate = np.maximum(var_counts, 1.0) / exposure**2
        slope = damp * (-b * np.sin(phi) + c * np.cos(phi))
        sigma_eff = np.sqrt(var_rate + slope**2 * sigma_phi_sq)
        new_params, cov = _solve_weighted(design, y, sigma_eff)
        iterations += 1
        scale = max(float(np.max(np.abs(params))), 1e-30)
        if np.max(np.abs(new_params - params)) < 1e-8 * scale:
            params = new_params
            converged = True
            break
        params = new_params
    return params, cov, iterations, converged


def _fit_from_params(params, cov, n_bins, iterations, converged, subtracted):
    a, b, c = (float(v) for v in params)
    if a <= 0:
        raise ValidationError("fitted mean rate is not positive")
    h = math.hypot(b, c)
    v = h / a
    grad_v = np.array([-h / a**2, b / (h * a), c / (h * a)]) if h > 0 else \
        np.array([0.0, 1.0 / a, 1.0 / a])
    v_sigma = float(math.sqrt(grad_v @ cov @ grad_v))
    delta = math.atan2(c, -b)
    if h > 0:
        grad_d = np.array([0.0, c / h**2, -b / h**2])
        d_sigma = float(math.sqrt(grad_d @ cov @ grad_d))
    else:
        d_sigma = math.pi
    warnings = ()
    if v > 1.05:
        warnings = ("fitted visibility exceeds 1 beyond tolerance",)
    return FringeFit(
        c0=a,
        v=v,
        v_sigma=v_sigma,
        delta_phi_rad=delta,
        delta_phi_sigma_rad=d_sigma,
        coefficients=(a, b, c),
        covariance=cov,
        n_bins=n_bins,
        n_iterations=iterations,
        converged=converged,
        subtracted=subtracted,
        warnings=warnings,
    )


def fit_fringe(
    map_: CoincidenceMap,
    subtract: bool = False,
    max_iterations: int = 10,
) -> FringeFit:
    """Fit C0 (1 - V cos(phi_a + phi_b + delta_phi)) to the binned rates.

    Uniform-spread maps report the bin-averaged fringe; the regressors
    carry the matching sin(w/2)/(w/2) factors so the returned V refers
    to the fringe itself and not its binned shadow.
    """
    populated = map_.n_records > 0
    if populated.sum() < 4:
        raise ValidationError("need at least four populated bins to fit")
    rate, sigma = map_.rates(subtract=subtract)
    ia, ib = np.nonzero(populated)
    phi = map_.centers_rad[ia] + map_.centers_rad[ib]
    sigma_phi_sq = (map_.widths_rad[ia] ** 2 + map_.widths_rad[ib] ** 2) / 12.0
    acc = map_.accidentals[populated] if subtract else np.zeros(ia.size)
    params, cov, iterations, converged = _irls(
        phi,
        rate[populated],
        sigma[populated],
        sigma_phi_sq,
        map_.exposure_s()[populated],
        acc,
        _spread_gain(map_, ia, ib),
        max_iterations,
    )
    fit = _fit_from_params(
        params, cov, int(populated.sum()), iterations, converged, subtract
    )
    if not converged:
        raise FitNonConvergedError(
            f"fringe fit did not converge in {max_iterations} iterations", fit
        )
    return fit


@dataclass(frozen=True)
class SliceFit:
    """One-dimensional fringe cut at a fixed setting of the other axis."""

    fixed_axis: str
    fixed_deg: float
    c0: float
    v: float
    v_sigma: float
    delta_phi_rad: float
    n_bins: int


def slice_fringe(
    map_: CoincidenceMap,
    fixed_axis: str,
    fixed_deg: float,
    subtract: bool = False,
    max_iterations: int = 10,
) -> SliceFit:
    """Fit the fringe along one axis with the other held at a bin center."""
    if fixed_axis not in ("a", "b"):
        raise ValidationError("fixed_axis must be 'a' or 'b'")
    fixed_idx = int(
        map_.bin_index(np.array([math.radians(fixed_deg)]))[0]
    )
    populated = map_.n_records > 0
    cells = populated[fixed_idx, :] if fixed_axis == "a" else populated[:, fixed_idx]
    if cells.sum() < 6:
        raise ValidationError(
            f"slice at {fixed_axis}={fixed_deg} deg has fewer than 6 bins"
        )
    rate, sigma = map_.rates(subtract=subtract)
    free = np.nonzero(cells)[0]
    if fixed_axis == "a":
        take = (np.full(free.size, fixed_idx), free)
    else:
        take = (free, np.full(free.size, fixed_idx))
    y = rate[take]
    s = sigma[take]
    phi = map_.centers_rad[free] + map_.centers_rad[fixed_idx]
    sigma_phi_sq = (
        map_.widths_rad[free] ** 2 + map_.widths_rad[fixed_idx] ** 2
    ) / 12.0
    acc = map_.accidentals[take] if subtract else np.zeros(free.size)
    params, cov, iterations, converged = _irls(
        phi, y, s, sigma_phi_sq, map_.exposure_s()[take], acc,
        _spread_gain(map_, take[0], take[1]), max_iterations,
    )
    fit = _fit_from_params(params, cov, int(cells.sum()), iterations, converged, subtract)
    if not converged:
        raise FitNonConvergedError("slice fit did not converge", fit)
    return SliceFit(
        fixed_axis=fixed_axis,
        fixed_deg=float(np.degrees(map_.centers_rad[fixed_idx])),
        c0=fit.c0,
        v=fit.v,
        v_sigma=fit.v_sigma,
        delta_phi_rad=fit.delta_phi_rad,
        n_bins=fit.n_bins,
    )


# ------------------------------------------------------------------- CHSH


def correlation_matrix(
    map_: CoincidenceMap, subtract: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """E(a, b) over all bin-center pairs, NaN where coverage is missing.

    E combines the four rates at (a, b), (a+pi, b+pi), (a+pi, b) and
    (a, b+pi); its uncertainty propagates the rate errors linearly.
    """
    rate, sigma = map_.rates(subtract=subtract)
    conj = _conjugate_indices()
    r_pp = rate
    r_cc = rate[conj][:, conj]
    r_cp = rate[conj, :]
    r_pc = rate[:, conj]
    plus = r_pp + r_cc
    minus = r_cp + r_pc
    total = plus + minus
    with np.errstate(invalid="ignore", divide="ignore"):
        e = (plus - minus) / total
        dp = (1.0 - e) / total
        dm = (1.0 + e) / total
        var = (
            dp**2 * (sigma**2 + sigma[conj][:, conj] ** 2)
            + dm**2 * (sigma[conj, :] ** 2 + sigma[:, conj] ** 2)
        )
    bad = ~np.isfinite(total) | (total <= 0)
    e[bad] = np.nan
    var[bad] = np.nan
    return e, np.sqrt(var)


@dataclass(frozen=True)
class ChshResult:
    """CHSH combination S with its propagated uncertainty."""

    s: float
    s_sigma: float
    settings_deg: tuple[float, float, float, float]


def _chsh_sigma(map_, e, indices, subtract):
    rate, sigma = map_.rates(subtract=subtract)
    conj = _conjugate_indices()
    ia, iap, ib, ibp = indices
    grad: dict[tuple[int, int], float] = {}
    for sign, x, y in ((1, ia, ib), (-1, ia, ibp), (1, iap, ib), (1, iap, ibp)):
        e_t = e[x, y]
        plus = rate[x, y] + rate[conj[x], conj[y]]
        minus = rate[conj[x], y] + rate[x, conj[y]]
        total = plus + minus
        dp = sign * (1.0 - e_t) / total
        dm = -sign * (1.0 + e_t) / total
        for cell, d in (
            ((x, y), dp),
            ((conj[x], conj[y]), dp),
            ((conj[x], y), dm),
            ((x, conj[y]), dm),
        ):
            grad[cell] = grad.get(cell, 0.0) + d
    return math.sqrt(sum(d**2 * sigma[cell] ** 2 for cell, d in grad.items()))


def chsh_scan(
    map_: CoincidenceMap,
    subtract: bool = False,
    settings_deg: tuple[float, float, float, float] | None = None,
    backend: str | None = None,
) -> ChshResult:
    """Maximal CHSH value over the map, or its value at fixed settings.

    Without `settings_deg` every four-tuple of bin centers is scanned
    exhaustively and the best one is returned; ties resolve to the
    lexicographically smallest index tuple.  Settings whose conjugate
    bins are unpopulated never enter the scan.
    """
    e, _ = correlation_matrix(map_, subtract=subtract)
    if settings_deg is not None:
        idx = tuple(
            int(map_.bin_index(np.array([math.radians(d)]))[0])
            for d in settings_deg
        )
        ia, iap, ib, ibp = idx
        terms = (e[ia, ib], e[ia, ibp], e[iap, ib], e[iap, ibp])
        if not all(np.isfinite(t) for t in terms):
            raise ValidationError(
                "requested settings lack conjugate-bin coverage"
            )
        s = terms[0] - terms[1] + terms[2] + terms[3]
        indices = (ia, iap, ib, ibp)
    else:
        s, ia, iap, ib, ibp = chsh_scan_kernel(e, backend=backend)
        if ia < 0:
            raise ValidationError(
                "no four-tuple of settings has full conjugate coverage; "
                "the phase map is too sparse for a CHSH estimate"
            )
        indices = (ia, iap, ib, ibp)
    centers = np.degrees(map_.centers_rad)
    sigma = _chsh_sigma(map_, e, indices, subtract)
    return ChshResult(
        s=float(s),
        s_sigma=float(sigma),
        settings_deg=(
            float(centers[indices[0]]),
            float(centers[indices[1]]),
            float(centers[indices[2]]),
            float(centers[indices[3]]),
        ),
    )


def bell_violation(result: ChshResult) -> bool:
    """True when |S| exceeds 2 by at least two standard errors."""
    return abs(result.s) - 2.0 > 2.0 * result.s_sigma


def visibility_exceeds_bell_threshold(v: float) -> bool:
    """True when a fringe visibility is large enough to allow |S| > 2."""
    return v > 1.0 / math.sqrt(2.0)
