"""Time-simultaneous wild-bootstrap confidence bands for the CIF.

Six bands are available. ``plain0``/``plain1``/``plain2`` add and subtract
``q / sqrt(n)`` around the fitted CIF, where ``q`` is a bootstrap quantile of
the sup-norm of, respectively, the resampled CIF difference, its linearisation
at the fit, and its linearisation at the bootstrap estimate. ``ep0``/``ep1``/
``ep2`` are equal-precision bands on the complementary log-log scale, using
``log A* - log A``, ``(A* - A) / A`` and ``(A* - A) / A*`` for the baseline part
and a bootstrap variance estimate as weight.

All processes are piecewise constant between type-1 event times, so their
supremum over ``[t1, t2]`` is a maximum over the grid made of ``t1`` and the
event times in ``(t1, t2]``.
"""

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import MultiplierLaw, ReplicateBatch, compute_batch, replicate_multipliers
from .errors import (
    BreslowStarZero,
    BreslowZero,
    ExcessiveReplicateRejection,
    InvalidInterval,
    NotConverged,
    SingularInformation,
    SingularOptionalCovariation,
)
from .estimation import event_sums, gamma
from .stepfunction import StepFunction

log = logging.getLogger(__name__)

SIGMA_CLAMP = 1e-12
MAX_REJECTED_FRACTION = 0.10


class Variant(str, enum.Enum):
    PLAIN0 = "plain0"
    PLAIN1 = "plain1"
    PLAIN2 = "plain2"
    EP0 = "ep0"
    EP1 = "ep1"
    EP2 = "ep2"

    @property
    def is_ep(self):
        return self.value.startswith("ep")


ALL_VARIANTS = tuple(Variant)


@dataclass(frozen=True)
class BandSpec:
    variant: Variant = Variant.EP0
    level: float = 0.95
    interval: tuple | None = None
    n_boot: int = 2000
    z: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.n_boot < 1:
            raise ValueError("n_boot must be >= 1")


@dataclass
class BandResult:
    spec: BandSpec
    quantile: float
    grid: np.ndarray
    point_estimate: StepFunction
    lower: StepFunction
    upper: StepFunction
    sigma: np.ndarray | None = None
    n_rejected: int = 0
    sups: np.ndarray | None = field(default=None, repr=False)

    @property
    def interval(self):
        return self.spec.interval

    def covers(self, cif_true, check="interval"):
        """Whether ``cif_true`` (a nondecreasing function of time) lies in the band.

        ``check="interval"`` tests every ``t`` in ``[t1, t2]``, using that the
        band is constant on each grid cell; ``"grid"`` only tests the grid.
        """
        f_left = np.asarray(cif_true(self.grid), dtype=float)
        ok = np.all(self.lower.values <= f_left) and np.all(f_left <= self.upper.values)
        if check == "grid":
            return bool(ok)
        right = np.append(self.grid[1:], self.spec.interval[1])
        f_right = np.asarray(cif_true(right), dtype=float)
        return bool(ok and np.all(f_right <= self.upper.values))

    def to_dict(self):
        return {
            "variant": self.spec.variant.value,
            "level": self.spec.level,
            "interval": list(self.spec.interval),
            "n_boot": self.spec.n_boot,
            "z": list(self.spec.z),
            "quantile": self.quantile,
            "rejected_replicates": self.n_rejected,
            "grid": self.grid.tolist(),
            "estimate": self.point_estimate.values.tolist(),
            "lower": self.lower.values.tolist(),
            "upper": self.upper.values.tolist(),
        }

    def rows(self):
        return zip(self.grid, self.point_estimate.values, self.lower.values, self.upper.values)


def default_interval(dataset):
    """First and last decile of the observed type-1 times, t1 at least the first one."""
    t = dataset.event_times_type1
    if t.size == 0:
        raise InvalidInterval("no type-1 events")
    t1, t2 = np.quantile(t, [0.1, 0.9])
    return max(float(t1), float(t[0])), float(t2)


def resolve_interval(dataset, interval):
    if interval is None or interval == "auto":
        t1, t2 = default_interval(dataset)
    else:
        t1, t2 = map(float, interval)
    first = dataset.event_times_type1[0] if dataset.n_events else math.inf
    if t1 < first:
        raise InvalidInterval(f"t1={t1} precedes the first type-1 event time {first}")
    if not t1 < t2:
        raise InvalidInterval(f"need t1 < t2, got [{t1}, {t2}]")
    if t2 > dataset.tau:
        raise InvalidInterval(f"t2={t2} exceeds tau={dataset.tau}")
    return t1, t2


def band_grid(dataset, t1, t2):
    """Grid times and, for each, the index of the last type-1 event at or before it."""
    ev = dataset.event_times_type1
    inner = ev[(ev > t1) & (ev <= t2)]
    grid = np.concatenate(([t1], inner))
    idx = np.searchsorted(ev, grid, side="right") - 1
    return grid, idx


def _sigma_sq_terms(s0, s1, dcum, z, first, idx, info_inv):
    """Shared tail of the variance formulas.

    ``first`` is the cumulative first term, ``dcum`` the Breslow increments.
    """
    resid = z - s1 / s0[..., None]
    h = np.cumsum(resid * dcum[..., None], axis=-2)[..., idx, :]
    quad = np.einsum("...jp,...pr,...jr->...j", h, info_inv, h)
    return first[..., idx] + quad


def sigma_hat(fit, dataset, z, t):
    """Estimated sd of ``sqrt(n)`` times the cloglog CIF error at time(s) ``t``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(dataset.event_times_type1, np.atleast_1d(t), side="right") - 1
    if np.any(idx < 0):
        raise BreslowZero("Breslow estimate is zero before the first type-1 event")
    s0, s1 = event_sums(dataset, fit.beta_hat)
    n = dataset.n
    dA = 1.0 / s0
    first = np.cumsum(n / s0**2)
    try:
        info_inv = np.linalg.inv(fit.information)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation(str(exc)) from exc
    a = np.cumsum(dA)[idx]
    var = _sigma_sq_terms(s0, s1, dA, z, first, idx, info_inv) / a**2
    out = np.sqrt(np.maximum(var, 0.0))
    return out if t.ndim else float(out[0])


def _sigma_star_sq(dataset, batch, z, idx):
    """``sigma*^2`` on the grid, shape (B, J), plus a validity mask (B,)."""
    n = dataset.n
    g = batch.multipliers[:, dataset.event_index]
    s0, s1 = batch.s0_star, batch.s1_star
    dA = (g + 1.0) / s0
    first = np.cumsum(n * g * g / s0**2, axis=-1)
    resid_ev = dataset.covariates[dataset.event_index] - s1 / s0[..., None]
    istar = np.einsum("bk,bkp,bkr->bpr", g * g, resid_ev, resid_ev) / n
    eig = np.linalg.eigvalsh(np.where(batch.valid[:, None, None], istar, np.eye(dataset.q)))
    ok = batch.valid & (eig[:, 0] > 1e-12 * np.maximum(eig[:, -1], 0)) & (eig[:, -1] > 0)
    inv = np.linalg.inv(np.where(ok[:, None, None], istar, np.eye(dataset.q)))
    a = batch.cumhaz_star[:, idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        var = _sigma_sq_terms(s0, s1, dA, z, first, idx, inv) / a**2
    return var, ok


def sigma_hat_star(replicate, dataset, z, t):
    """Bootstrap variance-weight ``sigma*`` at time(s) ``t`` for one replicate."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    t = np.asarray(t, dtype=float)
    idx = np.searchsorted(dataset.event_times_type1, np.atleast_1d(t), side="right") - 1
    if np.any(idx < 0):
        raise BreslowStarZero("bootstrap Breslow estimate is zero before the first event")
    s0, s1 = event_sums(dataset, replicate.beta_star)
    batch = ReplicateBatch(
        multipliers=replicate.multipliers[None, :],
        beta_star=replicate.beta_star[None, :],
        cumhaz_star=replicate.breslow_star.values[None, :],
        s0_star=s0[None, :],
        s1_star=s1[None, :, :],
        valid=np.array([True]),
    )
    if np.any(batch.cumhaz_star[0, idx] == 0):
        raise BreslowStarZero("bootstrap Breslow estimate is zero")
    var, ok = _sigma_star_sq(dataset, batch, z, idx)
    if not ok[0]:
        raise SingularOptionalCovariation("bootstrap information at beta* is singular")
    var = var[0]
    if np.any(var < -SIGMA_CLAMP):
        raise ArithmeticError("negative bootstrap variance estimate")
    out = np.sqrt(np.maximum(var, 0.0))
    return out if t.ndim else float(out[0])


def _w_processes(fit, dataset, batch, z, idx, variants):
    """W processes on the grid: dict variant -> (B, J) array (nan where undefined)."""
    sqn = math.sqrt(dataset.n)
    a = fit.breslow.values[idx]
    astar = batch.cumhaz_star[:, idx]
    db = batch.beta_star - fit.beta_hat
    zdb = db @ z
    lp = float(z @ fit.beta_hat)
    lps = batch.beta_star @ z
    out = {}
    for v in variants:
        if v is Variant.PLAIN0:
            w = sqn * (-np.expm1(-np.exp(lps)[:, None] * astar) - gamma(fit.beta_hat, a, z))
        elif v is Variant.PLAIN1:
            w = np.exp(-np.exp(lp) * a) * np.exp(lp) * (a * zdb[:, None] + (astar - a)) * sqn
        elif v is Variant.PLAIN2:
            e = np.exp(lps)[:, None]
            w = np.exp(-e * astar) * e * (astar * zdb[:, None] + (astar - a)) * sqn
        else:
            continue
        out[v] = w
    ep = [v for v in variants if v.is_ep]
    if ep:
        var, ok = _sigma_star_sq(dataset, batch, z, idx)
        bad = ~ok[:, None] | ~np.isfinite(var) | (var < -SIGMA_CLAMP)
        var = np.where(bad, np.nan, np.maximum(var, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = sqn / np.sqrt(var)
            weight[~np.isfinite(weight)] = np.nan
            for v in ep:
                if v is Variant.EP0:
                    term = np.where(astar > 0, np.log(np.where(astar > 0, astar, 1.0)) - np.log(a), np.nan)
                elif v is Variant.EP1:
                    term = (astar - a) / a
                else:
                    term = np.where(astar != 0, (astar - a) / astar, np.nan)
                out[v] = weight * (zdb[:, None] + term)
    return out


def w_star(variant, fit, replicate, dataset, z, grid):
    """One replicate's W process for ``variant`` at the given grid times."""
    variant = Variant(variant)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    idx = np.searchsorted(dataset.event_times_type1, np.asarray(grid, dtype=float), side="right") - 1
    if np.any(idx < 0):
        raise BreslowZero("grid starts before the first type-1 event")
    s0, s1 = event_sums(dataset, replicate.beta_star)
    batch = ReplicateBatch(
        replicate.multipliers[None, :], replicate.beta_star[None, :],
        replicate.breslow_star.values[None, :], s0[None, :], s1[None], np.array([True]),
    )
    return _w_processes(fit, dataset, batch, z, idx, [variant])[variant][0]


def sup_statistics(fit, dataset, multipliers, z, idx, variants):
    """``max_j |W(t_j)|`` per replicate and variant; nan marks a rejected replicate."""
    batch = compute_batch(fit, dataset, multipliers)
    ws = _w_processes(fit, dataset, batch, z, idx, variants)
    out = np.empty((batch.valid.size, len(variants)))
    for col, v in enumerate(variants):
        w = ws[v]
        bad = ~batch.valid | np.any(~np.isfinite(w), axis=1)
        out[:, col] = np.where(bad, np.nan, np.max(np.abs(np.where(np.isfinite(w), w, 0.0)), axis=1))
    return out


def order_statistic_quantile(values, level):
    """The ``ceil(level * B)``-th smallest of ``B`` values."""
    values = np.sort(np.asarray(values, dtype=float))
    k = max(int(math.ceil(level * values.size - 1e-9)), 1)
    return float(values[k - 1])


def ep_bounds(estimate, quantile, sigma, n):
    """Equal-precision band ``1 - (1 - F)^{exp(-+ q sigma / sqrt(n))}``."""
    estimate = np.asarray(estimate, dtype=float)
    x = quantile * np.asarray(sigma, dtype=float) / math.sqrt(n)
    surv = 1.0 - estimate
    return 1.0 - surv ** np.exp(-x), 1.0 - surv ** np.exp(x)


def bootstrap_sups(fit, dataset, z, idx, variants, n_boot, multiplier, seed, stream=(),
                   chunk=500, max_rejected_fraction=MAX_REJECTED_FRACTION):
    """Sup statistics for ``n_boot`` accepted replicates of each variant.

    A replicate that is rejected for a variant is redrawn with the next
    attempt key until accepted. Returns the ``(n_boot, V)`` array and the
    number of rejected draws per variant.
    """
    sups = np.full((n_boot, len(variants)), np.nan)
    rejected = np.zeros(len(variants), dtype=int)
    limit = max_rejected_fraction * n_boot
    pending = np.arange(n_boot)
    attempt = 0
    while pending.size:
        for lo in range(0, pending.size, chunk):
            ids = pending[lo:lo + chunk]
            g = replicate_multipliers(multiplier, dataset.n, seed, ids, attempt, stream)
            res = sup_statistics(fit, dataset, g, z, idx, variants)
            todo = np.isnan(sups[ids])
            sups[ids] = np.where(todo, res, sups[ids])
            rejected += (todo & np.isnan(res)).sum(axis=0)
        if np.any(rejected > limit):
            worst = variants[int(np.argmax(rejected))]
            raise ExcessiveReplicateRejection(
                f"{rejected.max()} of {n_boot} replicates rejected for {worst.value}"
            )
        pending = np.flatnonzero(np.isnan(sups).any(axis=1))
        attempt += 1
    return sups, rejected


def bands(fit, dataset, z, variants=ALL_VARIANTS, interval=None, level=0.95, n_boot=2000,
          multiplier=MultiplierLaw.NORMAL, seed=0, stream=(), keep_sups=False,
          max_rejected_fraction=MAX_REJECTED_FRACTION):
    """Bands for several variants from one shared set of bootstrap replicates."""
    if not fit.converged:
        raise NotConverged("cannot build bands from an unconverged fit")
    variants = [Variant(v) for v in variants]
    multiplier = MultiplierLaw.parse(multiplier)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (dataset.q,):
        raise ValueError(f"z must have length {dataset.q}")
    t1, t2 = resolve_interval(dataset, interval)
    grid, idx = band_grid(dataset, t1, t2)
    sups, rejected = bootstrap_sups(fit, dataset, z, idx, variants, n_boot, multiplier, seed, stream,
                                     max_rejected_fraction=max_rejected_fraction)

    a = fit.breslow.values[idx]
    est = gamma(fit.beta_hat, a, z)
    sigma = sigma_hat(fit, dataset, z, grid) if any(v.is_ep for v in variants) else None
    sqn = math.sqrt(dataset.n)
    out = {}
    for col, v in enumerate(variants):
        q = order_statistic_quantile(sups[:, col], level)
        if v.is_ep:
            lo, hi = ep_bounds(est, q, sigma, dataset.n)
        else:
            lo, hi = est - q / sqn, est + q / sqn
        spec = BandSpec(v, level, (t1, t2), n_boot, tuple(z.tolist()))
        out[v] = BandResult(
            spec=spec,
            quantile=q,
            grid=grid,
            point_estimate=StepFunction(grid, est, np.nan),
            lower=StepFunction(grid, lo, np.nan),
            upper=StepFunction(grid, hi, np.nan),
            sigma=sigma,
            n_rejected=int(rejected[col]),
            sups=sups[:, col] if keep_sups else None,
        )
        if rejected[col]:
            log.info("%s: %d replicates redrawn", v.value, rejected[col])
    return out


def band(fit, dataset, spec, multiplier=MultiplierLaw.NORMAL, seed=0, stream=(), keep_sups=False):
    """Confidence band described by a :class:`BandSpec`."""
    res = bands(fit, dataset, spec.z, [spec.variant], spec.interval, spec.level, spec.n_boot,
                multiplier, seed, stream, keep_sups)
    return res[spec.variant]
