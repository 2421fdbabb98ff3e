"""Competing-risks data obeying a Fine-Gray model, and coverage studies.

Data are generated from cause-specific hazards. The type-1 hazard is
``a * exp(z'beta)`` with constant ``a``; the baseline subdistribution hazard
is the one implied by constant cause-specific hazards ``a`` and ``b`` when
``z = 0``,

    alpha_1(t) = s / (1 + (b / a) exp(s t)),   s = a + b,

and the type-2 hazard is chosen so that the subdistribution hazard of a
subject with covariates ``z`` is ``alpha_1(t) exp(z'beta)``:

    alpha_2(t | z) = (exp(z'beta) - 1) alpha_1(t) + s - a exp(z'beta).

It is monotone in ``t`` and can turn negative for ``exp(z'beta) > s / a``;
such configurations are rejected if it happens before the censoring maximum.
Integrating gives closed forms for the cumulative baseline subdistribution
hazard ``A(t) = log(s) - log(a exp(-s t) + b)`` and for the all-cause
cumulative hazard ``H(t | z) = s t + (exp(z'beta) - 1) A(t)``.
"""

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate, optimize

from .bands import ALL_VARIANTS, MAX_REJECTED_FRACTION, Variant, bands
from .bootstrap import MultiplierLaw, replicate_rng
from .data import Dataset
from .errors import ExcessiveStudyFailure, FGWildError, NegativeCauseSpecificHazard
from .estimation import fit_mple

log = logging.getLogger(__name__)

DATA_STREAM = 1
BOOT_STREAM = 2
CENSORING_TARGETS = {"low": 0.225, "high": 0.40}
MAX_FAILED_FRACTION = 0.02


def subdist_baseline_hazard(alpha01, alpha02, t):
    s = alpha01 + alpha02
    t = np.asarray(t, dtype=float)
    # s / (1 + (b/a) e^{st}), rewritten to stay finite for large t
    return s * alpha01 * np.exp(-s * t) / (alpha01 * np.exp(-s * t) + alpha02)


def dlog_subdist_baseline_hazard(alpha01, alpha02, t):
    s = alpha01 + alpha02
    return -s / (1.0 + alpha01 / alpha02 * np.exp(-s * np.asarray(t, dtype=float)))


def subdist_cumulative_hazard(alpha01, alpha02, t):
    s = alpha01 + alpha02
    t = np.asarray(t, dtype=float)
    return np.log(s) - np.log(alpha01 * np.exp(-s * t) + alpha02)


def cause2_hazard(alpha01, alpha02, lp, t):
    """Type-2 cause-specific hazard for linear predictor ``lp``."""
    s = alpha01 + alpha02
    r = np.exp(lp)
    return (r - 1.0) * subdist_baseline_hazard(alpha01, alpha02, t) + s - alpha01 * r


def total_cumulative_hazard(alpha01, alpha02, lp, t):
    s = alpha01 + alpha02
    return s * np.asarray(t, dtype=float) + (np.exp(lp) - 1.0) * subdist_cumulative_hazard(alpha01, alpha02, t)


def true_cif(alpha01, alpha02, beta0, z, t):
    """``F_1(t | z) = 1 - exp(-exp(z'beta0) A(t))``."""
    lp = float(np.dot(np.atleast_1d(z), np.atleast_1d(beta0)))
    return -np.expm1(-np.exp(lp) * subdist_cumulative_hazard(alpha01, alpha02, t))


@dataclass
class ScenarioConfig:
    """One simulation setting.

    ``covariates`` is ``"bernoulli"`` (one Bernoulli(``p``) covariate) or
    ``"trivariate"`` (independent N(0,1), Bernoulli(0.15), Bernoulli(0.4)).
    Censoring is Uniform(0, ``censor_max``); when ``censor_max`` is None it is
    calibrated so the expected censored fraction equals ``censoring_rate``
    (a number, or ``"low"``/``"high"``).
    """

    n: int = 100
    beta0: tuple = (-0.5,)
    alpha01: float = 0.5
    alpha02: float = 0.05
    covariates: str = "bernoulli"
    p: float = 0.2
    censor_max: float | None = None
    censoring_rate: float | str = "low"
    multiplier: str = "normal"
    variants: tuple = tuple(v.value for v in ALL_VARIANTS)
    target_z: tuple = ((0.0,),)
    n_studies: int = 1000
    n_boot: int = 1000
    level: float = 0.95
    master_seed: int = 20240601
    coverage_check: str = "interval"
    max_rejected_fraction: float = MAX_REJECTED_FRACTION
    name: str = ""

    def __post_init__(self):
        self.beta0 = tuple(float(b) for b in np.atleast_1d(self.beta0))
        self.target_z = tuple(tuple(float(v) for v in np.atleast_1d(z)) for z in self.target_z)
        self.variants = tuple(Variant(v).value for v in self.variants)
        self.multiplier = MultiplierLaw.parse(self.multiplier).value
        if self.alpha01 <= 0 or self.alpha02 <= 0:
            raise ValueError("cause-specific baseline hazards must be positive")
        if self.covariates == "bernoulli":
            q = 1
            if not 0 < self.p < 1:
                raise ValueError("p must lie in (0, 1)")
        elif self.covariates == "trivariate":
            q = 3
        else:
            raise ValueError(f"unknown covariate law {self.covariates!r}")
        if len(self.beta0) != q or any(len(z) != q for z in self.target_z):
            raise ValueError(f"beta0 and target_z must have length {q}")
        if self.coverage_check not in ("interval", "grid"):
            raise ValueError("coverage_check must be 'interval' or 'grid'")
        if self.censor_max is None:
            rate = CENSORING_TARGETS.get(self.censoring_rate, self.censoring_rate)
            self.censor_max = calibrate_censor_max(self, float(rate))
        validate_hazards(self)

    @property
    def q(self):
        return len(self.beta0)

    @property
    def censoring_label(self):
        return self.censoring_rate if isinstance(self.censoring_rate, str) else f"{self.censoring_rate:g}"

    def to_dict(self):
        d = asdict(self)
        d["target_z"] = [list(z) for z in self.target_z]
        d["beta0"] = list(self.beta0)
        d["variants"] = list(self.variants)
        return d


def draw_covariates(config, n, rng):
    if config.covariates == "bernoulli":
        return (rng.random((n, 1)) < config.p).astype(float)
    z = np.empty((n, 3))
    z[:, 0] = rng.standard_normal(n)
    z[:, 1] = rng.random(n) < 0.15
    z[:, 2] = rng.random(n) < 0.4
    return z


def _support_linear_predictors(config):
    b = np.asarray(config.beta0)
    if config.covariates == "bernoulli":
        return np.array([0.0, b[0]])
    z1 = np.array([-6.0, 6.0])
    combos = [(x, y, w) for x in z1 for y in (0, 1) for w in (0, 1)]
    return np.array(combos) @ b


def validate_hazards(config, lp=None):
    """Raise if the type-2 hazard is negative somewhere on ``[0, censor_max]``.

    The hazard is monotone in time, so checking both ends suffices.
    """
    lp = _support_linear_predictors(config) if lp is None else np.asarray(lp)
    c = config.censor_max
    lo = np.minimum(cause2_hazard(config.alpha01, config.alpha02, lp, 0.0),
                    cause2_hazard(config.alpha01, config.alpha02, lp, c))
    if np.any(lo < 0):
        raise NegativeCauseSpecificHazard(
            f"type-2 hazard negative on [0, {c:g}] for linear predictor "
            f"{float(lp[np.argmin(lo)]):g}; choose a smaller effect or censoring maximum"
        )


def _lp_quadrature(config):
    """Linear-predictor nodes and weights integrating over the covariate law."""
    b = np.asarray(config.beta0)
    if config.covariates == "bernoulli":
        return np.array([0.0, b[0]]), np.array([1 - config.p, config.p])
    x, w = np.polynomial.hermite_e.hermegauss(40)
    w = w / w.sum()
    nodes, weights = [], []
    for z2, p2 in ((0, 0.85), (1, 0.15)):
        for z3, p3 in ((0, 0.6), (1, 0.4)):
            nodes.append(b[0] * x + b[1] * z2 + b[2] * z3)
            weights.append(w * p2 * p3)
    return np.concatenate(nodes), np.concatenate(weights)


def censoring_rate(config, censor_max):
    """Expected fraction censored: ``E_Z[(1/c) int_0^c S(t | Z) dt]``."""
    lps, weights = _lp_quadrature(config)
    a, b = config.alpha01, config.alpha02
    vals = [
        integrate.quad(lambda t: math.exp(-total_cumulative_hazard(a, b, lp, t)), 0, censor_max)[0]
        for lp in lps
    ]
    return float(np.dot(weights, vals) / censor_max)


def calibrate_censor_max(config, rate):
    if not 0 < rate < 1:
        raise ValueError("censoring rate must lie in (0, 1)")
    hi = 1.0
    while censoring_rate(config, hi) > rate:
        hi *= 2
    return optimize.brentq(lambda c: censoring_rate(config, c) - rate, hi / 2 if hi > 1 else 1e-6, hi,
                           xtol=1e-10)


def _invert_total_hazard(a, b, lp, target, upper, tol=1e-10):
    """Solve ``H(t) = target`` on ``[0, upper]`` by bisection; inf when beyond."""
    lo = np.zeros_like(target)
    hi = np.full_like(target, upper)
    beyond = total_cumulative_hazard(a, b, lp, hi) < target
    while np.any(hi - lo > tol):
        mid = 0.5 * (lo + hi)
        below = total_cumulative_hazard(a, b, lp, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    t[beyond] = np.inf
    return t


def generate_arrays(config, study_index):
    """Raw arrays ``(time, event, censoring, covariates)`` of one study."""
    rng = replicate_rng(config.master_seed, DATA_STREAM, int(study_index))
    n = config.n
    z = draw_covariates(config, n, rng)
    lp = z @ np.asarray(config.beta0)
    cens = rng.uniform(0.0, config.censor_max, n)
    target = rng.standard_exponential(n)
    u_type = rng.random(n)
    validate_hazards(config, lp)
    a, b = config.alpha01, config.alpha02
    t = _invert_total_hazard(a, b, lp, target, config.censor_max)
    h1 = a * np.exp(lp)
    with np.errstate(invalid="ignore"):
        p1 = h1 / (h1 + cause2_hazard(a, b, lp, t))
    etype = np.where(u_type < p1, 1, 2)
    observed = t <= cens
    time = np.where(observed, t, cens)
    event = np.where(observed, etype, 0)
    return time, event, cens, z


def generate_study(config, study_index):
    """Censoring-complete :class:`Dataset` for study ``study_index``."""
    time, event, cens, z = generate_arrays(config, study_index)
    return Dataset(time, event, z, censoring=cens, tau=config.censor_max)


def pooled_interval(config, n_jobs=1):
    """First and last decile of the type-1 times pooled over all studies."""
    chunks = _chunks(config.n_studies, n_jobs)
    parts = _parallel(n_jobs)(delayed(_type1_times)(config, c) for c in chunks)
    pooled = np.concatenate(parts)
    t1, t2 = np.quantile(pooled, [0.1, 0.9])
    return float(t1), float(t2)


def _type1_times(config, indices):
    out = []
    for i in indices:
        time, event, _, _ = generate_arrays(config, i)
        out.append(time[event == 1])
    return np.concatenate(out) if out else np.empty(0)


def run_study(config, study_index, interval):
    """Fit and band one study; returns a dict of per-(z, variant) outcomes.

    Each outcome is ``(covered, mean width, rejected replicates, excluded)``.
    A band whose replicate rejections exceed ``max_rejected_fraction`` is
    marked excluded: it drops out of that variant's coverage only, so one
    variant's undefined replicates do not discard the study for the others.
    """
    ds = generate_study(config, study_index)
    fit = fit_mple(ds)
    if not fit.converged:
        raise FGWildError("fit did not converge")
    t1 = max(interval[0], float(ds.event_times_type1[0]))
    t2 = interval[1]
    a, b = config.alpha01, config.alpha02
    out = {"censored": float(np.mean(ds.event == 0)), "cells": {}}
    for zi, z in enumerate(config.target_z):
        # Redraw without a cap here; the cap is applied per variant below.
        res = bands(fit, ds, z, config.variants, (t1, t2), config.level, config.n_boot,
                    config.multiplier, config.master_seed, (BOOT_STREAM, int(study_index), zi),
                    max_rejected_fraction=1.0)
        truth = lambda t, z=z: true_cif(a, b, config.beta0, z, t)  # noqa: E731
        for v, r in res.items():
            out["cells"][(zi, v.value)] = (
                r.covers(truth, config.coverage_check),
                float(np.mean(r.upper.values - r.lower.values)),
                r.n_rejected,
                r.n_rejected > config.max_rejected_fraction * config.n_boot,
            )
    return out


def _study_batch(config, indices, interval):
    results = []
    for i in indices:
        try:
            results.append((i, run_study(config, i, interval), None))
        except FGWildError as exc:
            results.append((i, None, f"{type(exc).__name__}: {exc}"))
    return results


def _chunks(n, n_jobs):
    k = max(1, min(n, 4 * max(n_jobs, 1)))
    return [list(range(n))[j::k] for j in range(k)]


def _parallel(n_jobs):
    return Parallel(n_jobs=n_jobs, backend="loky" if n_jobs != 1 else "sequential")


@dataclass
class CoverageCell:
    z: tuple
    variant: str
    coverage: float
    mc_se: float
    mean_width: float
    rejected_total: int
    rejected_max: int
    studies: int = 0
    excluded: int = 0


@dataclass
class CoverageReport:
    config: ScenarioConfig
    interval: tuple
    cells: list
    n_ok: int
    failures: dict = field(default_factory=dict)
    realized_censoring: float = float("nan")

    def coverage(self, variant, z_index=0):
        z = self.config.target_z[z_index]
        for c in self.cells:
            if c.variant == Variant(variant).value and c.z == z:
                return c.coverage
        raise KeyError(variant)

    def table_rows(self):
        cfg = self.config
        rows = []
        for z in cfg.target_z:
            row = {
                "name": cfg.name,
                "n": cfg.n,
                "censoring": cfg.censoring_label,
                "censor_max": f"{cfg.censor_max:.6f}",
                "realized_censoring": f"{self.realized_censoring:.4f}",
                "beta0": " ".join(f"{b:g}" for b in cfg.beta0),
                "alpha01": f"{cfg.alpha01:g}",
                "alpha02": f"{cfg.alpha02:g}",
                "multiplier": cfg.multiplier,
                "z": " ".join(f"{v:g}" for v in z),
                "t1": f"{self.interval[0]:.6f}",
                "t2": f"{self.interval[1]:.6f}",
                "studies": self.n_ok,
                "failed": sum(self.failures.values()),
            }
            for v in ALL_VARIANTS:
                cell = next((c for c in self.cells if c.z == z and c.variant == v.value), None)
                row[v.value] = "" if cell is None else f"{cell.coverage:.1f}"
            rows.append(row)
        return rows

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "interval": list(self.interval),
            "studies_ok": self.n_ok,
            "failures": self.failures,
            "realized_censoring": self.realized_censoring,
            "cells": [asdict(c) for c in self.cells],
        }


def reports_to_csv(reports):
    rows = [r for rep in reports for r in rep.table_rows()]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def run_coverage(config, n_jobs=1, interval=None):
    """Simultaneous coverage of every requested band over ``n_studies`` studies.

    Pass one pools type-1 times across studies to fix ``[t1, t2]`` (unless
    ``interval`` is given); pass two fits each study, builds the bands and
    checks whether the true CIF lies inside over the whole interval.
    """
    if interval is None:
        interval = pooled_interval(config, n_jobs)
    chunks = _chunks(config.n_studies, n_jobs)
    parts = _parallel(n_jobs)(delayed(_study_batch)(config, c, interval) for c in chunks)
    results = sorted((r for part in parts for r in part), key=lambda r: r[0])

    failures = {}
    ok = [r[1] for r in results if r[1] is not None]
    for _, _, err in results:
        if err is not None:
            key = err.split(":")[0]
            failures[key] = failures.get(key, 0) + 1
    n_failed = sum(failures.values())
    if n_failed > MAX_FAILED_FRACTION * config.n_studies:
        raise ExcessiveStudyFailure(f"{n_failed} of {config.n_studies} studies failed: {failures}")

    cells = []
    for zi, z in enumerate(config.target_z):
        for v in config.variants:
            everything = [r["cells"][(zi, v)] for r in ok]
            vals = [x for x in everything if not x[3]]
            hit = np.array([x[0] for x in vals], dtype=float)
            p = hit.mean() if hit.size else float("nan")
            rej = np.array([x[2] for x in everything], dtype=int)
            cells.append(CoverageCell(
                z=z,
                variant=v,
                coverage=100.0 * p,
                mc_se=100.0 * math.sqrt(p * (1 - p) / max(hit.size, 1)),
                mean_width=float(np.mean([x[1] for x in vals])) if vals else float("nan"),
                rejected_total=int(rej.sum()),
                rejected_max=int(rej.max(initial=0)),
                studies=len(vals),
                excluded=len(everything) - len(vals),
            ))
    cens = float(np.mean([r["censored"] for r in ok])) if ok else float("nan")
    return CoverageReport(config, tuple(interval), cells, len(ok), failures, cens)
