"""Wild bootstrap for the Fine-Gray MPLE and Breslow estimator.

Each subject gets one multiplier ``G_i`` (mean 0, variance 1). Only the
multipliers of subjects with a type-1 event enter the results, but all ``n``
are drawn so that a replicate's stream does not depend on which subjects had
events.

Random streams
--------------
Replicate ``b`` (redraw attempt ``a``) of a run seeded with ``seed`` uses
``numpy.random.SeedSequence(seed, spawn_key=(*stream, b, a))``. The result is
therefore the same whatever the batch size, worker count or order in which
replicates are computed.
"""

import enum
from dataclasses import dataclass

import numpy as np

from .errors import SingularOptionalCovariation
from .estimation import RCOND_LIMIT, event_sums, gamma
from .stepfunction import StepFunction


class MultiplierLaw(str, enum.Enum):
    NORMAL = "normal"
    EXPONENTIAL = "exp"
    POISSON = "poisson"
    # Rademacher signs; G**2 == 1. Used to check reductions in tests.
    SIGN = "sign"

    @classmethod
    def parse(cls, value):
        aliases = {"n(0,1)": "normal", "standard_normal": "normal", "exponential": "exp",
                   "exp(1)-1": "exp", "pois(1)-1": "poisson", "pois": "poisson"}
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        return cls(aliases.get(v, v))


def draw_multipliers(law, n, rng):
    """``n`` i.i.d. centred multipliers with unit variance."""
    law = MultiplierLaw.parse(law)
    if law is MultiplierLaw.NORMAL:
        return rng.standard_normal(n)
    if law is MultiplierLaw.EXPONENTIAL:
        return rng.standard_exponential(n) - 1.0
    if law is MultiplierLaw.POISSON:
        return rng.poisson(1.0, n) - 1.0
    return rng.integers(0, 2, n) * 2.0 - 1.0


def replicate_rng(seed, *keys):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=keys)))


def replicate_multipliers(law, n, seed, indices, attempt=0, stream=()):
    """Multiplier matrix, one row per replicate index."""
    indices = np.atleast_1d(indices)
    out = np.empty((indices.size, n))
    for row, b in enumerate(indices):
        out[row] = draw_multipliers(law, n, replicate_rng(seed, *stream, int(b), int(attempt)))
    return out


def _residuals(dataset, beta):
    """``Z_i - E_n(u, beta)`` for the subject failing at each type-1 time."""
    s0, s1 = event_sums(dataset, beta)
    return dataset.covariates[dataset.event_index] - s1 / s0[:, None]


def bootstrap_score(dataset, beta_hat, multipliers):
    """``D*_{n,g}(tau)``; ``multipliers`` has shape ``(n,)`` or ``(B, n)``."""
    g = np.asarray(multipliers, dtype=float)[..., dataset.event_index]
    return g @ _residuals(dataset, beta_hat) / np.sqrt(dataset.n)


def optional_covariation(dataset, beta_eval, multipliers):
    """``(1/n) sum_i int (Z_i - E_n(u, beta))^{x2} G_i^2 dN_i(u)`` over ``[0, tau]``."""
    g = np.asarray(multipliers, dtype=float)[..., dataset.event_index]
    d = _residuals(dataset, beta_eval)
    return np.einsum("...k,kp,kr->...pr", g * g, d, d) / dataset.n


def _singular(mats):
    """Per-matrix singularity flags for a stack of symmetric PSD matrices."""
    eig = np.linalg.eigvalsh(mats)
    top = eig[..., -1]
    return ~np.isfinite(eig).all(axis=-1) | (top <= 0) | (eig[..., 0] <= RCOND_LIMIT * top)


def c_star(dataset, beta_eval, multipliers):
    """Inverse of the optional covariation of the bootstrap score."""
    v = optional_covariation(dataset, beta_eval, multipliers)
    if np.any(_singular(v)):
        raise SingularOptionalCovariation("optional covariation matrix is singular")
    return np.linalg.inv(v)


def beta_star(fit, dataset, multipliers):
    """``beta* = beta_hat + n^{-1/2} C* D*(tau)`` with both factors at ``beta_hat``."""
    c = c_star(dataset, fit.beta_hat, multipliers)
    d = bootstrap_score(dataset, fit.beta_hat, multipliers)
    return fit.beta_hat + np.einsum("...pr,...r->...p", c, d) / np.sqrt(dataset.n)


def breslow_star_values(dataset, beta_star, multipliers):
    """Cumulative ``A*`` at the type-1 event times (last axis)."""
    g = np.asarray(multipliers, dtype=float)[..., dataset.event_index]
    s0, _ = event_sums(dataset, beta_star)
    return np.cumsum((g + 1.0) / s0, axis=-1)


def breslow_star(dataset, beta_star, multipliers):
    """Bootstrap Breslow estimator; not necessarily monotone."""
    return StepFunction(dataset.event_times_type1, breslow_star_values(dataset, beta_star, multipliers))


@dataclass(frozen=True)
class BootstrapReplicate:
    multipliers: np.ndarray
    beta_star: np.ndarray
    breslow_star: StepFunction
    index: int = 0
    attempt: int = 0
    seed: int | None = None


def make_replicate(fit, dataset, multipliers, index=0, attempt=0, seed=None):
    b = beta_star(fit, dataset, multipliers)
    return BootstrapReplicate(
        multipliers=np.asarray(multipliers, dtype=float),
        beta_star=b,
        breslow_star=breslow_star(dataset, b, multipliers),
        index=index,
        attempt=attempt,
        seed=seed,
    )


def draw_replicate(fit, dataset, law, seed, index, stream=(), max_attempts=100):
    """Replicate ``index``, redrawn with the next attempt key while C* is singular."""
    for attempt in range(max_attempts):
        g = replicate_multipliers(law, dataset.n, seed, index, attempt, stream)[0]
        try:
            return make_replicate(fit, dataset, g, index, attempt, seed)
        except SingularOptionalCovariation:
            continue
    raise SingularOptionalCovariation(f"replicate {index}: {max_attempts} singular draws")


def cif_star(replicate, z):
    """``Gamma`` applied to ``(beta*, A*)``; may leave [0, 1) when ``A* < 0``."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    return StepFunction(
        replicate.breslow_star.times, gamma(replicate.beta_star, replicate.breslow_star.values, z)
    )


@dataclass
class ReplicateBatch:
    """Bootstrap quantities for a stack of replicates.

    Shapes use B replicates, E type-1 events and q covariates. Rows with
    ``valid == False`` had a singular optional covariation; their other
    fields are filled with ``nan``.
    """

    multipliers: np.ndarray  # (B, n)
    beta_star: np.ndarray  # (B, q)
    cumhaz_star: np.ndarray  # (B, E)
    s0_star: np.ndarray  # (B, E), unnormalized
    s1_star: np.ndarray  # (B, E, q), unnormalized
    valid: np.ndarray  # (B,)


def compute_batch(fit, dataset, multipliers):
    g_all = np.atleast_2d(np.asarray(multipliers, dtype=float))
    g = g_all[:, dataset.event_index]
    n = dataset.n
    d = _residuals(dataset, fit.beta_hat)
    v = np.einsum("bk,kp,kr->bpr", g * g, d, d) / n
    valid = ~_singular(v)
    dstar = g @ d / np.sqrt(n)
    v_safe = np.where(valid[:, None, None], v, np.eye(dataset.q))
    bstar = fit.beta_hat + np.linalg.solve(v_safe, dstar[..., None])[..., 0] / np.sqrt(n)
    bstar[~valid] = np.nan
    s0, s1 = event_sums(dataset, np.where(valid[:, None], bstar, 0.0))
    cum = np.cumsum((g + 1.0) / s0, axis=-1)
    cum[~valid] = np.nan
    return ReplicateBatch(g_all, bstar, cum, s0, s1, valid)
