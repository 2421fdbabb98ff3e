"""Fine-Gray partial likelihood, Breslow estimator and fitted CIF.

All time integrals are finite sums over the type-1 event times. Internally
the weighted risk-set sums are kept unnormalized (``n * S^(m)``) so that with
``beta = 0`` the Breslow jumps are exactly ``1 / Y(u)``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRiskSet, NotConverged, NoType1Events, SingularInformation
from .stepfunction import StepFunction

log = logging.getLogger(__name__)

RCOND_LIMIT = 1e-12


@dataclass(frozen=True)
class RiskSums:
    """``S^(0)``, ``S^(1)``, ``S^(2)`` at one ``(t, beta)``, normalized by n."""

    s0: float
    s1: np.ndarray
    s2: np.ndarray

    @property
    def e(self):
        if self.s0 <= 0:
            raise EmptyRiskSet("no subject at risk")
        return self.s1 / self.s0

    @property
    def r(self):
        e = self.e
        return self.s2 / self.s0 - np.outer(e, e)


def _as_beta(dataset, beta):
    beta = np.zeros(dataset.q) if beta is None else np.atleast_1d(np.asarray(beta, dtype=float))
    if beta.shape != (dataset.q,):
        raise ValueError(f"beta must have length {dataset.q}, got shape {beta.shape}")
    return beta


def risk_sums(dataset, t, beta):
    beta = _as_beta(dataset, beta)
    y = dataset.exit_time >= t
    z = dataset.covariates[y]
    w = np.exp(z @ beta)
    n = dataset.n
    return RiskSums(w.sum() / n, (w @ z) / n, (z.T * w) @ z / n)


def event_sums(dataset, betas, second=False):
    """Unnormalized risk-set sums at every type-1 event time.

    Parameters
    ----------
    betas : ndarray, shape (q,) or (B, q)

    Returns
    -------
    s0 : ndarray, shape (..., E)
    s1 : ndarray, shape (..., E, q)
    s2 : ndarray, shape (..., E, q, q), only if ``second``
    """
    betas = np.asarray(betas, dtype=float)
    order, start = dataset._exit_order
    z = dataset.covariates[order]
    w = np.exp(betas @ z.T)
    s0 = np.cumsum(w[..., ::-1], axis=-1)[..., ::-1][..., start]
    wz = w[..., None] * z
    s1 = np.cumsum(wz[..., ::-1, :], axis=-2)[..., ::-1, :][..., start, :]
    if not second:
        return s0, s1
    zz = z[:, :, None] * z[:, None, :]
    wzz = w[..., None, None] * zz
    s2 = np.cumsum(wzz[..., ::-1, :, :], axis=-3)[..., ::-1, :, :][..., start, :, :]
    return s0, s1, s2


def _n_events_upto(dataset, t):
    if t is None:
        return dataset.n_events
    return int(np.searchsorted(dataset.event_times_type1, t, side="right"))


def _score_info(dataset, beta, t=None, info=True):
    k = _n_events_upto(dataset, t)
    if info:
        s0, s1, s2 = event_sums(dataset, beta, second=True)
    else:
        s0, s1 = event_sums(dataset, beta)
    s0, s1 = s0[:k], s1[:k]
    if np.any(s0 <= 0):
        raise EmptyRiskSet("empty risk set at a type-1 event time")
    e = s1 / s0[:, None]
    zev = dataset.covariates[dataset.event_index[:k]]
    u = (zev - e).sum(axis=0)
    if not info:
        return u, None
    r = s2[:k] / s0[:, None, None] - e[:, :, None] * e[:, None, :]
    return u, r.sum(axis=0)


def score(dataset, beta, t=None):
    """Score ``U_n(t, beta)``; ``t=None`` means the end of follow-up."""
    return _score_info(dataset, _as_beta(dataset, beta), t, info=False)[0]


def information(dataset, beta, t=None):
    """Observed information ``I_n(t, beta)`` (not divided by n)."""
    return _score_info(dataset, _as_beta(dataset, beta), t)[1]


def log_partial_likelihood(dataset, beta, t=None):
    beta = _as_beta(dataset, beta)
    k = _n_events_upto(dataset, t)
    s0, _ = event_sums(dataset, beta)
    zev = dataset.covariates[dataset.event_index[:k]]
    with np.errstate(over="ignore", divide="ignore"):
        return float((zev @ beta).sum() - np.log(s0[:k]).sum())


def check_information(info, second_moment_scale):
    """Raise :class:`SingularInformation` if ``info`` is numerically singular.

    The smallest eigenvalue is compared against the larger of the largest
    eigenvalue and the covariates' raw second-moment scale, so a constant
    covariate column is caught even when rounding leaves ``info`` nonzero.
    """
    if info.size == 0:
        return
    eig = np.linalg.eigvalsh(info)
    ref = max(float(eig[-1]), float(second_moment_scale))
    if not np.isfinite(eig).all() or ref <= 0 or eig[0] <= RCOND_LIMIT * ref:
        raise SingularInformation(
            f"information matrix is singular (eigenvalues {eig.tolist()})"
        )


def _second_moment_scale(dataset, beta):
    s0, _, s2 = event_sums(dataset, beta, second=True)
    q = dataset.q
    return float(np.trace(s2 / s0[:, None, None], axis1=1, axis2=2).sum() / max(q, 1))


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    breslow: StepFunction
    information: np.ndarray
    iterations: int
    converged: bool
    log_partial_likelihood: float
    score: np.ndarray
    n: int
    history: list = field(default_factory=list, repr=False)

    @property
    def covariance(self):
        """Estimated covariance of ``beta_hat``: ``((1/n) I_n)^{-1} / n``."""
        return np.linalg.inv(self.information) / self.n

    @property
    def standard_errors(self):
        return np.sqrt(np.diag(self.covariance))

    def _safe_standard_errors(self):
        try:
            return self.standard_errors.tolist()
        except np.linalg.LinAlgError:
            return [math.nan] * self.beta_hat.size

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "standard_errors": self._safe_standard_errors(),
            "information": self.information.tolist(),
            "log_partial_likelihood": self.log_partial_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "max_abs_score": float(np.max(np.abs(self.score), initial=0.0)),
            "n": self.n,
            "breslow": {
                "times": self.breslow.times.tolist(),
                "cumulative_hazard": self.breslow.values.tolist(),
                "jump": self.breslow.jumps.tolist(),
            },
        }


def _polish(dataset, beta, loglik, u, info):
    """One last Newton step, kept only if it shrinks the score."""
    try:
        cand = beta + np.linalg.solve(info, u)
    except np.linalg.LinAlgError:
        return beta, loglik
    cu = score(dataset, cand)
    if np.max(np.abs(cu), initial=0.0) < np.max(np.abs(u), initial=0.0):
        return cand, log_partial_likelihood(dataset, cand)
    return beta, loglik


def fit_mple(dataset, tol=1e-8, max_iter=50, init_beta=None, max_halving=10, pinv=False):
    """Maximum partial likelihood estimate by Newton-Raphson with step halving.

    Iterates ``beta <- beta + I_n(tau, beta)^{-1} U_n(tau, beta)`` until the
    max-norm of the score drops below ``tol``, then takes one polishing step. A step that lowers the log
    partial likelihood is halved up to ``max_halving`` times.

    Parameters
    ----------
    pinv : bool
        Use the Moore-Penrose inverse of a singular information matrix
        instead of raising :class:`SingularInformation`.

    Returns
    -------
    FitResult
        ``converged`` is False if ``max_iter`` was reached or the iterates
        ran off towards infinity (monotone likelihood); no exception is
        raised in those cases.
    """
    if dataset.n_events == 0:
        raise NoType1Events("no type-1 events; the partial likelihood is empty")
    beta = _as_beta(dataset, init_beta).copy()
    scale = _second_moment_scale(dataset, np.zeros(dataset.q))
    loglik = log_partial_likelihood(dataset, beta)
    history = []
    converged = False
    it = 0
    while True:
        u, info = _score_info(dataset, beta)
        history.append((beta.copy(), loglik, float(np.max(np.abs(u), initial=0.0))))
        if np.max(np.abs(u), initial=0.0) < tol:
            converged = True
            beta, loglik = _polish(dataset, beta, loglik, u, info)
            break
        if it >= max_iter:
            break
        try:
            check_information(info, scale)
            step = np.linalg.solve(info, u)
        except SingularInformation:
            if pinv:
                step = np.linalg.pinv(info) @ u
            elif it == 0:
                raise
            else:
                # the information vanishes along a direction in which the
                # likelihood keeps rising: no finite maximiser exists
                log.warning("information became singular at beta=%s; the partial likelihood "
                            "looks monotone", beta.tolist())
                break
        it += 1
        for _ in range(max_halving + 1):
            cand = beta + step
            cand_ll = log_partial_likelihood(dataset, cand)
            if np.isfinite(cand_ll) and cand_ll >= loglik - 1e-12 * abs(loglik):
                break
            step = step / 2
        else:
            log.warning("step halving exhausted at iteration %d", it)
            break
        beta, loglik = cand, cand_ll
    if not converged:
        log.warning("Newton-Raphson did not converge after %d iterations", it)

    u, info = _score_info(dataset, beta)
    if converged:
        try:
            check_information(info, scale)
        except SingularInformation:
            if not pinv:
                raise
    return FitResult(
        beta_hat=beta,
        breslow=breslow(dataset, beta),
        information=info / dataset.n,
        iterations=it,
        converged=converged,
        log_partial_likelihood=loglik,
        score=u,
        n=dataset.n,
        history=history,
    )


def breslow(dataset, beta):
    """Breslow estimator of the cumulative baseline subdistribution hazard."""
    beta = _as_beta(dataset, beta)
    s0, _ = event_sums(dataset, beta)
    with np.errstate(divide="ignore"):
        jumps = np.where(s0 > 0, 1.0 / s0, 0.0)
    return StepFunction.from_jumps(dataset.event_times_type1, jumps)


def gamma(beta, cumhaz, z):
    """The CIF functional ``1 - exp(-exp(z'beta) * A)``."""
    return -np.expm1(-np.exp(np.dot(z, beta)) * cumhaz)


def cif(fit, z):
    """Fitted cumulative incidence function for covariate vector ``z``."""
    if not fit.converged:
        raise NotConverged("the fit did not converge")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lp = float(z @ fit.beta_hat)
    return fit.breslow.map(lambda a: -np.expm1(-np.exp(lp) * a))
