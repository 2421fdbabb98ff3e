"""Competing-risks data in counting-process form.

A subject contributes an observed time, an event code (0 censored, 1 event of
interest, 2+ competing event), a censoring time and a covariate vector. Under
the Fine-Gray risk set a subject stays at risk until its type-1 event or,
failing that, until its censoring time; competing events do not remove a
subject. The subject therefore has a single *exit time* and is at risk on the
closed interval ``[0, exit]``.
"""

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import (
    DataError,
    MissingCensoringTime,
    NegativeTime,
    NonFiniteCovariate,
    TiedType1Events,
)

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    CENSORING_COMPLETE = "censoring-complete"
    PARTIALLY_CENSORING_COMPLETE = "partially-censoring-complete"


@dataclass(frozen=True)
class SubjectRecord:
    observed_time: float
    event_type: int
    censoring_time: float | None
    covariates: tuple

    def __post_init__(self):
        t, c = self.observed_time, self.censoring_time
        if not math.isfinite(t) or t < 0:
            raise NegativeTime(f"observed time must be finite and >= 0, got {t}")
        if self.event_type < 0:
            raise DataError(f"event type must be >= 0, got {self.event_type}")
        if c is not None:
            if not c >= 0:
                raise NegativeTime(f"censoring time must be >= 0, got {c}")
            if self.event_type == 0 and c != t:
                raise DataError(
                    f"censored record has observed time {t} but censoring time {c}"
                )
            if self.event_type >= 1 and t > c:
                raise DataError(f"event at {t} after censoring time {c}")
        elif self.event_type != 1:
            raise MissingCensoringTime(
                f"censoring time missing for a record with event type {self.event_type}"
            )
        if not all(math.isfinite(z) for z in self.covariates):
            raise NonFiniteCovariate(f"non-finite covariate in {self.covariates}")


class Dataset:
    """Validated, immutable competing-risks sample sorted by observed time.

    Parameters
    ----------
    time, event : array_like, shape (n,)
        Observed times and event codes (0 censored, 1 interest, >= 2 competing).
    censoring : array_like, shape (n,), optional
        Censoring times; ``nan`` marks an absent value. Censored records may
        leave it absent, it is then taken to be the observed time.
    covariates : array_like, shape (n, q)
    mode : Mode or str, optional
        Required completeness. If omitted it is inferred from the data.
    tau : float, optional
        End of follow-up, defaults to the largest observed or censoring time.
    jitter : float, optional
        Break ties among type-1 event times by adding ``k * jitter`` to the
        k-th member (in input order) of each tied group. Without it ties are an
        error.
    """

    def __init__(self, time, event, covariates, censoring=None, mode=None, tau=None,
                 jitter=None):
        time = np.asarray(time, dtype=float).ravel()
        event = np.asarray(event).ravel()
        n = time.size
        if n == 0:
            raise DataError("empty dataset")
        if not np.all(np.equal(np.mod(event, 1), 0)) or np.any(event < 0):
            raise DataError("event codes must be non-negative integers")
        event = event.astype(np.int64)
        z = np.asarray(covariates, dtype=float)
        if z.ndim == 1:
            z = z.reshape(n, -1) if z.size else np.zeros((n, 0))
        if z.shape[0] != n:
            raise DataError(f"{z.shape[0]} covariate rows for {n} records")
        if not np.all(np.isfinite(z)):
            bad = np.flatnonzero(~np.all(np.isfinite(z), axis=1))
            raise NonFiniteCovariate(f"non-finite covariates in rows {bad.tolist()}")
        if censoring is None:
            cens = np.full(n, np.nan)
        else:
            cens = np.asarray(censoring, dtype=float).ravel().copy()
            if cens.size != n:
                raise DataError("censoring column has the wrong length")
        if np.any(~np.isfinite(time)) or np.any(time < 0):
            raise NegativeTime("observed times must be finite and non-negative")
        if np.any(cens < 0) or np.any(np.isinf(cens)):
            raise NegativeTime("censoring times must be finite and non-negative")

        censored = event == 0
        fill = censored & np.isnan(cens)
        cens[fill] = time[fill]
        if np.any(censored & (cens != time)):
            rows = np.flatnonzero(censored & (cens != time))
            raise DataError(f"censored rows {rows.tolist()} have censoring time != observed time")
        missing = np.isnan(cens)
        if np.any(missing & (event != 1)):
            rows = np.flatnonzero(missing & (event != 1))
            raise MissingCensoringTime(
                f"censoring time absent for non-type-1 rows {rows.tolist()}"
            )
        if mode is None:
            mode = Mode.PARTIALLY_CENSORING_COMPLETE if missing.any() else Mode.CENSORING_COMPLETE
        mode = Mode(mode)
        if mode is Mode.CENSORING_COMPLETE and missing.any():
            raise MissingCensoringTime(
                f"censoring-complete data needs censoring times for all rows; "
                f"absent in rows {np.flatnonzero(missing).tolist()}"
            )

        self.jitter_log = []
        type1 = event == 1
        if jitter is not None:
            time = self._break_ties(time, type1, float(jitter))
        t1 = time[type1]
        uniq, counts = np.unique(t1, return_counts=True)
        if np.any(counts > 1):
            raise TiedType1Events(uniq[counts > 1])
        late = (event >= 1) & ~missing & (time > cens)
        if np.any(late):
            raise DataError(f"event after censoring time in rows {np.flatnonzero(late).tolist()}")

        order = np.argsort(time, kind="stable")
        self.original_index = order
        self.time = time[order]
        self.event = event[order]
        self.censoring = cens[order]
        self.covariates = z[order]
        self.mode = mode
        for arr in (self.time, self.event, self.censoring, self.covariates, self.original_index):
            arr.setflags(write=False)

        horizon = float(np.nanmax(np.concatenate([self.time, self.censoring])))
        self.tau = horizon if tau is None else float(tau)
        if self.tau < float(self.time.max()):
            raise DataError(f"tau={self.tau} is before the last observed time")

    def _break_ties(self, time, type1, eps):
        time = time.copy()
        idx = np.flatnonzero(type1)
        seen = {}
        for i in idx:
            k = seen.get(time[i], 0)
            seen[time[i]] = k + 1
            if k:
                new = time[i] + k * eps
                self.jitter_log.append({"row": int(i), "from": float(time[i]), "to": float(new)})
                log.info("jitter: row %d type-1 time %g -> %g", i, time[i], new)
                time[i] = new
        return time

    @property
    def n(self):
        return self.time.size

    @property
    def q(self):
        return self.covariates.shape[1]

    def __len__(self):
        return self.n

    @cached_property
    def records(self):
        return [
            SubjectRecord(
                float(t), int(e), None if np.isnan(c) else float(c), tuple(map(float, z))
            )
            for t, e, c, z in zip(self.time, self.event, self.censoring, self.covariates)
        ]

    @cached_property
    def exit_time(self):
        """Last time each subject is in the Fine-Gray risk set."""
        out = np.where(self.event == 1, self.time, self.censoring)
        out.setflags(write=False)
        return out

    @cached_property
    def event_index(self):
        """Row indices of type-1 events, ordered by event time."""
        idx = np.flatnonzero(self.event == 1)
        idx.setflags(write=False)
        return idx

    @property
    def event_times_type1(self):
        return self.time[self.event_index]

    @property
    def n_events(self):
        return self.event_index.size

    @cached_property
    def _exit_order(self):
        order = np.argsort(self.exit_time, kind="stable")
        start = np.searchsorted(self.exit_time[order], self.event_times_type1, side="left")
        return order, start

    def at_risk_count(self, t):
        """Number of subjects in the risk set at time(s) ``t``."""
        ex = np.sort(self.exit_time)
        return self.n - np.searchsorted(ex, np.asarray(t, dtype=float), side="left")

    def at_risk_matrix(self, times):
        """Boolean ``(n, len(times))`` matrix of risk-set membership."""
        return self.exit_time[:, None] >= np.asarray(times, dtype=float)[None, :]

    def summary(self):
        counts = np.bincount(self.event, minlength=3)
        return {
            "n": self.n,
            "q": self.q,
            "mode": self.mode.value,
            "tau": self.tau,
            "censored": int(counts[0]),
            "type1": int(counts[1]),
            "competing": int(counts[2:].sum()),
        }


def at_risk(dataset, i, t):
    """1 if subject ``i`` is in the Fine-Gray risk set at time ``t``, else 0."""
    return int(dataset.exit_time[i] >= t)


def counting_increment(dataset, i, t):
    """1 if subject ``i`` has its type-1 event exactly at ``t``, else 0."""
    return int(dataset.event[i] == 1 and dataset.time[i] == t)


@dataclass
class CSVSchema:
    time_col: str = "time"
    event_col: str = "event"
    cens_col: str | None = "cens"
    covariate_cols: list = field(default_factory=list)
    censor_code: str = "0"
    interest_code: str = "1"


def load_csv(path, schema=None, mode=None, jitter=None, tau=None):
    """Read a competing-risks CSV (with header) into a :class:`Dataset`.

    Event codes are compared as strings. ``schema.censor_code`` maps to 0,
    ``schema.interest_code`` to 1 and every other code to 2, 3, ... in sorted
    order. Empty cells in the censoring column mean "absent".
    """
    schema = schema or CSVSchema()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.time_col, schema.event_col, *schema.covariate_cols]
        if schema.cens_col:
            needed.append(schema.cens_col)
        absent = [c for c in needed if c not in header]
        if absent:
            raise DataError(f"columns not found in {path}: {absent}")
        rows = list(reader)

    codes = [r[schema.event_col].strip() for r in rows]
    others = sorted({c for c in codes if c not in (schema.censor_code, schema.interest_code)})
    code_map = {schema.censor_code: 0, schema.interest_code: 1}
    code_map.update({c: 2 + k for k, c in enumerate(others)})

    def num(x):
        x = x.strip()
        return float("nan") if x == "" or x.upper() == "NA" else float(x)

    time = np.array([num(r[schema.time_col]) for r in rows])
    event = np.array([code_map[c] for c in codes])
    cens = None
    if schema.cens_col:
        cens = np.array([num(r[schema.cens_col]) for r in rows])
    z = np.array(
        [[num(r[c]) for c in schema.covariate_cols] for r in rows], dtype=float
    ).reshape(len(rows), len(schema.covariate_cols))
    return Dataset(time, event, z, censoring=cens, mode=mode, tau=tau, jitter=jitter)
