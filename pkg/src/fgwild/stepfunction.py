"""Right-continuous step functions."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant, right-continuous function of time.

    ``values[k]`` holds on ``[times[k], times[k+1])``; before ``times[0]`` the
    function equals ``initial``.
    """

    times: np.ndarray
    values: np.ndarray
    initial: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_jumps(cls, times, jumps):
        return cls(times, np.cumsum(jumps))

    @property
    def jumps(self):
        return np.diff(self.values, prepend=self.initial)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        padded = np.concatenate(([self.initial], self.values))
        out = padded[idx + 1]
        return out if out.ndim else float(out)

    def map(self, func):
        """Apply ``func`` to the values (and to the initial value)."""
        return StepFunction(self.times, func(self.values), float(func(np.float64(self.initial))))

    def to_dict(self):
        return {"times": self.times.tolist(), "values": self.values.tolist()}
