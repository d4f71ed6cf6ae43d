"""Dated daily count series."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

__all__ = ["CountSeries"]


@dataclass(frozen=True)
class CountSeries:
    """Daily incidence counts with provenance metadata.

    ``values[i]`` is observed on ``start_date + i`` days and corresponds
    to model time ``t = i + 1`` (t = 0 is the day before the first
    observation).  ``clamp_log`` records the model times at which
    negative cumulative differences were clamped to zero during
    extraction.
    """

    start_date: dt.date
    values: np.ndarray
    indicator: str = ""
    region: str | None = None
    clamp_log: tuple = field(default_factory=tuple)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 1:
            raise ValueError("values must be a non-empty 1-d array")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("counts must be finite and non-negative")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        """Model times 1..T."""
        return np.arange(1, self.values.size + 1, dtype=float)

    @property
    def dates(self) -> list:
        return [self.start_date + dt.timedelta(days=i)
                for i in range(self.values.size)]

    def date_for_time(self, t: float) -> dt.date:
        """Calendar date of model time t (fractional t rounds to nearest day)."""
        return self.start_date + dt.timedelta(days=int(round(t)) - 1)

    def time_for_date(self, date: dt.date) -> int:
        return (date - self.start_date).days + 1

    def cumulative(self, start_level: float = 0.0) -> np.ndarray:
        return start_level + np.cumsum(self.values)

    def window(self, n: int) -> "CountSeries":
        """First n observations."""
        if not 1 <= n <= len(self):
            raise ValueError(f"window length {n} outside 1..{len(self)}")
        return CountSeries(
            start_date=self.start_date,
            values=self.values[:n],
            indicator=self.indicator,
            region=self.region,
            clamp_log=tuple(t for t in self.clamp_log if t <= n),
        )
