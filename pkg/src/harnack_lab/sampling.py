from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError


@dataclass(frozen=True)
class SamplePlan:
    """Seeded random sampling plan over named closed intervals.

    Variables listed in ``log`` are drawn log-uniformly (their range must be
    strictly positive).
    """

    count: int
    seed: int = 0
    ranges: dict = field(default_factory=dict)
    log: tuple = ()

    def __post_init__(self):
        if int(self.count) < 1:
            raise InputError("count must be >= 1")
        if not self.ranges:
            raise InputError("sample plan needs at least one range")
        for name, (lo, hi) in self.ranges.items():
            if not lo <= hi:
                raise InputError(f"range for {name!r} is empty: [{lo}, {hi}]")
            if name in self.log and lo <= 0:
                raise InputError(f"log-sampled variable {name!r} needs a positive range")

    def draw(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        out = {}
        # sorted order keeps draws stable when ranges are given in another order
        for name in sorted(self.ranges):
            lo, hi = self.ranges[name]
            u = rng.random(int(self.count))
            if name in self.log:
                out[name] = np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
            else:
                out[name] = lo + u * (hi - lo)
        return out

    def with_ranges(self, **ranges) -> "SamplePlan":
        merged = dict(self.ranges)
        merged.update(ranges)
        return SamplePlan(self.count, self.seed, merged, self.log)
