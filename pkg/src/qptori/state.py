"""Phase-space points on T^d x R^d."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import mpmath
from mpmath import mpf

from .numerics import to_decimal, from_decimal, to_mpf


@dataclass(frozen=True)
class PhaseState:
    """A point ``(theta, r)``; angles are stored reduced to [0, 1).

    ``winding`` keeps the integer parts removed by the reduction, so the
    unwrapped angle is ``theta + winding``.
    """

    theta: tuple[mpf, ...]
    r: tuple[mpf, ...]
    winding: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.theta) != len(self.r):
            raise ValueError("theta and r must have the same dimension")
        reduced, wind = [], []
        extra = self.winding or (0,) * len(self.theta)
        for th, w in zip(self.theta, extra):
            th = to_mpf(th)
            fl = mpmath.floor(th)
            reduced.append(th - fl)
            wind.append(int(w) + int(fl))
        object.__setattr__(self, "theta", tuple(reduced))
        object.__setattr__(self, "r", tuple(to_mpf(x) for x in self.r))
        object.__setattr__(self, "winding", tuple(wind))

    @classmethod
    def make(cls, theta: Sequence, r: Sequence) -> "PhaseState":
        return cls(tuple(theta), tuple(r))

    @property
    def d(self) -> int:
        return len(self.r)

    @property
    def s(self) -> mpf:
        return self.r[-1]

    def action_norm(self) -> mpf:
        """Sup norm of the actions, the distance to the torus r = 0."""
        return max(abs(x) for x in self.r)

    def to_json(self) -> dict:
        return {"theta": [to_decimal(x) for x in self.theta], "r": [to_decimal(x) for x in self.r],
                "winding": list(self.winding)}

    @classmethod
    def from_json(cls, data: dict) -> "PhaseState":
        return cls(tuple(from_decimal(x) for x in data["theta"]), tuple(from_decimal(x) for x in data["r"]),
                   tuple(int(w) for w in data.get("winding", ())))
