from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from swarmsim.constants.swarmsim_constants import (
    ADVERSARIAL, BOUNDARY_CHOICES, DEFAULT_R_PERC, FIXED, FLOCKING, PERIODIC, TASK_ARITY,
)
from swarmsim.exceptions import FeatureError


@dataclass(frozen=True)
class EnvFeature:
    y: int
    L: float

    def __post_init__(self):
        if self.y not in (PERIODIC, FIXED):
            raise FeatureError(f"Boundary flag must be 0 (periodic) or 1 (fixed), got {self.y!r}")
        if not self.L > 0:
            raise FeatureError(f"Arena side L must be > 0, got {self.L!r}")

    @property
    def periodic(self):
        return self.y == PERIODIC

    @property
    def label(self):
        return dict(BOUNDARY_CHOICES)[self.y]

    def to_vector(self):
        return np.array([float(self.y), float(self.L)])

    @classmethod
    def from_values(cls, values):
        values = list(values)
        if len(values) != 2:
            raise FeatureError(f"Environment feature needs 2 values (y, L), got {len(values)}")
        y, length = values
        if float(y) not in (0.0, 1.0):
            raise FeatureError(f"Boundary flag must be 0 or 1, got {y!r}")
        return cls(int(y), float(length))


@dataclass(frozen=True)
class TaskFeature:
    """
    Task attributes in feature order.

    flocking:    (v_max, v_min, d_ref, r_perc)
    adversarial: (v_max, v_min, delta_h, n_o, r_atta)

    Adversarial tasks still perceive within r_perc; it is not part of their feature vector.
    """
    kind: str
    v_max: float
    v_min: float
    d_ref: Optional[float] = None
    r_perc: float = DEFAULT_R_PERC
    delta_h: Optional[float] = None
    n_o: Optional[int] = None
    r_atta: Optional[float] = None

    def __post_init__(self):
        if not self.v_max > self.v_min >= 0:
            raise FeatureError(f"Need v_max > v_min >= 0, got v_max={self.v_max}, v_min={self.v_min}")
        if not self.r_perc > 0:
            raise FeatureError(f"r_perc must be > 0, got {self.r_perc}")
        if self.kind == FLOCKING:
            if self.d_ref is None or not self.d_ref > 0:
                raise FeatureError(f"Flocking d_ref must be > 0, got {self.d_ref}")
        elif self.kind == ADVERSARIAL:
            if self.delta_h is None or not self.delta_h > 0:
                raise FeatureError(f"delta_h must be > 0, got {self.delta_h}")
            if self.n_o is None or self.n_o < 1 or int(self.n_o) != self.n_o:
                raise FeatureError(f"n_o must be an integer >= 1, got {self.n_o}")
            if self.r_atta is None or not self.r_atta > 0:
                raise FeatureError(f"r_atta must be > 0, got {self.r_atta}")
        else:
            raise FeatureError(f"Unknown task kind {self.kind!r}")

    @classmethod
    def flocking(cls, v_max, v_min, d_ref, r_perc):
        return cls(FLOCKING, float(v_max), float(v_min), d_ref=float(d_ref), r_perc=float(r_perc))

    @classmethod
    def adversarial(cls, v_max, v_min, delta_h, n_o, r_atta, r_perc=DEFAULT_R_PERC):
        if float(n_o) != int(n_o):
            raise FeatureError(f"n_o must be an integer >= 1, got {n_o}")
        return cls(
            ADVERSARIAL, float(v_max), float(v_min),
            delta_h=float(delta_h), n_o=int(n_o), r_atta=float(r_atta), r_perc=float(r_perc),
        )

    @classmethod
    def from_values(cls, values):
        values = [float(v) for v in values]
        kind = TASK_ARITY.get(len(values))
        if kind is None:
            raise FeatureError(
                f"Task feature needs 4 values (flocking: v_max,v_min,d_ref,r_perc) or "
                f"5 values (adversarial: v_max,v_min,delta_h,n_o,r_atta), got {len(values)}"
            )
        if kind == FLOCKING:
            return cls.flocking(*values)
        return cls.adversarial(*values)

    @property
    def is_flocking(self):
        return self.kind == FLOCKING

    def to_vector(self):
        if self.kind == FLOCKING:
            return np.array([self.v_max, self.v_min, self.d_ref, self.r_perc])
        return np.array([self.v_max, self.v_min, self.delta_h, float(self.n_o), self.r_atta])

    def label(self):
        return '(' + ','.join(f"{v:g}" for v in self.to_vector()) + ')'
