"""Product parameter domains with Beta or Uniform marginals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import InvalidArgument


@dataclass(frozen=True)
class Marginal:
    kind: str          # "beta" (on [0, 1]) or "uniform" (on [a, b])
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.kind == "beta":
            if not (self.a > 0 and self.b > 0):
                raise InvalidArgument(f"Beta shape parameters must be positive, got ({self.a}, {self.b})")
        elif self.kind == "uniform":
            if not self.b > self.a:
                raise InvalidArgument(f"Uniform bounds need a < b, got ({self.a}, {self.b})")
        else:
            raise InvalidArgument(f"unknown distribution {self.kind!r}")

    @property
    def dist(self):
        if self.kind == "beta":
            return stats.beta(self.a, self.b)
        return stats.uniform(self.a, self.b - self.a)

    @property
    def support(self) -> tuple[float, float]:
        return (0.0, 1.0) if self.kind == "beta" else (self.a, self.b)

    def to_dict(self) -> dict:
        return dict(kind=self.kind, a=self.a, b=self.b)


@dataclass(frozen=True)
class ParamDomain:
    marginals: tuple

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        if not self.marginals:
            raise InvalidArgument("a parameter domain needs at least one coordinate")

    @classmethod
    def beta(cls, a=1.0, b=1.0, m: int = 1):
        return cls(tuple(Marginal("beta", a, b) for _ in range(m)))

    @classmethod
    def uniform(cls, lo=-1.0, hi=1.0, m: int = 1):
        return cls(tuple(Marginal("uniform", lo, hi) for _ in range(m)))

    @property
    def m(self) -> int:
        return len(self.marginals)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        s = np.array([mg.support for mg in self.marginals])
        return s[:, 0], s[:, 1]

    @property
    def mean(self) -> np.ndarray:
        return np.array([mg.dist.mean() for mg in self.marginals])

    def density(self, mu) -> float:
        mu = np.atleast_1d(mu)
        return float(np.prod([mg.dist.pdf(x) for mg, x in zip(self.marginals, mu)]))

    def contains(self, mu) -> bool:
        lo, hi = self.bounds
        mu = np.atleast_1d(mu)
        return bool(np.all(mu >= lo) and np.all(mu <= hi))

    def sample(self, n: int, seed=None) -> np.ndarray:
        return sample_parameters(self, n, seed)

    def to_dict(self) -> dict:
        return dict(marginals=[mg.to_dict() for mg in self.marginals])

    @classmethod
    def from_dict(cls, d: dict) -> "ParamDomain":
        return cls(tuple(Marginal(**m) for m in d["marginals"]))


def sample_parameters(domain: ParamDomain, n: int, seed=None) -> np.ndarray:
    """``n`` independent draws, shape (n, m); reproducible for a given seed."""
    if int(n) < 1:
        raise InvalidArgument(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    cols = []
    for mg in domain.marginals:
        if mg.kind == "beta":
            cols.append(rng.beta(mg.a, mg.b, size=int(n)))
        else:
            cols.append(rng.uniform(mg.a, mg.b, size=int(n)))
    return np.column_stack(cols)
