"""Logarithmic-entropy transfers.

``H_K(mu, nu) = sup_f { int f dnu - log int K e^f dmu } = KL(nu || mu K)``.
This is an entropic (log-)transfer, not a linear one: its operator
``f -> K e^f`` is multiplicative rather than constant-translating.  With the
identity kernel it is the relative entropy ``KL(nu || mu)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .operators import check_stochastic
from .space import FiniteSpace, Measure, ValidationError, kl_divergence


@dataclass(frozen=True, eq=False)
class LogEntropy:
    source: FiniteSpace
    target: FiniteSpace
    kernel: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kernel is None:
            if self.source.n != self.target.n:
                raise ValidationError("identity kernel needs equal spaces")
            k = np.eye(self.source.n)
        else:
            k = check_stochastic(self.kernel).copy()
        if k.shape != (self.source.n, self.target.n):
            raise ValidationError("kernel shape does not match the spaces")
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)

    @classmethod
    def identity(cls, space: FiniteSpace) -> "LogEntropy":
        return cls(space, space)

    def reference(self, mu: Measure) -> Measure:
        """The measure ``mu K`` that ``nu`` is compared against."""
        return Measure(self.target, np.clip(mu.weights @ self.kernel, 0.0, None)
                       / (mu.weights @ self.kernel).sum())

    def __call__(self, mu: Measure, nu: Measure) -> float:
        return kl_divergence(nu, self.reference(mu))

    def log_integral(self, f, mu: Measure) -> float:
        """``log int K e^f dmu`` (the integrated Kantorovich image, logged)."""
        w = mu.weights @ self.kernel
        with np.errstate(divide="ignore"):
            return float(logsumexp(np.asarray(f, dtype=float), b=w))

    def dual_objective(self, g, mu: Measure, nu: Measure) -> float:
        return nu.integrate(g) - self.log_integral(g, mu)
