"""Controlled lazy random walks on a cyclic grid.

The Bellman operator ``Tu(x) = max_v [sum_x' p(x'|x, v) u(x') - L(x, v)]`` is
a Kantorovich operator; its additive eigenvalue ``c`` (``Tu + c = u``) is the
optimal long-run average of ``L``.  Relative value iteration and the
occupation-measure LP compute it from both sides.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .lp import LinearProgram, lp_solve
from .operators import FunctionOperator
from .space import NORMALIZATION_TOL, ValidationError
from .transfer import ConvergenceError


def _lazy_kernel(N: int, dim: int, shift) -> np.ndarray:
    """Rows ``p(.|x, v)``: shift by ``v``, then stay w.p. 1/2 or step to a neighbour."""
    n = N ** dim
    K = np.zeros((n, n))
    step = 0.5 / (2 * dim)
    for x in itertools.product(range(N), repeat=dim):
        i = np.ravel_multi_index(x, (N,) * dim)
        y = tuple((a + b) % N for a, b in zip(x, shift))
        K[i, np.ravel_multi_index(y, (N,) * dim)] += 0.5
        for axis in range(dim):
            for s in (-1, 1):
                z = list(y)
                z[axis] = (z[axis] + s) % N
                K[i, np.ravel_multi_index(tuple(z), (N,) * dim)] += step
    return K


@dataclass
class ControlledChain:
    """``kernel[a]`` is the row-stochastic matrix of control ``controls[a]``;
    ``lagrangian[x, a]`` is the running cost."""

    N: int
    dim: int
    controls: list
    kernel: np.ndarray       # (n_controls, n, n)
    lagrangian: np.ndarray   # (n, n_controls)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kernel = np.asarray(self.kernel, dtype=float)
        self.lagrangian = np.asarray(self.lagrangian, dtype=float)
        k, n, n2 = self.kernel.shape
        if n != n2 or n != self.N ** self.dim or k != len(self.controls):
            raise ValidationError("kernel shape does not match states and controls")
        if self.lagrangian.shape != (n, k):
            raise ValidationError("lagrangian must be (states, controls)")
        if np.any(self.kernel < 0) or np.max(np.abs(self.kernel.sum(axis=2) - 1)) > NORMALIZATION_TOL:
            raise ValidationError("each p(.|x, v) must be a probability vector")
        if not np.all(np.isfinite(self.lagrangian)) or np.any(self.lagrangian < 0):
            raise ValidationError("lagrangian must be finite and non-negative")

    @property
    def n(self) -> int:
        return self.N ** self.dim

    @classmethod
    def lazy(cls, N: int, controls: Sequence = (-1, 0, 1), potential=None,
             dim: int = 1) -> "ControlledChain":
        """Lazy walk with ``L(x, v) = |v|^2 / 2 + V(x)``.

        For ``dim = 2`` integer controls are expanded to all shift pairs.
        """
        if N < 2:
            raise ValidationError("need N >= 2")
        if dim == 1:
            shifts = [(int(v),) for v in controls]
        elif dim == 2:
            shifts = [(int(a), int(b)) for a in controls for b in controls]
        else:
            raise ValidationError("dim must be 1 or 2")
        n = N ** dim
        V = np.zeros(n) if potential is None else np.asarray(potential, dtype=float).ravel()
        if V.shape != (n,):
            raise ValidationError("potential must have one value per state")
        kernel = np.stack([_lazy_kernel(N, dim, s) for s in shifts])
        L = np.array([[0.5 * sum(a * a for a in s) for s in shifts]] * n) + V[:, None]
        ctrl = [s[0] if dim == 1 else list(s) for s in shifts]
        return cls(N, dim, ctrl, kernel, L,
                   meta={"kinetic": "v2/2", "potential": V.tolist(), "base_controls": list(controls)})


def _scores(chain: ControlledChain, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.einsum("kxy,y->xk", chain.kernel, u) - chain.lagrangian


def bellman_apply(chain: ControlledChain, u) -> np.ndarray:
    return _scores(chain, u).max(axis=1)


def bellman_policy(chain: ControlledChain, u) -> np.ndarray:
    """Optimal control index per state; ties go to the first listed control."""
    return np.argmax(_scores(chain, u), axis=1)


def bellman_operator(chain: ControlledChain) -> FunctionOperator:
    def maxim(u):
        pol = bellman_policy(chain, u)
        return chain.kernel[pol, np.arange(chain.n)]

    return FunctionOperator(lambda u: bellman_apply(chain, u), chain.n, chain.n,
                            kind="bellman", maximizer_fn=maxim)


@dataclass
class RVIResult:
    c: float
    u: np.ndarray
    residual: float
    iterations: int
    policy: np.ndarray


def relative_value_iteration(chain: ControlledChain, x0: int = 0, tol: float = 1e-10,
                             max_iters: int = 10 ** 6) -> RVIResult:
    """Iterate ``u <- Tu - Tu(x0)`` until ``span(Tu - u) < tol``."""
    u = np.zeros(chain.n)
    for it in range(1, max_iters + 1):
        h = bellman_apply(chain, u)
        d = h - u
        if np.ptp(d) < tol:
            break
        u = h - h[x0]
    else:
        raise ConvergenceError("span seminorm did not contract")
    c = -float(np.mean([d.max(), d.min()]))
    res = float(np.max(np.abs(bellman_apply(chain, u) + c - u)))
    return RVIResult(c, u - u[x0], res, it, bellman_policy(chain, u))


@dataclass
class OccupationResult:
    c: float
    m: np.ndarray   # (states, controls)
    invariance_residual: float


def occupation_lp(chain: ControlledChain) -> OccupationResult:
    """``min sum L m`` over invariant state-control probabilities."""
    n, k = chain.n, len(chain.controls)
    # variable index x * k + a
    flow = np.einsum("kxy->xky", chain.kernel).reshape(n * k, n).T   # (x', var)
    out = np.repeat(np.eye(n), k, axis=1)                               # (x', var)
    A = np.vstack([np.ones((1, n * k)), (flow - out)[:-1]])
    b = np.zeros(n)
    b[0] = 1.0
    x, value = lp_solve(LinearProgram(chain.lagrangian.reshape(-1), A, b), exact=False)
    m = np.clip(np.asarray(x, dtype=float), 0.0, None).reshape(n, k)
    m = m / m.sum()
    res = invariance_residual(chain, m)
    return OccupationResult(float(value), m, res)


def invariance_residual(chain: ControlledChain, m) -> float:
    m = np.asarray(m, dtype=float)
    inflow = np.einsum("xk,kxy->y", m, chain.kernel)
    return float(np.max(np.abs(inflow - m.sum(axis=1))))


def domination_check(chain: ControlledChain, u, k: float, horizon: int,
                     tol: float = 1e-9) -> bool:
    """``T^n u + k n <= u`` entrywise for every ``1 <= n <= horizon``."""
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    u = np.asarray(u, dtype=float)
    v = u.copy()
    for n in range(1, horizon + 1):
        v = bellman_apply(chain, v)
        if np.any(v + k * n > u + tol):
            return False
    return True


def domination_sup(chain: ControlledChain, u, horizon: Optional[int] = None,
                   tol: float = 1e-8) -> float:
    """Bisection for ``sup{k : domination_check(chain, u, k, horizon)}``."""
    horizon = horizon or 4 * chain.n
    Lmax = float(chain.lagrangian.max())
    lo, hi = -Lmax - 1.0, Lmax + 1.0
    if not domination_check(chain, u, lo, horizon):
        raise ValidationError("lower bracket not admissible")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if domination_check(chain, u, mid, horizon):
            lo = mid
        else:
            hi = mid
    return lo
