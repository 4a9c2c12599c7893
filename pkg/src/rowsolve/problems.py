"""Benchmark systems and Jacobian handling.

An OdeSystem bundles the right side, a Jacobian strategy, the time span and
the initial state, plus an exact solution when one is known. Strategies
describe where the stage coupling matrix T comes from: the analytic map, a
forward-difference approximation, a frozen copy refreshed on a schedule, or
the analytic/difference matrix evaluated one accepted step behind. Anything
other than the fresh analytic map turns a ROW method into a W-method; the
steppers do not care, which is the point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .errors import EvaluationError

_DEFAULT_EPS = math.sqrt(np.finfo(float).eps)

RhsFn = Callable[[float, np.ndarray], np.ndarray]
MatrixFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Analytic:
    """Fresh analytic Jacobian every step."""

    matrix: MatrixFn


@dataclass(frozen=True)
class ForwardDifference:
    """Column-wise forward differences of f; increment per column j is
    eps_scale * max(|u_j|, 1)."""

    eps_scale: float = _DEFAULT_EPS


@dataclass(frozen=True)
class Frozen:
    """Hold one matrix for up to max_age accepted steps; also refreshed after
    two consecutive step rejections."""

    max_age: int
    base: Union[Analytic, ForwardDifference]


@dataclass(frozen=True)
class TimeLagged:
    """Evaluate the base matrix at the previous accepted step's point."""

    base: Union[Analytic, ForwardDifference]


JacobianStrategy = Union[Analytic, ForwardDifference, Frozen, TimeLagged]


@dataclass(frozen=True)
class OdeSystem:
    name: str
    dim: int
    f: RhsFn
    jacobian: JacobianStrategy
    t_span: tuple[float, float]
    u0: np.ndarray
    exact: Callable[[float], np.ndarray] | None = None
    autonomous: bool = True
    dfdt: Callable[[float, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        u0 = np.atleast_1d(np.asarray(self.u0))
        if u0.size != self.dim:
            raise ValueError(f"u0 has size {u0.size}, expected dim={self.dim}")
        object.__setattr__(self, "u0", u0)
        t0, t_end = self.t_span
        if not t_end > t0:
            raise ValueError("t_span must satisfy t_end > t0")


def fd_jacobian(f: RhsFn, t: float, u: np.ndarray,
                eps_scale: float = _DEFAULT_EPS) -> np.ndarray:
    """Forward-difference Jacobian of f at (t, u).

    Raises EvaluationError carrying the column index if any perturbed
    evaluation comes back non-finite.
    """
    u = np.asarray(u)
    f0 = np.asarray(f(t, u))
    if not np.all(np.isfinite(f0)):
        raise EvaluationError("f(t, u) is not finite at the base point")
    n = u.size
    jac = np.zeros((n, n), dtype=np.result_type(f0, u))
    for j in range(n):
        eps = eps_scale * max(abs(u[j]), 1.0)
        up = u.copy()
        up[j] += eps
        fj = np.asarray(f(t, up))
        if not np.all(np.isfinite(fj)):
            raise EvaluationError(
                f"non-finite f while differencing column {j}", column_index=j)
        jac[:, j] = (fj - f0) / eps
    return jac


def time_partial(sys: OdeSystem, t: float, u: np.ndarray,
                 eps_scale: float = _DEFAULT_EPS) -> np.ndarray:
    """Partial of f with respect to t: the exact map when the system carries
    one, a forward difference otherwise."""
    if sys.dfdt is not None:
        return np.asarray(sys.dfdt(t, u))
    eps = eps_scale * max(abs(t), 1.0)
    return (np.asarray(sys.f(t + eps, u)) - np.asarray(sys.f(t, u))) / eps


class JacobianCache:
    """Mutable per-run state behind eval_jacobian.

    stamp identifies the matrix currently in use; it only moves when a fresh
    matrix is computed, so factorizations keyed on it stay valid across steps
    exactly as long as the matrix does.
    """

    def __init__(self, strategy: JacobianStrategy):
        self.strategy = strategy
        self.stamp = 0
        self.matrix: np.ndarray | None = None
        self.age = 0
        self.lag_point: tuple[float, np.ndarray] | None = None
        self.consecutive_rejections = 0
        self.refreshes = 0

    def notify_accept(self, t_from: float, u_from: np.ndarray) -> None:
        """Record an accepted step that started at (t_from, u_from)."""
        self.age += 1
        self.consecutive_rejections = 0
        self.lag_point = (t_from, np.array(u_from))

    def notify_reject(self) -> None:
        self.consecutive_rejections += 1

    def _fresh(self, base, sys: OdeSystem, t: float, u: np.ndarray) -> np.ndarray:
        if isinstance(base, Analytic):
            mat = np.asarray(base.matrix(t, u))
            if not np.all(np.isfinite(mat)):
                raise EvaluationError("analytic Jacobian is not finite")
        else:
            mat = fd_jacobian(sys.f, t, u, base.eps_scale)
        self.stamp += 1
        self.refreshes += 1
        self.matrix = mat
        self.age = 0
        return mat


def eval_jacobian(sys: OdeSystem, t: float, u: np.ndarray,
                  cache: JacobianCache) -> np.ndarray:
    """The coupling matrix T for a step starting at (t, u), per the strategy.

    Frozen reuses its matrix until max_age accepted steps have passed or two
    rejections occurred in a row. TimeLagged evaluates at the previous
    accepted point; before the first acceptance it falls back to (t, u).
    """
    strategy = cache.strategy
    if isinstance(strategy, (Analytic, ForwardDifference)):
        return cache._fresh(strategy, sys, t, u)
    if isinstance(strategy, Frozen):
        stale = (cache.matrix is None or cache.age >= strategy.max_age
                 or cache.consecutive_rejections >= 2)
        if stale:
            return cache._fresh(strategy.base, sys, t, u)
        return cache.matrix
    if isinstance(strategy, TimeLagged):
        tl, ul = cache.lag_point if cache.lag_point is not None else (t, u)
        return cache._fresh(strategy.base, sys, tl, ul)
    raise TypeError(f"unknown jacobian strategy {strategy!r}")


def _augmented_strategy(sys: OdeSystem) -> JacobianStrategy:
    def augment(base):
        if isinstance(base, ForwardDifference):
            # differencing the appended clock column is exactly the time partial
            return base

        def matrix(t, w):
            u = w[:-1]
            tau = float(np.real(w[-1]))
            inner = np.asarray(base.matrix(tau, u))
            n = inner.shape[0]
            out = np.zeros((n + 1, n + 1), dtype=np.result_type(inner, w))
            out[:n, :n] = inner
            out[:n, n] = time_partial(sys, tau, u)
            return out

        return Analytic(matrix)

    strategy = sys.jacobian
    if isinstance(strategy, Frozen):
        return Frozen(strategy.max_age, augment(strategy.base))
    if isinstance(strategy, TimeLagged):
        return TimeLagged(augment(strategy.base))
    return augment(strategy)


def autonomize(sys: OdeSystem) -> OdeSystem:
    """Append the clock as an extra state with unit derivative.

    The augmented Jacobian is bordered: the original block, the time partial
    as the last column, and a zero last row (the clock couples to nothing).
    Trajectories of the first dim components are unchanged.
    """
    def f(t, w):
        u = w[:-1]
        tau = float(np.real(w[-1]))
        du = np.asarray(sys.f(tau, u))
        return np.concatenate([du, np.ones(1, dtype=du.dtype)])

    exact = None
    if sys.exact is not None:
        def exact(t):  # noqa: F811
            base = np.asarray(sys.exact(t))
            return np.concatenate([base, np.array([t], dtype=base.dtype)])

    t0 = sys.t_span[0]
    u0 = np.concatenate([sys.u0, np.array([t0], dtype=sys.u0.dtype)])
    return OdeSystem(name=sys.name + "+clock", dim=sys.dim + 1, f=f,
                     jacobian=_augmented_strategy(sys), t_span=sys.t_span,
                     u0=u0, exact=exact, autonomous=True)


def with_strategy(sys: OdeSystem, strategy: JacobianStrategy) -> OdeSystem:
    """Copy of the system with a different Jacobian strategy."""
    return replace(sys, jacobian=strategy)


# --------------------------------------------------------------------------
# benchmark factories

def make_dahlquist(lam=-1.0, u0=1.0, t_span=(0.0, 1.0)) -> OdeSystem:
    """Scalar test equation u' = lam u; lam may be complex."""
    dtype = complex if (isinstance(lam, complex) or isinstance(u0, complex)) else float
    lam = dtype(lam)
    u0_arr = np.array([u0], dtype=dtype)
    t0 = t_span[0]

    def f(t, u):
        return lam * u

    def jac(t, u):
        return np.array([[lam]], dtype=dtype)

    def exact(t):
        return u0_arr * np.exp(lam * (t - t0))

    return OdeSystem(name="dahlquist", dim=1, f=f, jacobian=Analytic(jac),
                     t_span=tuple(t_span), u0=u0_arr, exact=exact)


def make_heat1d(n=20, diffusion=1.0, t_span=(0.0, 1.0)) -> OdeSystem:
    """Method-of-lines heat equation on (0, 1) with zero boundary values.

    Second differences on n interior points, mesh width 1/(n+1), initial
    profile sin(pi x). That profile is an eigenvector of the difference
    matrix, so the exact semi-discrete solution is a single decaying mode.
    """
    hx = 1.0 / (n + 1)
    scale = diffusion / hx ** 2
    mat = scale * (np.diag(np.full(n - 1, 1.0), -1)
                   + np.diag(np.full(n, -2.0))
                   + np.diag(np.full(n - 1, 1.0), 1))
    mat.flags.writeable = False
    x = hx * np.arange(1, n + 1)
    u0 = np.sin(np.pi * x)
    mu = scale * (2.0 * np.cos(np.pi * hx) - 2.0)  # eigenvalue of the sine mode
    t0 = t_span[0]

    def f(t, u):
        return mat @ u

    def jac(t, u):
        return mat

    def exact(t):
        return np.exp(mu * (t - t0)) * u0

    return OdeSystem(name="heat1d", dim=n, f=f, jacobian=Analytic(jac),
                     t_span=tuple(t_span), u0=u0, exact=exact)


def make_order_reduction_problem(lam=-1.0e6, t_span=(0.0, 1.0)) -> OdeSystem:
    """Scalar stiff relaxation onto a prescribed smooth path.

    u' = lam (u - phi(t)) + phi'(t) with phi = sin, started on the path, so
    the exact solution is phi itself for every lam. Nonstiff lam measures
    the classical order; very stiff lam exposes order reduction.
    """
    def f(t, u):
        return lam * (u - math.sin(t)) + math.cos(t)

    def jac(t, u):
        return np.array([[lam]], dtype=float)

    def dfdt(t, u):
        return np.array([-lam * math.cos(t) - math.sin(t)])

    def exact(t):
        return np.array([math.sin(t)])

    return OdeSystem(name="protrob", dim=1, f=f, jacobian=Analytic(jac),
                     t_span=tuple(t_span), u0=np.array([math.sin(t_span[0])]),
                     exact=exact, autonomous=False, dfdt=dfdt)
