"""One-step linearly implicit integration.

Single steps are available in the direct form (one factorization per distinct
diagonal entry, right-hand sides carry an explicit T-coupling term) and the
transformed form (stage combinations chosen so T never multiplies a vector).
On top of the steppers sit an adaptive driver with embedded or step-doubling
error control, a fixed-grid driver, and global extrapolation of the linearly
implicit Euler scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import IntegrationFailure, SingularMatrixError, StepFailure
from .linsolve import DIRECT, TRANSFORMED, FactorizationStore
from .problems import (JacobianCache, OdeSystem, autonomize, eval_jacobian,
                       time_partial, with_strategy)
from .tableaus import RowTableau, TransformedTableau, get_method, transform

EMBEDDED = "embedded"
RICHARDSON = "richardson"


@dataclass(frozen=True)
class StepOutcome:
    """Result of a single attempted step from one state."""

    u_next: np.ndarray
    stages: np.ndarray
    mode: str
    factorizations_used: int
    f_evals: int
    u_embedded: np.ndarray | None = None


def _work_dtype(u: np.ndarray):
    return np.result_type(np.asarray(u).dtype, np.float64)


def _check_finite(u_next: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(u_next)):
        raise StepFailure(f"non-finite state produced by step at t={t}")


def row_step(sys: OdeSystem, tableau, t: float, u: np.ndarray, h: float,
             T: np.ndarray, mode: str = TRANSFORMED,
             store: FactorizationStore | None = None,
             jac_stamp: int = 0) -> StepOutcome:
    """Advance (t, u) by h treating the system as autonomous in f.

    tableau may be a RowTableau (stepped in the requested mode) or an
    already transformed tableau (stepped in transformed mode regardless).
    T is whatever coupling matrix the caller wants; it does not have to be
    the Jacobian. Factorizations go through store so repeated steps with an
    unchanged (h, T) pair reuse them.
    """
    if store is None:
        store = FactorizationStore()
    if isinstance(tableau, TransformedTableau):
        return _transformed_step(sys, tableau, t, u, h, T, store, jac_stamp)
    if mode == TRANSFORMED:
        return _transformed_step(sys, transform(tableau), t, u, h, T, store,
                                 jac_stamp)
    if mode == DIRECT:
        return _direct_step(sys, tableau, t, u, h, T, store, jac_stamp)
    raise ValueError(f"unknown stage form {mode!r}")


def _transformed_step(sys, tt: TransformedTableau, t, u, h, T, store,
                      jac_stamp) -> StepOutcome:
    s = tt.stages
    u = np.asarray(u)
    S = np.zeros((s, u.size), dtype=_work_dtype(u))
    fac0 = store.counters.factorizations
    for i in range(s):
        ui = u + tt.a[i, :i] @ S[:i]
        rhs = np.asarray(sys.f(t, ui), dtype=S.dtype)
        store.counters.f_evals += 1
        if i > 0:
            rhs = rhs + (tt.c[i, :i] / h) @ S[:i]
        fac = store.get(T, h, tt.gamma_diag[i], jac_stamp, TRANSFORMED)
        S[i] = store.solve(fac, rhs)
    u_next = u + tt.m @ S
    _check_finite(u_next, t)
    u_emb = u + tt.m_hat @ S if tt.m_hat is not None else None
    return StepOutcome(u_next=u_next, stages=S, mode=TRANSFORMED,
                       factorizations_used=store.counters.factorizations - fac0,
                       f_evals=s, u_embedded=u_emb)


def _direct_step(sys, tab: RowTableau, t, u, h, T, store,
                 jac_stamp) -> StepOutcome:
    s = tab.stages
    u = np.asarray(u)
    K = np.zeros((s, u.size), dtype=_work_dtype(u))
    fac0 = store.counters.factorizations
    for i in range(s):
        ui = u + tab.alpha[i, :i] @ K[:i]
        rhs = h * np.asarray(sys.f(t, ui), dtype=K.dtype)
        store.counters.f_evals += 1
        if i > 0:
            rhs = rhs + h * (T @ (tab.gamma[i, :i] @ K[:i]))
        fac = store.get(T, h, tab.gamma[i, i], jac_stamp, DIRECT)
        K[i] = store.solve(fac, rhs)
    u_next = u + tab.b @ K
    _check_finite(u_next, t)
    u_emb = u + tab.b_hat @ K if tab.b_hat is not None else None
    return StepOutcome(u_next=u_next, stages=K, mode=DIRECT,
                       factorizations_used=store.counters.factorizations - fac0,
                       f_evals=s, u_embedded=u_emb)


def row_step_nonautonomous(sys: OdeSystem, tab: RowTableau, t: float,
                           u: np.ndarray, h: float, T: np.ndarray,
                           d: np.ndarray | None = None,
                           store: FactorizationStore | None = None,
                           jac_stamp: int = 0) -> StepOutcome:
    """Direct step with explicit time dependence kept in the formulas.

    Stage i evaluates f at the shifted time t + (sum of its alpha row) * h
    and the right-hand side gains h^2 * (gamma row sum) * d, d being the
    time partial of f at the step start. Equivalent to stepping the
    autonomized system; provided so the shortcut is testable against it.
    """
    if store is None:
        store = FactorizationStore()
    if d is None:
        d = time_partial(sys, t, u)
    s = tab.stages
    u = np.asarray(u)
    K = np.zeros((s, u.size), dtype=_work_dtype(u))
    alpha_rs = tab.alpha.sum(axis=1)
    gamma_rs = tab.gamma.sum(axis=1)    # includes the diagonal
    fac0 = store.counters.factorizations
    for i in range(s):
        ui = u + tab.alpha[i, :i] @ K[:i]
        rhs = h * np.asarray(sys.f(t + alpha_rs[i] * h, ui), dtype=K.dtype)
        store.counters.f_evals += 1
        if i > 0:
            rhs = rhs + h * (T @ (tab.gamma[i, :i] @ K[:i]))
        rhs = rhs + (h * h * gamma_rs[i]) * np.asarray(d, dtype=K.dtype)
        fac = store.get(T, h, tab.gamma[i, i], jac_stamp, DIRECT)
        K[i] = store.solve(fac, rhs)
    u_next = u + tab.b @ K
    _check_finite(u_next, t)
    u_emb = u + tab.b_hat @ K if tab.b_hat is not None else None
    return StepOutcome(u_next=u_next, stages=K, mode=DIRECT,
                       factorizations_used=store.counters.factorizations - fac0,
                       f_evals=s, u_embedded=u_emb)


def weighted_error(u_new: np.ndarray, u_other: np.ndarray, atol: float,
                   rtol: float) -> float:
    """RMS of the difference scaled by atol + rtol*|component| of the new
    state. Values <= 1 mean the difference is within tolerance."""
    w = atol + rtol * np.abs(u_new)
    return float(np.sqrt(np.mean(np.abs((u_new - u_other) / w) ** 2)))


def estimate_error(out: StepOutcome, mode: str,
                   aux: tuple[StepOutcome, StepOutcome] | None = None,
                   atol: float = 1.0e-6, rtol: float = 1.0e-6,
                   p_hat: int | None = None) -> float:
    """Normalized local error of a step; <= 1 means acceptable.

    Embedded mode measures the gap to the lower-order solution carried by
    the step itself. Richardson mode needs aux = (first half step, second
    half step) over the same interval and scales the full-vs-halved gap by
    1/(2^p_hat - 1).
    """
    if mode == EMBEDDED:
        if out.u_embedded is None:
            raise ValueError("step carries no embedded solution")
        return weighted_error(out.u_next, out.u_embedded, atol, rtol)
    if mode == RICHARDSON:
        if aux is None or len(aux) != 2:
            raise ValueError("richardson estimation needs the two half steps")
        if p_hat is None:
            raise ValueError("richardson estimation needs the order p_hat")
        u_fine = aux[1].u_next
        return weighted_error(u_fine, out.u_next, atol, rtol) / (2.0 ** p_hat - 1.0)
    raise ValueError(f"unknown error mode {mode!r}")


@dataclass(frozen=True)
class StepProposal:
    h_new: float
    accept: bool


def propose_step(err: float, h: float, p_hat: int) -> StepProposal:
    """Acceptance decision and next step size from a normalized error.

    The growth and shrink factors are clamped to [0.2, 5]; a vanishing
    error maps straight to the upper clamp.
    """
    accept = err <= 1.0
    if err == 0.0:
        return StepProposal(h_new=5.0 * h, accept=True)
    factor = 0.9 * err ** (-1.0 / (p_hat + 1))
    return StepProposal(h_new=h * min(5.0, max(0.2, factor)), accept=accept)


@dataclass(frozen=True)
class ControlSettings:
    """Driver configuration; None fields get span-relative defaults."""

    atol: float = 1.0e-6
    rtol: float = 1.0e-6
    h0: float | None = None
    h_min: float | None = None
    max_steps: int = 100_000
    error_mode: str = EMBEDDED
    jacobian: object | None = None      # strategy override, else sys.jacobian
    mode: str = TRANSFORMED
    fixed_h: float | None = None


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray                  # row k is the state at times[k]
    accepted: int
    rejected: int
    jacobian_refreshes: int
    factorizations: int
    stage_solves: int
    f_evals: int


class _Run:
    """Shared per-run machinery: jacobian handling and singular recovery."""

    def __init__(self, work: OdeSystem, tab, mode: str, richardson: bool):
        self.work = work
        self.tab = tab
        self.mode = mode
        self.richardson = richardson
        self.store = FactorizationStore()
        self.cache = JacobianCache(work.jacobian)

    def attempt(self, t: float, u: np.ndarray, h: float):
        """One trial advance; returns (outcome, half-step outcomes or None).

        A singular stage matrix is retried once with a forced Jacobian
        refresh, then becomes fatal.
        """
        for attempt in range(2):
            T = eval_jacobian(self.work, t, u, self.cache)
            try:
                out = row_step(self.work, self.tab, t, u, h, T,
                               mode=self.mode, store=self.store,
                               jac_stamp=self.cache.stamp)
                if not self.richardson:
                    return out, None
                half = 0.5 * h
                o1 = row_step(self.work, self.tab, t, u, half, T,
                              mode=self.mode, store=self.store,
                              jac_stamp=self.cache.stamp)
                o2 = row_step(self.work, self.tab, t + half, o1.u_next, half,
                              T, mode=self.mode, store=self.store,
                              jac_stamp=self.cache.stamp)
                return out, (o1, o2)
            except SingularMatrixError:
                if attempt == 1:
                    raise IntegrationFailure(
                        f"stage matrix singular at t={t} even after a "
                        "Jacobian refresh", t_reached=t, state=np.array(u))
                self.cache.matrix = None    # force the refresh
        raise AssertionError("unreachable")


def _prepare(sys: OdeSystem, method, ctrl: ControlSettings):
    if isinstance(method, str):
        method = get_method(method)
    work = with_strategy(sys, ctrl.jacobian) if ctrl.jacobian is not None else sys
    strip = not work.autonomous
    if strip:
        work = autonomize(work)
    if isinstance(method, TransformedTableau):
        tab, mode, hat = method, TRANSFORMED, method.m_hat
    elif isinstance(method, RowTableau):
        if ctrl.mode not in (DIRECT, TRANSFORMED):
            raise ValueError(f"unknown stage form {ctrl.mode!r}")
        mode = ctrl.mode
        tab = method if mode == DIRECT else transform(method)
        hat = method.b_hat
    else:
        raise TypeError(f"cannot step a {type(method).__name__}")
    q = method.embedded_order if method.embedded_order is not None else method.order
    return work, strip, method, tab, mode, hat, q


def integrate(sys: OdeSystem, method, ctrl: ControlSettings = ControlSettings()
              ) -> Trajectory:
    """Integrate over sys.t_span with the given one-step method.

    method is a tableau (either form) or a built-in method name. With
    ctrl.fixed_h set every step is accepted; otherwise the step size adapts
    to hold the weighted error estimate at one, using embedded weights or
    step doubling per ctrl.error_mode. Systems with explicit time
    dependence are integrated in autonomized form and reported in their
    original coordinates.
    """
    if ctrl.error_mode not in (EMBEDDED, RICHARDSON):
        raise ValueError(f"unknown error mode {ctrl.error_mode!r}")
    work, strip, method, tab, mode, hat, q = _prepare(sys, method, ctrl)
    t0, t_end = work.t_span
    span = t_end - t0
    richardson = ctrl.fixed_h is None and ctrl.error_mode == RICHARDSON
    if ctrl.fixed_h is None and ctrl.error_mode == EMBEDDED and hat is None:
        raise ValueError(
            f"method {method.name!r} carries no embedded weights; "
            "use richardson error control or a fixed step")
    run = _Run(work, tab, mode, richardson)
    if ctrl.fixed_h is not None:
        times, states, accepted = _drive_fixed(run, t0, t_end, ctrl)
        rejected = 0
    else:
        times, states, accepted, rejected = _drive_adaptive(
            run, t0, t_end, span, ctrl, q)
    states_arr = np.vstack(states)
    if strip:
        states_arr = states_arr[:, :-1]     # drop the appended clock
    c = run.store.counters
    return Trajectory(times=np.array(times), states=states_arr,
                      accepted=accepted, rejected=rejected,
                      jacobian_refreshes=run.cache.refreshes,
                      factorizations=c.factorizations,
                      stage_solves=c.stage_solves, f_evals=c.f_evals)


def _fixed_grid(t0: float, t_end: float, h: float) -> list[tuple[float, float]]:
    """(t, h) pairs covering [t0, t_end] with steps of h.

    When the span is an integer multiple of h (to rounding) every step gets
    the identical h so factorization reuse is never broken by the last
    step; otherwise the final step is truncated to land on t_end.
    """
    span = t_end - t0
    ratio = span / h
    n = round(ratio)
    if n >= 1 and abs(ratio - n) <= 1.0e-9 * max(1.0, abs(ratio)):
        return [(t0 + k * h, h) for k in range(n)]
    plan = []
    t = t0
    while t_end - t > 1.0e-12 * span:
        step = min(h, t_end - t)
        plan.append((t, step))
        t += step
    return plan


def _drive_fixed(run: _Run, t0, t_end, ctrl):
    if ctrl.fixed_h <= 0.0:
        raise ValueError("fixed_h must be positive")
    plan = _fixed_grid(t0, t_end, ctrl.fixed_h)
    if len(plan) > ctrl.max_steps:
        raise ValueError(f"{len(plan)} steps exceed max_steps={ctrl.max_steps}")
    u = np.array(run.work.u0, dtype=_work_dtype(run.work.u0))
    times, states = [t0], [u.copy()]
    for k, (t, h) in enumerate(plan):
        try:
            out, _ = run.attempt(t, u, h)
            u_next = out.u_next
        except StepFailure as exc:
            raise IntegrationFailure(
                f"fixed step failed at t={t}: {exc}", t_reached=t,
                state=u.copy()) from exc
        run.cache.notify_accept(t, u)
        u = u_next
        t_new = t_end if k == len(plan) - 1 else t + h
        times.append(t_new)
        states.append(u.copy())
    return times, states, len(plan)


def _drive_adaptive(run: _Run, t0, t_end, span, ctrl, q):
    h = ctrl.h0 if ctrl.h0 is not None else span / 100.0
    h_min = ctrl.h_min if ctrl.h_min is not None else span * 1.0e-12
    if h <= 0.0:
        raise ValueError("h0 must be positive")
    u = np.array(run.work.u0, dtype=_work_dtype(run.work.u0))
    t = t0
    times, states = [t0], [u.copy()]
    accepted = rejected = 0
    attempts = 0
    mode = RICHARDSON if run.richardson else EMBEDDED
    while t_end - t > 1.0e-12 * span:
        if attempts >= ctrl.max_steps:
            raise IntegrationFailure(
                f"step budget {ctrl.max_steps} exhausted at t={t}",
                t_reached=t, state=u.copy())
        attempts += 1
        remaining = t_end - t
        h_step = remaining if remaining <= h * (1.0 + 1.0e-9) else h
        try:
            out, aux = run.attempt(t, u, h_step)
        except StepFailure:
            rejected += 1
            run.cache.notify_reject()
            h = 0.5 * h_step
            if h < h_min:
                raise IntegrationFailure(
                    f"step size underflow at t={t}", t_reached=t,
                    state=u.copy())
            continue
        err = estimate_error(out, mode, aux, ctrl.atol, ctrl.rtol, p_hat=q)
        # under step doubling the two-half-step solution is the better one
        u_new = aux[1].u_next if run.richardson else out.u_next
        prop = propose_step(err, h_step, q)
        h = prop.h_new
        if prop.accept:
            run.cache.notify_accept(t, u)
            accepted += 1
            t = t_end if h_step == remaining else t + h_step
            u = u_new
            times.append(t)
            states.append(u.copy())
        else:
            rejected += 1
            run.cache.notify_reject()
            if h < h_min:
                raise IntegrationFailure(
                    f"step size underflow at t={t}", t_reached=t,
                    state=u.copy())
    return times, states, accepted, rejected


def fixed_run(sys: OdeSystem, method, n_steps: int,
              jacobian: object | None = None, mode: str = TRANSFORMED,
              error_mode: str = EMBEDDED) -> Trajectory:
    """Fixed grid of n_steps equal steps across sys.t_span."""
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    t0, t_end = sys.t_span
    h = (t_end - t0) / n_steps
    ctrl = ControlSettings(fixed_h=h, jacobian=jacobian, mode=mode,
                           error_mode=error_mode,
                           max_steps=max(100_000, n_steps))
    return integrate(sys, method, ctrl)


@dataclass(frozen=True)
class ExtrapolationTable:
    """Triangular Aitken-Neville table of final states.

    entry(j, 1) is the base scheme run with n_steps[j-1] equal steps;
    entry(j, k) eliminates error terms up to order k-1, so column k
    converges at order k in the underlying step size.
    """

    base_steps: int
    n_steps: tuple[int, ...]
    entries: tuple[tuple[np.ndarray, ...], ...]

    @property
    def columns(self) -> int:
        return len(self.n_steps)

    def entry(self, j: int, k: int) -> np.ndarray:
        if not (1 <= k <= j <= self.columns):
            raise IndexError(f"need 1 <= k <= j <= {self.columns}, "
                             f"got j={j}, k={k}")
        return self.entries[j - 1][k - 1]

    def diagonal(self) -> tuple[np.ndarray, ...]:
        return tuple(self.entries[j][j] for j in range(self.columns))


def extrapolate_lie(sys: OdeSystem, u0: np.ndarray | None = None,
                    t0: float | None = None, t_end: float | None = None,
                    base_steps: int = 2, columns: int = 3,
                    jacobian: object | None = None) -> ExtrapolationTable:
    """Extrapolate linearly implicit Euler over the whole interval.

    u0, t0, t_end default to the system's own initial data and span. Row j
    comes from a fixed run with j*base_steps steps; the harmonic ratios
    make the first elimination exact two-point extrapolation:
    entry(2, 2) == 2*entry(2, 1) - entry(1, 1).
    """
    if base_steps < 1 or not (1 <= columns <= 4):
        raise ValueError("need base_steps >= 1 and 1 <= columns <= 4")
    if u0 is not None or t0 is not None or t_end is not None:
        span = (t0 if t0 is not None else sys.t_span[0],
                t_end if t_end is not None else sys.t_span[1])
        sys = replace(sys, t_span=span,
                      u0=np.asarray(u0) if u0 is not None else sys.u0)
    lie = get_method("LIE1")
    ns = tuple(j * base_steps for j in range(1, columns + 1))
    rows: list[list[np.ndarray]] = []
    for j, n in enumerate(ns, start=1):
        traj = fixed_run(sys, lie, n, jacobian=jacobian)
        row = [np.array(traj.states[-1])]
        for k in range(2, j + 1):
            ratio = ns[j - 1] / ns[j - k]
            prev_row = rows[j - 2]
            row.append(row[k - 2] + (row[k - 2] - prev_row[k - 2]) / (ratio - 1.0))
        rows.append(row)
    return ExtrapolationTable(base_steps=base_steps, n_steps=ns,
                              entries=tuple(tuple(r) for r in rows))
