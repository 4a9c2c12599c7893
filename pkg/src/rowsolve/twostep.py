"""Two-step linearly implicit methods sharing one factorization per step.

Both families keep a single diagonal parameter, so every stage of a step
reuses the factorization of I - h*gamma*T. The W-type family propagates
derivative-like stage vectors and updates the state with weights over the
current and previous stage set; the peer family propagates a full set of
state-like stage values and needs no separate update.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (IntegrationFailure, PoleError, SingularMatrixError,
                     StepFailure, StructuralError)
from .linsolve import DIRECT, FactorizationStore
from .onestep import Trajectory, fixed_run, row_step
from .problems import (JacobianCache, OdeSystem, autonomize, eval_jacobian,
                       with_strategy)
from .tableaus import (PeerTableau, RowTableau, TwoStepWTableau, get_method,
                       order_condition_residuals)


@dataclass(frozen=True)
class TwoStepState:
    """Carrier between steps: what the previous step left behind.

    For W-type methods prev_stage_values holds derivative-like vectors; for
    peer methods it holds the stage states of the window ending at t.
    """

    prev_stage_values: np.ndarray       # row j is stage j of the last step
    prev_state: np.ndarray
    h_prev: float
    t: float


def from_row(rt: RowTableau, name: str | None = None) -> TwoStepWTableau:
    """Embed a one-step method with a single diagonal into two-step form.

    All previous-step couplings and weights are zero, so stepping the
    result reproduces the one-step method with stage vectors scaled by h.
    """
    if not rt.single_gamma:
        raise StructuralError(
            f"{rt.name}: embedding needs one shared diagonal entry")
    s = rt.stages
    return TwoStepWTableau(
        name=name if name is not None else rt.name + "-2step",
        gamma=float(rt.gamma[0, 0]),
        a_prev=np.zeros((s, s)),
        a_cur=rt.alpha.copy(),
        g_prev=np.zeros((s, s)),
        g_cur=np.tril(rt.gamma, -1),
        b=rt.b.copy(),
        v=np.zeros(s),
        order=rt.order)


def _attained_order(rt: RowTableau) -> int:
    r = np.abs(order_condition_residuals(rt))
    tol = 1.0e-10
    if r[0] > tol:
        return 0
    if r[1] > tol:
        return 1
    if r[2] > tol or r[3] > tol:
        return 2
    return 3


def row_reduction(tsw: TwoStepWTableau, name: str | None = None) -> RowTableau:
    """The one-step method obtained by dropping all previous-step terms.

    Used to start a two-step run; its order is whatever the current-step
    coefficients alone achieve, usually below the two-step order.
    """
    gamma = tsw.g_cur + tsw.gamma * np.eye(tsw.stages)
    rt = RowTableau(name=name if name is not None else tsw.name + "-startup",
                    alpha=tsw.a_cur.copy(), gamma=gamma, b=tsw.b.copy(),
                    order=1)
    return replace(rt, order=_attained_order(rt))


def tsw_step(sys: OdeSystem, tab: TwoStepWTableau, st: TwoStepState,
             tn: float, h: float, T: np.ndarray,
             store: FactorizationStore | None = None,
             jac_stamp: int = 0) -> tuple[TwoStepState, np.ndarray]:
    """One W-type step from (tn, st.prev_state) by h.

    Returns the carrier for the next step and the new state. All stages
    solve against the same factored matrix I - h*gamma*T.
    """
    if store is None:
        store = FactorizationStore()
    prev = np.asarray(st.prev_stage_values)
    u = np.asarray(st.prev_state)
    s = tab.stages
    if prev.shape != (s, u.size):
        raise ValueError(f"expected {s} previous stage vectors of size "
                         f"{u.size}, got shape {prev.shape}")
    U = np.zeros((s, u.size), dtype=np.result_type(u.dtype, np.float64))
    fac = store.get(T, h, tab.gamma, jac_stamp, DIRECT)
    for i in range(s):
        arg = u + h * (tab.a_prev[i] @ prev) + h * (tab.a_cur[i, :i] @ U[:i])
        rhs = np.asarray(sys.f(tn, arg), dtype=U.dtype)
        store.counters.f_evals += 1
        coupling = tab.g_prev[i] @ prev + tab.g_cur[i, :i] @ U[:i]
        rhs = rhs + h * (T @ coupling)
        U[i] = store.solve(fac, rhs)
    u_next = u + h * (tab.b @ U + tab.v @ prev)
    if not np.all(np.isfinite(u_next)):
        raise StepFailure(f"non-finite state produced by step at t={tn}")
    nxt = TwoStepState(prev_stage_values=U, prev_state=u_next, h_prev=h,
                       t=tn + h)
    return nxt, u_next


def peer_step(sys: OdeSystem, tab: PeerTableau, st: TwoStepState,
              tn: float, h: float, T: np.ndarray,
              store: FactorizationStore | None = None,
              jac_stamp: int = 0) -> tuple[TwoStepState, np.ndarray]:
    """Advance a full window of peer stage values by h.

    st holds states at tn + (nodes - 1)*h; the result approximates states
    at tn + nodes*h, the last of which is the step's state. One
    factorization of I - h*gamma*T serves all stages.
    """
    if store is None:
        store = FactorizationStore()
    prev = np.asarray(st.prev_stage_values)
    s = tab.stages
    if prev.ndim != 2 or prev.shape[0] != s:
        raise ValueError(f"expected {s} previous stage vectors, got shape "
                         f"{prev.shape}")
    U = np.zeros_like(prev, dtype=np.result_type(prev.dtype, np.float64))
    fac = store.get(T, h, tab.gamma, jac_stamp, DIRECT)
    f_prev = np.empty_like(U)
    for j in range(s):
        f_prev[j] = np.asarray(sys.f(tn + (tab.nodes[j] - 1.0) * h, prev[j]),
                               dtype=U.dtype)
        store.counters.f_evals += 1
    resid = f_prev - prev @ T.T         # rows F(U_j) - T U_j
    for i in range(s):
        rhs = tab.b_mat[i] @ prev + h * (tab.a_mat[i] @ resid)
        if i > 0:
            rhs = rhs + h * (T @ (tab.g_mat[i, :i] @ U[:i]))
        U[i] = store.solve(fac, rhs)
    if not np.all(np.isfinite(U)):
        raise StepFailure(f"non-finite stages produced by step at t={tn}")
    nxt = TwoStepState(prev_stage_values=U, prev_state=U[-1], h_prev=h,
                       t=tn + h)
    return nxt, U[-1]


def peer_transfer_matrix(tab: PeerTableau, z: complex) -> np.ndarray:
    """Stage propagation matrix on the scalar test equation.

    Solves ((1 - gamma*z) I - z G) M = B by forward substitution; the
    spectral radius of M governs zero-stability and stiff damping.
    """
    den = 1.0 - tab.gamma * z
    if den == 0.0:
        raise PoleError(f"z={z} is the stage pole 1/gamma")
    s = tab.stages
    M = np.zeros((s, s), dtype=complex)
    for i in range(s):
        acc = tab.b_mat[i].astype(complex)
        if i > 0:
            acc = acc + z * (tab.g_mat[i, :i] @ M[:i])
        M[i] = acc / den
    return M


def peer_spectral_radius(tab: PeerTableau, z: complex) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(peer_transfer_matrix(tab, z)))))


def _startup_tsw(work, tab, t0, u0, h, T, store, stamp) -> TwoStepState:
    # one step of the reduction method; its K vectors over h seed the window
    out = row_step(work, row_reduction(tab), t0, u0, h, T, mode=DIRECT,
                   store=store, jac_stamp=stamp)
    return TwoStepState(prev_stage_values=out.stages / h, prev_state=out.u_next,
                        h_prev=h, t=t0 + h)


def _startup_peer(work, tab, t0, u0, h) -> tuple[TwoStepState, list[Trajectory]]:
    # sample a fine implicit Euler run at the window nodes; work already
    # carries the resolved jacobian strategy
    lie = get_method("LIE1")
    stages = np.empty((tab.stages, u0.size), dtype=u0.dtype)
    runs = []
    for j, c in enumerate(tab.nodes):
        if c <= 0.0:
            stages[j] = u0
            continue
        sub = replace(work, t_span=(t0, t0 + c * h))
        traj = fixed_run(sub, lie, max(1, round(100 * c)))
        stages[j] = traj.states[-1]
        runs.append(traj)
    return TwoStepState(prev_stage_values=stages, prev_state=stages[-1],
                        h_prev=h, t=t0 + h), runs


def integrate_twostep(sys: OdeSystem, method, n_steps: int,
                      jacobian: object | None = None,
                      startup: TwoStepState | None = None) -> Trajectory:
    """Fixed-grid integration over sys.t_span with a two-step method.

    By default W-type methods start from one step of their one-step
    reduction and peer methods from a finely resolved implicit Euler sweep
    across the first window; a caller-supplied startup carrier (describing
    the window ending at t0) replaces that and makes every one of the
    n_steps windows a genuine two-step one. Systems with explicit time
    dependence are autonomized.
    """
    if isinstance(method, str):
        method = get_method(method)
    if not isinstance(method, (TwoStepWTableau, PeerTableau)):
        raise TypeError(f"cannot step a {type(method).__name__}")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    work = with_strategy(sys, jacobian) if jacobian is not None else sys
    strip = not work.autonomous
    if strip:
        work = autonomize(work)
    t0, t_end = work.t_span
    h = (t_end - t0) / n_steps
    store = FactorizationStore()
    cache = JacobianCache(work.jacobian)
    u0 = np.array(work.u0, dtype=np.result_type(np.asarray(work.u0).dtype,
                                                np.float64))
    times = [t0]
    states = [u0.copy()]
    extra = dict(factorizations=0, stage_solves=0, f_evals=0, refreshes=0)
    is_w = isinstance(method, TwoStepWTableau)

    def attempt(fn, t, u_probe):
        # a singular stage matrix is retried once after a forced refresh
        for k in range(2):
            T = eval_jacobian(work, t, u_probe, cache)
            try:
                return fn(T)
            except SingularMatrixError:
                if k == 1:
                    raise IntegrationFailure(
                        f"stage matrix singular at t={t} even after a "
                        "Jacobian refresh", t_reached=t, state=np.array(u_probe))
                cache.matrix = None
        raise AssertionError("unreachable")

    try:
        if startup is not None:
            win = startup
            first_main = 0
        elif is_w:
            win = attempt(lambda T: _startup_tsw(work, method, t0, u0, h, T,
                                                 store, cache.stamp), t0, u0)
            cache.notify_accept(t0, u0)
            times.append(t_end if n_steps == 1 else win.t)
            states.append(win.prev_state.copy())
            first_main = 1
        else:
            win, startup_runs = _startup_peer(work, method, t0, u0, h)
            for st in startup_runs:
                extra["factorizations"] += st.factorizations
                extra["stage_solves"] += st.stage_solves
                extra["f_evals"] += st.f_evals
                extra["refreshes"] += st.jacobian_refreshes
            times.append(t_end if n_steps == 1 else win.t)
            states.append(win.prev_state.copy())
            first_main = 1
        for k in range(first_main, n_steps):
            t = t0 + k * h
            probe = win.prev_state

            def step(T, t=t, win=win):
                if is_w:
                    return tsw_step(work, method, win, t, h, T,
                                    store=store, jac_stamp=cache.stamp)
                return peer_step(work, method, win, t, h, T,
                                 store=store, jac_stamp=cache.stamp)

            win, u_next = attempt(step, t, probe)
            cache.notify_accept(t, probe)
            times.append(t_end if k == n_steps - 1 else t + h)
            states.append(u_next.copy())
    except StepFailure as exc:
        raise IntegrationFailure(f"fixed step failed: {exc}",
                                 t_reached=times[-1],
                                 state=states[-1]) from exc

    states_arr = np.vstack(states)
    if strip:
        states_arr = states_arr[:, :-1]
    c = store.counters
    return Trajectory(times=np.array(times), states=states_arr,
                      accepted=n_steps, rejected=0,
                      jacobian_refreshes=cache.refreshes + extra["refreshes"],
                      factorizations=c.factorizations + extra["factorizations"],
                      stage_solves=c.stage_solves + extra["stage_solves"],
                      f_evals=c.f_evals + extra["f_evals"])
