"""Fixed-step convergence studies against known exact solutions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .onestep import fixed_run
from .problems import OdeSystem
from .tableaus import (PeerTableau, RowTableau, TransformedTableau,
                       TwoStepWTableau, get_method)
from .twostep import integrate_twostep

DEFAULT_N_LIST = (8, 16, 32, 64, 128, 256)
FIT_POINTS = 4


@dataclass(frozen=True)
class OrderMeasurement:
    """Errors over a sequence of step sizes and the resulting slopes.

    orders[i] compares runs i and i+1 (first entry nan); slope is a
    least-squares fit over the finest points, where the asymptotic rate
    has settled.
    """

    method: str
    hs: np.ndarray
    errors: np.ndarray
    orders: np.ndarray
    slope: float


def final_error(sys: OdeSystem, traj_states: np.ndarray) -> float:
    if sys.exact is None:
        raise ValueError(f"{sys.name}: no exact solution to compare against")
    ref = np.asarray(sys.exact(sys.t_span[1]))
    return float(np.max(np.abs(traj_states[-1] - ref)))


def fixed_step_errors(sys: OdeSystem, method, n_list=DEFAULT_N_LIST,
                      jacobian: object | None = None,
                      mode: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Error at t_end for each step count, routed to the matching engine."""
    if isinstance(method, str):
        method = get_method(method)
    t0, t_end = sys.t_span
    hs, errors = [], []
    for n in n_list:
        if isinstance(method, (RowTableau, TransformedTableau)):
            kwargs = {} if mode is None else {"mode": mode}
            traj = fixed_run(sys, method, n, jacobian=jacobian, **kwargs)
        elif isinstance(method, (TwoStepWTableau, PeerTableau)):
            traj = integrate_twostep(sys, method, n, jacobian=jacobian)
        else:
            raise TypeError(f"cannot step a {type(method).__name__}")
        hs.append((t_end - t0) / n)
        errors.append(final_error(sys, traj.states))
    return np.array(hs), np.array(errors)


def observed_orders(hs: np.ndarray, errors: np.ndarray) -> np.ndarray:
    """Pairwise order estimates; nan leads the array to align with hs."""
    hs = np.asarray(hs, dtype=float)
    errors = np.asarray(errors, dtype=float)
    orders = np.full(len(hs), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])
    orders[1:] = ratio
    return orders


def fit_slope(hs: np.ndarray, errors: np.ndarray,
              points: int = FIT_POINTS) -> float:
    """Least-squares slope of log error against log h over the finest
    points (pre-asymptotic coarse runs would otherwise bias it)."""
    hs = np.asarray(hs, dtype=float)[-points:]
    errors = np.asarray(errors, dtype=float)[-points:]
    keep = np.isfinite(errors) & (errors > 0.0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs[keep]), np.log(errors[keep]), 1)[0])


def measure_order(sys: OdeSystem, method, n_list=DEFAULT_N_LIST,
                  jacobian: object | None = None,
                  mode: str | None = None) -> OrderMeasurement:
    if isinstance(method, str):
        method = get_method(method)
    hs, errors = fixed_step_errors(sys, method, n_list, jacobian=jacobian,
                                   mode=mode)
    return OrderMeasurement(method=method.name, hs=hs, errors=errors,
                            orders=observed_orders(hs, errors),
                            slope=fit_slope(hs, errors))
