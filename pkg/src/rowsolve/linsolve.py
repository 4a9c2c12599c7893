"""Stage matrix assembly, factorization, and the reuse contract.

Every implicit stage of a step solves a system with one of two equivalent
matrices: the direct assembly (I - h gamma T) or the transformed assembly
(I/(h gamma) - T). They differ by the scalar factor h gamma only. A
factorization is cached with the product h*gamma, the Jacobian stamp, and
the assembly form; reuse is valid exactly when all three match. With equal
diagonal gamma one factorization therefore serves all stages of a step.

LU with partial pivoting (LAPACK via scipy). An exactly zero pivot raises
SingularMatrixError with the pivot index rather than producing infs.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import SingularMatrixError

DIRECT = "direct"
TRANSFORMED = "transformed"


def stage_matrix(T: np.ndarray, h: float, gamma: float,
                 form: str = TRANSFORMED) -> np.ndarray:
    """Assemble the stage matrix for one implicit weight gamma."""
    if h <= 0.0:
        raise ValueError("h must be positive")
    if gamma == 0.0:
        raise ValueError("gamma must be nonzero")
    T = np.asarray(T)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError(f"T must be square, got shape {T.shape}")
    eye = np.eye(T.shape[0], dtype=T.dtype)
    if form == DIRECT:
        return eye - (h * gamma) * T
    if form == TRANSFORMED:
        return eye / (h * gamma) - T
    raise ValueError(f"unknown assembly form '{form}'")


@dataclass
class StageMatrixFactorization:
    """LU factors plus the identity of what they factored."""

    lu: np.ndarray
    piv: np.ndarray
    h_gamma: float
    jacobian_stamp: int
    form: str
    dim: int

    def matches(self, h: float, gamma: float, jacobian_stamp: int,
                form: str = TRANSFORMED) -> bool:
        """Reuse is valid iff h*gamma, the stamp, and the form all match."""
        return (self.h_gamma == h * gamma
                and self.jacobian_stamp == jacobian_stamp
                and self.form == form)


def factor_stage_matrix(T: np.ndarray, h: float, gamma: float,
                        jacobian_stamp: int = 0,
                        form: str = TRANSFORMED) -> StageMatrixFactorization:
    mat = stage_matrix(T, h, gamma, form)
    with warnings.catch_warnings():
        # LAPACK flags exact singularity with a warning and a zero U diagonal;
        # turn that into a typed error instead
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(mat)
    diag = np.diag(lu)
    zeros = np.nonzero(diag == 0.0)[0]
    if zeros.size:
        raise SingularMatrixError(
            f"stage matrix is singular (pivot {int(zeros[0])} of {mat.shape[0]})",
            pivot_index=int(zeros[0]))
    return StageMatrixFactorization(lu=lu, piv=piv, h_gamma=h * gamma,
                                    jacobian_stamp=jacobian_stamp, form=form,
                                    dim=mat.shape[0])


def solve_stage(fac: StageMatrixFactorization, rhs: np.ndarray) -> np.ndarray:
    """One triangular solve pair against a cached factorization.

    Non-finite right-hand sides are passed through rather than rejected
    here: the resulting non-finite stage surfaces as a failed step, which
    the adaptive driver treats as a rejection instead of a crash.
    """
    rhs = np.asarray(rhs)
    if rhs.shape[0] != fac.dim:
        raise ValueError(f"rhs has leading dim {rhs.shape[0]}, expected {fac.dim}")
    return lu_solve((fac.lu, fac.piv), rhs, check_finite=False)


@dataclass
class SolveCounters:
    """Instrumentation shared by the steppers and the drivers."""

    factorizations: int = 0
    stage_solves: int = 0
    f_evals: int = 0
    jacobian_refreshes: int = 0


@dataclass
class FactorizationStore:
    """Small keyed cache honoring the reuse contract.

    Entries are keyed by (h*gamma, stamp, form). The store is cleared
    whenever a new stamp shows up, since factorizations of an outdated
    matrix can never be reused.
    """

    counters: SolveCounters = field(default_factory=SolveCounters)
    _entries: dict = field(default_factory=dict)
    _stamp: int | None = None

    def get(self, T: np.ndarray, h: float, gamma: float, stamp: int,
            form: str = TRANSFORMED) -> StageMatrixFactorization:
        if stamp != self._stamp:
            self._entries.clear()
            self._stamp = stamp
        key = (h * gamma, form)
        fac = self._entries.get(key)
        if fac is None or not fac.matches(h, gamma, stamp, form):
            fac = factor_stage_matrix(T, h, gamma, stamp, form)
            self.counters.factorizations += 1
            self._entries[key] = fac
        return fac

    def solve(self, fac: StageMatrixFactorization, rhs: np.ndarray) -> np.ndarray:
        self.counters.stage_solves += 1
        return solve_stage(fac, rhs)
