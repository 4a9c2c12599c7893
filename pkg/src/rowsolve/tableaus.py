"""Coefficient tableaus for linearly implicit one-step and two-step methods.

A one-step method is stored in its classic form (strictly lower alpha, lower
triangular gamma with nonzero diagonal, weights b) or in the transformed form
that the production stepper consumes (a, c, m, gamma diagonal). The two forms
are algebraically equivalent; ``transform`` / ``inverse_transform`` convert
between them.

The built-in methods at the bottom are not copied from anywhere: each is
derived in place from its order and stability conditions, and the test suite
re-checks both the condition residuals and the measured convergence order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .errors import StructuralError

_ATOL = 1e-12


def _frozen_array(values, shape=None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None and arr.shape != shape:
        raise StructuralError(f"expected shape {shape}, got {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RowTableau:
    """One-step linearly implicit method in classic form.

    alpha is strictly lower triangular (explicit stage combinations), gamma is
    lower triangular with the implicit weights on its diagonal, b are the
    update weights. b_hat, when present, is a lower-order embedded weight
    vector used for error estimation.
    """

    name: str
    alpha: np.ndarray
    gamma: np.ndarray
    b: np.ndarray
    order: int
    b_hat: np.ndarray | None = None
    embedded_order: int | None = None

    def __post_init__(self):
        b = _frozen_array(self.b)
        if b.ndim != 1 or b.size == 0:
            raise StructuralError("b must be a nonempty vector")
        s = b.size
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "alpha", _frozen_array(self.alpha, (s, s)))
        object.__setattr__(self, "gamma", _frozen_array(self.gamma, (s, s)))
        if (self.b_hat is None) != (self.embedded_order is None):
            raise StructuralError("b_hat and embedded_order must be given together")
        if self.b_hat is not None:
            object.__setattr__(self, "b_hat", _frozen_array(self.b_hat, (s,)))

    @property
    def stages(self) -> int:
        return self.b.size

    @property
    def gamma_diag(self) -> np.ndarray:
        return np.diag(self.gamma)

    @property
    def single_gamma(self) -> bool:
        d = self.gamma_diag
        return bool(np.all(d == d[0]))


@dataclass(frozen=True)
class TransformedTableau:
    """One-step method in the form the stage solver consumes directly.

    Holds a = alpha gamma^-1, c = diag(1/gamma_ii) - gamma^-1 and
    m = b gamma^-1, plus the gamma diagonal. The stage recursion built on
    these coefficients needs no matrix-vector product with the Jacobian
    approximation on the right-hand side.
    """

    name: str
    a: np.ndarray
    c: np.ndarray
    m: np.ndarray
    gamma_diag: np.ndarray
    order: int
    m_hat: np.ndarray | None = None
    embedded_order: int | None = None

    def __post_init__(self):
        m = _frozen_array(self.m)
        if m.ndim != 1 or m.size == 0:
            raise StructuralError("m must be a nonempty vector")
        s = m.size
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "a", _frozen_array(self.a, (s, s)))
        object.__setattr__(self, "c", _frozen_array(self.c, (s, s)))
        object.__setattr__(self, "gamma_diag", _frozen_array(self.gamma_diag, (s,)))
        if self.m_hat is not None:
            object.__setattr__(self, "m_hat", _frozen_array(self.m_hat, (s,)))

    @property
    def stages(self) -> int:
        return self.m.size


@dataclass(frozen=True)
class TwoStepWTableau:
    """Two-step W-method: stage values from the previous step re-enter the
    current step through a_prev/g_prev and the update through v."""

    name: str
    gamma: float
    a_prev: np.ndarray
    a_cur: np.ndarray
    g_prev: np.ndarray
    g_cur: np.ndarray
    b: np.ndarray
    v: np.ndarray
    order: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise StructuralError("gamma must be positive")
        b = _frozen_array(self.b)
        s = b.size
        object.__setattr__(self, "b", b)
        for field in ("a_prev", "a_cur", "g_prev", "g_cur"):
            object.__setattr__(self, field, _frozen_array(getattr(self, field), (s, s)))
        object.__setattr__(self, "v", _frozen_array(self.v, (s,)))
        for field in ("a_cur", "g_cur"):
            mat = getattr(self, field)
            if np.any(np.triu(mat) != 0.0):
                raise StructuralError(f"{field} must be strictly lower triangular")

    @property
    def stages(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class PeerTableau:
    """Two-step peer method: all stage values carry the same accuracy; the
    last stage at the nodes' right end is the step result."""

    name: str
    gamma: float
    b_mat: np.ndarray
    a_mat: np.ndarray
    g_mat: np.ndarray
    nodes: np.ndarray
    order: int

    def __post_init__(self):
        if not self.gamma > 0:
            raise StructuralError("gamma must be positive")
        nodes = _frozen_array(self.nodes)
        s = nodes.size
        object.__setattr__(self, "nodes", nodes)
        for field in ("b_mat", "a_mat", "g_mat"):
            object.__setattr__(self, field, _frozen_array(getattr(self, field), (s, s)))
        if np.any(np.triu(self.g_mat) != 0.0):
            raise StructuralError("g_mat must be strictly lower triangular")
        row_sums = self.b_mat.sum(axis=1)
        if np.max(np.abs(row_sums - 1.0)) > 1e-10:
            raise StructuralError("every row of b_mat must sum to 1")
        if abs(nodes[-1] - 1.0) > _ATOL:
            raise StructuralError("last node must equal 1")

    @property
    def stages(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of structural validation of a RowTableau."""

    problems: tuple[str, ...]
    stiffly_accurate: bool
    single_gamma: bool

    @property
    def ok(self) -> bool:
        return not self.problems


def validate(t: RowTableau) -> ValidationReport:
    """Check the structural requirements of a classic tableau.

    Reports, rather than raises: a tableau with problems can still be
    inspected. The stiffly-accurate flag applies the defining condition
    literally (last alpha row plus last gamma row equals b, and the last
    alpha row sums to 1); for a single stage the row sum is 0, so one-stage
    methods always report False here.
    """
    problems = []
    s = t.stages
    for i in range(s):
        for j in range(i, s):
            if t.alpha[i, j] != 0.0:
                problems.append(f"alpha[{i},{j}] must be zero (not strictly lower)")
        for j in range(i + 1, s):
            if t.gamma[i, j] != 0.0:
                problems.append(f"gamma[{i},{j}] must be zero (not lower triangular)")
        if t.gamma[i, i] == 0.0:
            problems.append(f"gamma[{i},{i}] must be nonzero")
    if t.b_hat is not None and np.array_equal(t.b_hat, t.b):
        problems.append("b_hat must differ from b in at least one entry")

    last = s - 1
    stiff = (np.max(np.abs(t.alpha[last] + t.gamma[last] - t.b)) <= _ATOL
             and abs(t.alpha[last].sum() - 1.0) <= _ATOL)
    return ValidationReport(tuple(problems), bool(stiff), t.single_gamma)


def transform(t: RowTableau) -> TransformedTableau:
    """Convert a classic tableau to the solver-ready transformed form.

    Raises StructuralError when the tableau does not validate.
    """
    report = validate(t)
    if not report.ok:
        raise StructuralError("cannot transform invalid tableau: " + "; ".join(report.problems))
    s = t.stages
    gamma_inv = solve_triangular(t.gamma, np.eye(s), lower=True)
    a = t.alpha @ gamma_inv
    c = np.diag(1.0 / t.gamma_diag) - gamma_inv
    m = t.b @ gamma_inv
    m_hat = t.b_hat @ gamma_inv if t.b_hat is not None else None
    return TransformedTableau(name=t.name, a=a, c=c, m=m,
                              gamma_diag=t.gamma_diag.copy(), order=t.order,
                              m_hat=m_hat, embedded_order=t.embedded_order)


def inverse_transform(tt: TransformedTableau) -> RowTableau:
    """Recover the classic tableau from the transformed coefficients.

    The reconstructed inverse diag(1/gamma_ii) - c must be nonsingular; a
    zero on its diagonal (gamma entry zero, or a c diagonal entry colliding
    with 1/gamma_ii) raises StructuralError.
    """
    s = tt.stages
    if np.any(tt.gamma_diag == 0.0):
        raise StructuralError("gamma_diag entries must be nonzero")
    gamma_inv = np.diag(1.0 / tt.gamma_diag) - tt.c
    diag = np.diag(gamma_inv)
    zero = np.nonzero(diag == 0.0)[0]
    if zero.size:
        raise StructuralError(
            f"reconstructed coefficient inverse is singular at stage {int(zero[0])}")
    gamma = solve_triangular(gamma_inv, np.eye(s), lower=True)
    alpha = tt.a @ gamma
    b = tt.m @ gamma
    b_hat = tt.m_hat @ gamma if tt.m_hat is not None else None
    return RowTableau(name=tt.name, alpha=alpha, gamma=gamma, b=b,
                      order=tt.order, b_hat=b_hat, embedded_order=tt.embedded_order)


# --------------------------------------------------------------------------
# order-condition machinery used by the derivations and the tests

def order_condition_residuals(t: RowTableau, weights: np.ndarray | None = None) -> np.ndarray:
    """Residuals of the four order conditions through order 3.

    For weights w and coupling matrix B = alpha + gamma with row sums beta
    and alpha row sums ap:

        order 1:  sum w                    = 1
        order 2:  w . (B 1)                = 1/2
        order 3:  w . ap^2                 = 1/3
        order 3:  w . (B (B 1))            = 1/6

    Returns the four left-minus-right values.
    """
    w = t.b if weights is None else np.asarray(weights, dtype=float)
    big = t.alpha + t.gamma
    one = np.ones(t.stages)
    ap = t.alpha @ one
    return np.array([
        w @ one - 1.0,
        w @ (big @ one) - 0.5,
        w @ (ap ** 2) - 1.0 / 3.0,
        w @ (big @ (big @ one)) - 1.0 / 6.0,
    ])


def two_stage_third_order_gammas() -> np.ndarray:
    """The two diagonal values admitting a 2-stage method of linear order 3.

    For the single-gamma order-2 family the stability function has the
    denominator (1 - g z)^2 and a numerator of degree two, so linear order 3
    holds exactly when the z^3 coefficient of exp(z) (1 - g z)^2 vanishes.
    That coefficient is quadratic in g; it is assembled here by polynomial
    multiplication (no hand-expanded constants) and its two roots returned
    in increasing order.
    """
    exp_trunc = np.array([1.0, 1.0, 0.5, 1.0 / 6.0])  # exp(z) through z^3

    def z3_coeff(g: float) -> float:
        den = np.array([1.0, -2.0 * g, g * g])  # (1 - g z)^2
        return np.convolve(exp_trunc, den)[3]

    # z3_coeff is quadratic in g: recover its coefficients from three samples
    samples = np.array([0.0, 1.0, 2.0])
    vals = np.array([z3_coeff(g) for g in samples])
    quad = np.polyfit(samples, vals, 2)
    return np.sort(np.roots(quad))


def two_stage_family_member(g: float, alpha21: float = 1.0,
                            b2: float = 0.5) -> RowTableau:
    """A 2-stage single-gamma method of (at least) order 2 for diagonal g.

    b and alpha21 are free; the order-2 condition fixes the remaining
    coupling gamma21.
    """
    b = np.array([1.0 - b2, b2])
    beta21 = (0.5 - g) / b2  # order 2: g + b2 (alpha21 + gamma21) = 1/2
    gamma21 = beta21 - alpha21
    alpha = np.array([[0.0, 0.0], [alpha21, 0.0]])
    gamma = np.array([[g, 0.0], [gamma21, g]])
    return RowTableau(name=f"ROW2(g={g:.6g})", alpha=alpha, gamma=gamma,
                      b=b, order=2)


def _vanishing_limit_gamma() -> float:
    """Smaller root of the quadratic that makes the 2-stage order-2 family's
    stiff limit vanish (numerator z^2 coefficient g^2 - 2 g + 1/2 = 0)."""
    roots = np.sort(np.roots([1.0, -2.0, 0.5]))
    return float(roots[0])


def _derive_two_stage_lstable() -> RowTableau:
    """ROS2D: 2 stages, order 2, vanishing stiff limit.

    Choices: the smaller gamma root (1 - sqrt(2)/2), full explicit step
    alpha21 = 1, equal weights. The remaining coupling comes from the
    order-2 condition.
    """
    g = _vanishing_limit_gamma()
    member = two_stage_family_member(g, alpha21=1.0, b2=0.5)
    return RowTableau(name="ROS2D", alpha=member.alpha, gamma=member.gamma,
                      b=member.b, order=2,
                      b_hat=np.array([1.0, 0.0]), embedded_order=1)


def three_stage_third_order(g: float, name: str | None = None,
                            with_embedded: bool = False) -> RowTableau:
    """3-stage single-gamma method satisfying all four order-3 conditions.

    Free choices: b = [1/6, 1/6, 2/3], alpha row sums [0, 1, 1/2] with the
    third row split evenly, and second-row coupling sum 1/2. The remaining
    coupling sums then follow linearly from

        order 2:        b . (B 1)     = 1/2
        order 3 (web):  b . (B (B 1)) = 1/6

    where B = alpha + gamma. Works for any positive g; A-stability holds
    for g in a window around 1/2 and is checked by the stability tests for
    the shipped instance.
    """
    b = np.array([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0])
    alpha = np.array([[0.0, 0.0, 0.0],
                      [1.0, 0.0, 0.0],
                      [0.25, 0.25, 0.0]])
    beta21 = 0.5
    # b3 * beta32 * beta21 = 1/6 - g + g^2  (third-order condition on B^2)
    beta32 = (1.0 / 6.0 - g + g * g) / (b[2] * beta21)
    # b2 beta21 + b3 (beta31 + beta32) = 1/2 - g  (order-2 condition)
    beta31 = (0.5 - g - b[1] * beta21) / b[2] - beta32
    gamma = np.array([[g, 0.0, 0.0],
                      [beta21 - alpha[1, 0], g, 0.0],
                      [beta31 - alpha[2, 0], beta32 - alpha[2, 1], g]])
    kwargs = {}
    if with_embedded:
        # first-stage-only weights: order 2 exactly when g = 1/2
        kwargs = dict(b_hat=np.array([1.0, 0.0, 0.0]), embedded_order=2)
    return RowTableau(name=name or f"ROW3(g={g:.6g})", alpha=alpha,
                      gamma=gamma, b=b, order=3, **kwargs)


def _derive_three_stage_astable() -> RowTableau:
    return three_stage_third_order(0.5, name="ROW3N", with_embedded=True)


def _derive_lie() -> RowTableau:
    """Linearly implicit Euler: one stage, unit implicit weight."""
    return RowTableau(name="LIE1", alpha=np.zeros((1, 1)),
                      gamma=np.array([[1.0]]), b=np.array([1.0]), order=1)


def _derive_two_step_w() -> TwoStepWTableau:
    """TSW2: 2-stage two-step W-method of order 2 at nodes [0, 1].

    Conditions imposed, for stage nodes c and previous-step nodes c - 1:

      * stage argument exact for polynomials of degree <= 2:
          sum_j a_prev[i,j] + sum_{j<i} a_cur[i,j]                 = c_i
          sum_j a_prev[i,j](c_j - 1) + sum_{j<i} a_cur[i,j] c_j    = c_i^2/2
      * the Jacobian-coupling bracket vanishes through first order so the
        scheme keeps its order for an arbitrary coupling matrix:
          gamma + sum_j g_prev[i,j] + sum_{j<i} g_cur[i,j]                 = 0
          gamma c_i + sum_j g_prev[i,j](c_j - 1) + sum_{j<i} g_cur[i,j] c_j = 0
      * update weights exact through degree 2 with v = 0:
          sum b_i = 1,  sum b_i c_i = 1/2

    Free choices: gamma = 1/2, the within-step couplings carry the whole
    remaining row sums (a_cur[1,0] = 3/2, g_cur[1,0] = -2 gamma).
    """
    gamma = 0.5
    c = np.array([0.0, 1.0])
    b = np.array([0.5, 0.5])  # solves sum b = 1, b . c = 1/2 at these nodes
    v = np.zeros(2)

    a_prev = np.zeros((2, 2))
    a_cur = np.zeros((2, 2))
    g_prev = np.zeros((2, 2))
    g_cur = np.zeros((2, 2))

    # stage 1 (no within-step terms): both argument conditions force zeros
    theta = c - 1.0
    # a_prev[0,0] * theta0 + a_prev[0,1] * theta1 = 0 and row sum = c_0 = 0
    #   with theta = [-1, 0] this pins a_prev[0,:] = 0
    # coupling: g_prev[0,0] theta-free conditions give g_prev[0,:] = [0, -gamma]
    g_prev[0, 1] = -gamma

    # stage 2: second-order argument condition fixes a_prev[1,0]
    a_prev[1, 0] = (c[1] ** 2 / 2.0 - 0.0) / theta[0]
    a_cur[1, 0] = c[1] - a_prev[1, 0] - a_prev[1, 1]
    # coupling first-order condition fixes g_prev[1,0]; the zeroth-order
    # condition then lands on the within-step coupling
    g_prev[1, 0] = gamma * c[1] / (-theta[0])
    g_cur[1, 0] = -gamma - g_prev[1, 0] - g_prev[1, 1]

    return TwoStepWTableau(name="TSW2", gamma=gamma, a_prev=a_prev,
                           a_cur=a_cur, g_prev=g_prev, g_cur=g_cur,
                           b=b, v=v, order=2)


def _derive_peer_pair() -> PeerTableau:
    """PEER2: 2-stage peer method at nodes [0, 1], constant-step order 2.

    Per-stage exactness on polynomials of degree <= 1 (previous stages sit
    at nodes c - 1):

        b_mat row sums                = 1
        b_mat[i,:] . (c - 1) + a_mat row sum_i = c_i
        a_mat row sum_i = gamma + g_mat row sum_i   (arbitrary-T bracket)

    The degree-1 stages leave an order-h^2 defect per step; requiring the
    defect's component along the left unit eigenvector of b_mat to vanish
    (both its Taylor part and its coupling part) removes the accumulated
    first-order error and is what makes the constant-step order 2. With the
    choices g21 = 1 (second companion eigenvalue 0) and a11 = 0 those two
    conditions force gamma^2 - 2 gamma + 1/2 = 0; the smaller root is used.
    """
    g21 = 1.0
    gamma = _vanishing_limit_gamma()
    c = np.array([0.0, 1.0])
    theta = c - 1.0

    b11 = (c[0] - gamma) / theta[0]
    b21 = (c[1] - gamma - g21) / theta[0]
    b_mat = np.array([[b11, 1.0 - b11], [b21, 1.0 - b21]])

    a11 = 0.0
    # defect cancellation (coupling part): gamma a11 + (1-gamma)(gamma + a21) = 0
    w = np.array([b21, 1.0 - b11])  # left eigenvector of b_mat for eigenvalue 1
    a21 = -(w[0] * a11) / w[1] - gamma
    a_mat = np.array([[a11, gamma - a11],
                      [a21, gamma + g21 - a21]])
    g_mat = np.array([[0.0, 0.0], [g21, 0.0]])
    return PeerTableau(name="PEER2", gamma=gamma, b_mat=b_mat, a_mat=a_mat,
                       g_mat=g_mat, nodes=c, order=2)


@lru_cache(maxsize=1)
def builtin_methods() -> tuple:
    """All shipped methods, derivation functions evaluated once."""
    return (_derive_lie(), _derive_two_stage_lstable(),
            _derive_three_stage_astable(), _derive_two_step_w(),
            _derive_peer_pair())


def get_method(name: str):
    """Look up a shipped method by name (case-insensitive). KeyError if absent."""
    for method in builtin_methods():
        if method.name.lower() == name.lower():
            return method
    raise KeyError(name)
