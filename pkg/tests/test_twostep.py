"""Two-step stage-reusing methods: W-type and peer families."""
import numpy as np
import pytest

from rowsolve import (
    Analytic,
    DIRECT,
    IntegrationFailure,
    OdeSystem,
    PoleError,
    StructuralError,
    TwoStepState,
    from_row,
    get_method,
    integrate_twostep,
    make_dahlquist,
    make_heat1d,
    make_order_reduction_problem,
    peer_spectral_radius,
    peer_step,
    peer_transfer_matrix,
    row_reduction,
    row_step,
    tsw_step,
    two_stage_family_member,
    with_strategy,
)


# ------------------------------------------------------------ embeddings

def test_from_row_zeroes_previous_couplings():
    rt = get_method("ROS2D")
    tsw = from_row(rt)
    assert tsw.gamma == pytest.approx(rt.gamma[0, 0])
    np.testing.assert_array_equal(tsw.a_cur, rt.alpha)
    np.testing.assert_array_equal(tsw.g_cur, np.tril(rt.gamma, -1))
    np.testing.assert_array_equal(tsw.a_prev, 0.0)
    np.testing.assert_array_equal(tsw.g_prev, 0.0)
    np.testing.assert_array_equal(tsw.v, 0.0)
    assert tsw.order == rt.order


def test_from_row_needs_single_diagonal():
    rt = get_method("ROS2D")
    uneven = np.array(rt.gamma)
    uneven[1, 1] = 0.9
    from rowsolve import RowTableau
    bad = RowTableau(name="mix", alpha=rt.alpha, gamma=uneven, b=rt.b, order=2)
    with pytest.raises(StructuralError):
        from_row(bad)


def test_row_reduction_round_trip():
    rt = get_method("ROS2D")
    back = row_reduction(from_row(rt))
    np.testing.assert_array_equal(back.alpha, rt.alpha)
    np.testing.assert_array_equal(back.gamma, rt.gamma)
    np.testing.assert_array_equal(back.b, rt.b)
    assert back.order == 2          # the reduction attains full order here


def test_tsw2_reduction_drops_order():
    red = row_reduction(get_method("TSW2"))
    assert red.order == 1           # previous-step terms carried the rest


# ------------------------------------------------------------ single steps

def _state(prev, u, h, t):
    return TwoStepState(prev_stage_values=np.asarray(prev),
                        prev_state=np.asarray(u, dtype=float),
                        h_prev=h, t=t)


def test_tsw_zero_field_is_stationary():
    sys_ = OdeSystem(name="still", dim=1, f=lambda t, u: np.zeros(1),
                     jacobian=Analytic(lambda t, u: np.zeros((1, 1))),
                     t_span=(0.0, 1.0), u0=np.array([3.0]))
    tab = get_method("TSW2")
    st = _state(np.zeros((2, 1)), [3.0], 0.5, 0.5)
    nxt, u_next = tsw_step(sys_, tab, st, 0.5, 0.5, np.zeros((1, 1)))
    np.testing.assert_array_equal(u_next, [3.0])
    np.testing.assert_array_equal(nxt.prev_stage_values, 0.0)
    assert nxt.t == pytest.approx(1.0)


def test_embedded_one_step_reproduced_exactly():
    """With zeroed previous couplings a window step equals the one-step
    method; h = 1/4 keeps the stage rescaling exact in floating point."""
    sys_ = make_dahlquist(lam=-2.0)
    rt = get_method("ROS2D")
    tsw = from_row(rt)
    T = np.array([[-2.0]])
    h = 0.25
    ref = row_step(sys_, rt, 0.0, sys_.u0, h, T, mode=DIRECT)
    # garbage in the window must not matter: those couplings are zero
    st = _state([[7.0], [-4.0]], sys_.u0, h, 0.0)
    nxt, u_next = tsw_step(sys_, tsw, st, 0.0, h, T)
    np.testing.assert_array_equal(u_next, ref.u_next)
    np.testing.assert_array_equal(nxt.prev_stage_values * h, ref.stages)


def test_tsw_step_shape_check():
    sys_ = make_dahlquist()
    tab = get_method("TSW2")
    st = _state(np.zeros((3, 1)), [1.0], 0.1, 0.0)
    with pytest.raises(ValueError, match="stage vectors"):
        tsw_step(sys_, tab, st, 0.0, 0.1, np.array([[-1.0]]))


def test_peer_constant_window_is_fixed_point():
    sys_ = OdeSystem(name="still", dim=2, f=lambda t, u: np.zeros(2),
                     jacobian=Analytic(lambda t, u: np.zeros((2, 2))),
                     t_span=(0.0, 1.0), u0=np.array([1.0, -2.0]))
    tab = get_method("PEER2")
    prev = np.tile([1.0, -2.0], (2, 1))
    st = _state(prev, prev[-1], 0.5, 0.0)
    nxt, u_next = peer_step(sys_, tab, st, 0.0, 0.5, np.zeros((2, 2)))
    # row sums of the propagation weights are 1: constants pass through
    np.testing.assert_allclose(nxt.prev_stage_values, prev, atol=1e-15)
    np.testing.assert_allclose(u_next, [1.0, -2.0], atol=1e-15)


def test_peer_step_shape_check():
    sys_ = make_dahlquist()
    tab = get_method("PEER2")
    st = _state(np.zeros(2), [1.0], 0.1, 0.0)
    with pytest.raises(ValueError, match="stage vectors"):
        peer_step(sys_, tab, st, 0.0, 0.1, np.array([[-1.0]]))


# --------------------------------------------------------- transfer matrix

def test_peer_transfer_at_origin_is_weight_matrix():
    tab = get_method("PEER2")
    np.testing.assert_allclose(peer_transfer_matrix(tab, 0.0), tab.b_mat,
                               atol=1e-15)
    assert peer_spectral_radius(tab, 0.0) == pytest.approx(1.0, abs=1e-12)


def test_peer_transfer_pole():
    tab = get_method("PEER2")
    with pytest.raises(PoleError):
        peer_transfer_matrix(tab, 1.0 / tab.gamma)


def test_peer_damps_far_left():
    tab = get_method("PEER2")
    assert peer_spectral_radius(tab, -1.0e6) < 1.0
    assert peer_spectral_radius(tab, -1.0) < 1.0


# ---------------------------------------------------------------- drivers

def test_tsw_convergence_second_order():
    sys_ = make_dahlquist(lam=-1.0)
    errs = []
    for n in (32, 64):
        traj = integrate_twostep(sys_, "TSW2", n)
        errs.append(abs(traj.states[-1][0] - np.exp(-1.0)))
    ratio = errs[0] / errs[1]
    assert 3.3 < ratio < 5.0


def test_peer_convergence_second_order():
    sys_ = make_dahlquist(lam=-1.0)
    errs = []
    for n in (32, 64):
        traj = integrate_twostep(sys_, "PEER2", n)
        errs.append(abs(traj.states[-1][0] - np.exp(-1.0)))
    ratio = errs[0] / errs[1]
    assert 3.3 < ratio < 5.0


def test_peer_heat_no_sustained_growth():
    """100 unit steps on the semi-discrete heat equation must decay.

    The window recursion is non-normal, so the hand-off from the finely
    resolved startup window can bump the norm once; what stability promises
    is contraction from then on, backed by the transfer-matrix spectral
    radius at every eigenvalue of the coupling matrix.
    """
    sys_ = make_heat1d(n=20, t_span=(0.0, 100.0))
    tab = get_method("PEER2")
    A = np.asarray(sys_.jacobian.matrix(0.0, sys_.u0))
    for mu in np.linalg.eigvalsh(A):
        assert peer_spectral_radius(tab, complex(mu)) <= 1.0 + 1e-10

    traj = integrate_twostep(sys_, "PEER2", 100)
    norms = np.linalg.norm(traj.states, axis=1)
    assert np.all(np.diff(norms[2:]) <= 1e-12 * norms[0])
    assert norms[-1] < 1e-12 * norms[0]


def test_peer_insensitive_to_coupling_perturbation():
    # 1e-8 shift in the coupling matrix moves the answer by far less than
    # the shift would suggest if it entered the order conditions
    sys_ = make_dahlquist(lam=-2.0)
    base = integrate_twostep(sys_, "PEER2", 10)
    bumped = with_strategy(
        sys_, Analytic(lambda t, u: np.array([[-2.0 + 1e-8]])))
    pert = integrate_twostep(bumped, "PEER2", 10)
    assert abs(base.states[-1][0] - pert.states[-1][0]) <= 1e-5


def test_single_window_run():
    sys_ = make_dahlquist(lam=-1.0)
    traj = integrate_twostep(sys_, "TSW2", 1)
    np.testing.assert_allclose(traj.times, [0.0, 1.0])
    assert traj.states.shape == (2, 1)


def test_two_step_trajectory_shape_and_grid():
    sys_ = make_dahlquist(lam=-1.0)
    traj = integrate_twostep(sys_, "TSW2", 8)
    np.testing.assert_allclose(traj.times, np.linspace(0.0, 1.0, 9),
                               atol=1e-12)
    assert traj.accepted == 8
    assert traj.rejected == 0


def test_counters_one_factorization_per_window():
    sys_ = make_dahlquist(lam=-1.0)
    traj = integrate_twostep(sys_, "TSW2", 4)
    # startup window plus three main windows, fresh matrix each
    assert traj.factorizations == 4
    assert traj.stage_solves == 2 * 4


def test_caller_startup_replaces_builtin():
    sys_ = make_dahlquist(lam=-1.0)
    h = 0.25
    st = _state(np.zeros((2, 1)), sys_.u0, h, 0.0)
    traj = integrate_twostep(sys_, "TSW2", 4, startup=st)
    # all four windows are main steps now
    np.testing.assert_allclose(traj.times, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert traj.states.shape == (5, 1)


def test_two_step_requires_two_step_method():
    with pytest.raises(TypeError):
        integrate_twostep(make_dahlquist(), get_method("ROS2D"), 4)
    with pytest.raises(ValueError):
        integrate_twostep(make_dahlquist(), "TSW2", 0)


def test_two_step_handles_time_dependence():
    sys_ = make_order_reduction_problem(lam=-20.0)
    traj = integrate_twostep(sys_, "TSW2", 50)
    assert traj.states.shape[1] == 1            # clock stripped again
    assert abs(traj.states[-1][0] - np.sin(1.0)) < 1e-3


def test_peer_on_stiff_path_problem():
    sys_ = make_order_reduction_problem(lam=-1000.0)
    traj = integrate_twostep(sys_, "PEER2", 50)
    assert abs(traj.states[-1][0] - np.sin(1.0)) < 1e-3


def test_two_step_singular_matrix_is_fatal_after_retry():
    sys_ = OdeSystem(name="stuck", dim=1, f=lambda t, u: u,
                     jacobian=Analytic(lambda t, u: np.array(
                         [[1.0 / (0.25 * get_method("TSW2").gamma)]])),
                     t_span=(0.0, 1.0), u0=np.ones(1))
    with pytest.raises(IntegrationFailure):
        integrate_twostep(sys_, "TSW2", 4)


def test_generic_embedding_integrates():
    # any single-diagonal one-step scheme can run through the two-step driver
    member = from_row(two_stage_family_member(0.4))
    sys_ = make_dahlquist(lam=-1.0)
    traj = integrate_twostep(sys_, member, 16)
    assert abs(traj.states[-1][0] - np.exp(-1.0)) < 1e-3
