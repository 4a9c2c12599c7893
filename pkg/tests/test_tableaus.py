"""Coefficient sets: construction, validation, transform round-trips."""
import dataclasses

import numpy as np
import pytest

from rowsolve import (
    PeerTableau,
    RowTableau,
    StructuralError,
    TransformedTableau,
    TwoStepWTableau,
    builtin_methods,
    get_method,
    inverse_transform,
    order_condition_residuals,
    three_stage_third_order,
    transform,
    two_stage_family_member,
    two_stage_third_order_gammas,
    validate,
)


def test_catalog_names_and_shapes():
    methods = {m.name: m for m in builtin_methods()}
    assert set(methods) == {"LIE1", "ROS2D", "ROW3N", "TSW2", "PEER2"}
    expected = {"LIE1": (1, 1), "ROS2D": (2, 2), "ROW3N": (3, 3),
                "TSW2": (2, 2), "PEER2": (2, 2)}
    for name, (stages, order) in expected.items():
        assert methods[name].stages == stages
        assert methods[name].order == order
    assert isinstance(methods["LIE1"], RowTableau)
    assert isinstance(methods["TSW2"], TwoStepWTableau)
    assert isinstance(methods["PEER2"], PeerTableau)


def test_get_method_case_insensitive():
    assert get_method("lie1") is get_method("LIE1")
    assert get_method("Ros2d").name == "ROS2D"
    with pytest.raises(KeyError):
        get_method("NOPE9")


def test_embedded_weights_present_where_expected():
    assert get_method("ROS2D").embedded_order == 1
    assert get_method("ROW3N").embedded_order == 2
    assert get_method("LIE1").b_hat is None


def test_order_residuals_lie():
    r = order_condition_residuals(get_method("LIE1"))
    # one stage, full implicit weight: first condition met, rest are the
    # known gaps of backward Euler
    assert r[0] == pytest.approx(0.0, abs=1e-14)
    assert r[1] == pytest.approx(0.5, abs=1e-14)
    assert r[2] == pytest.approx(-1.0 / 3.0, abs=1e-14)
    assert r[3] == pytest.approx(5.0 / 6.0, abs=1e-14)


def test_order_residuals_ros2d():
    r = order_condition_residuals(get_method("ROS2D"))
    assert abs(r[0]) < 1e-14
    assert abs(r[1]) < 1e-14
    # a 2-stage order-2 method need not meet the order-3 conditions
    assert abs(r[2]) > 1e-3 or abs(r[3]) > 1e-3


def test_order_residuals_row3n():
    r = order_condition_residuals(get_method("ROW3N"))
    assert np.max(np.abs(r)) < 1e-13


def test_order_residuals_embedded_weights():
    ros = get_method("ROS2D")
    r = order_condition_residuals(ros, weights=ros.b_hat)
    assert abs(r[0]) < 1e-14     # consistency
    assert abs(r[1]) > 0.1       # but genuinely lower order than b

    row3 = get_method("ROW3N")
    r3 = order_condition_residuals(row3, weights=row3.b_hat)
    assert abs(r3[0]) < 1e-14
    assert abs(r3[1]) < 1e-14
    assert abs(r3[2]) > 0.1


def test_transform_worked_example():
    """Hand-checkable 2-stage case with integer coefficient inverse."""
    t = RowTableau(name="demo",
                   alpha=np.array([[0.0, 0.0], [1.0, 0.0]]),
                   gamma=np.array([[1.0, 0.0], [-2.0, 1.0]]),
                   b=np.array([0.0, 1.0]), order=1)
    tt = transform(t)
    assert isinstance(tt, TransformedTableau)
    assert tt.a[1, 0] == pytest.approx(1.0, abs=1e-15)
    assert tt.c[1, 0] == pytest.approx(-2.0, abs=1e-15)
    np.testing.assert_allclose(tt.m, [2.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(tt.gamma_diag, [1.0, 1.0])


@pytest.mark.parametrize("name", ["LIE1", "ROS2D", "ROW3N"])
def test_transform_round_trip_builtin(name):
    t = get_method(name)
    back = inverse_transform(transform(t))
    np.testing.assert_allclose(back.alpha, t.alpha, atol=1e-13)
    np.testing.assert_allclose(back.gamma, t.gamma, atol=1e-13)
    np.testing.assert_allclose(back.b, t.b, atol=1e-13)
    if t.b_hat is not None:
        np.testing.assert_allclose(back.b_hat, t.b_hat, atol=1e-13)
        assert back.embedded_order == t.embedded_order


def test_transform_round_trip_random():
    rng = np.random.default_rng(7)
    for _ in range(20):
        s = int(rng.integers(1, 5))
        alpha = np.tril(rng.standard_normal((s, s)), -1)
        gamma = np.tril(rng.standard_normal((s, s)), -1)
        gamma[np.diag_indices(s)] = rng.uniform(0.2, 1.5, size=s)
        t = RowTableau(name="rnd", alpha=alpha, gamma=gamma,
                       b=rng.standard_normal(s), order=1)
        back = inverse_transform(transform(t))
        np.testing.assert_allclose(back.alpha, t.alpha, atol=1e-12)
        np.testing.assert_allclose(back.gamma, t.gamma, atol=1e-12)
        np.testing.assert_allclose(back.b, t.b, atol=1e-12)


def test_transform_rejects_structural_problems():
    bad = RowTableau(name="bad",
                     alpha=np.array([[0.0, 1.0], [0.0, 0.0]]),  # upper entry
                     gamma=np.eye(2), b=np.array([0.5, 0.5]), order=1)
    with pytest.raises(StructuralError):
        transform(bad)


def test_two_stage_third_order_gammas():
    g = two_stage_third_order_gammas()
    expected = np.sort([(3.0 - np.sqrt(3.0)) / 6.0, (3.0 + np.sqrt(3.0)) / 6.0])
    np.testing.assert_allclose(g, expected, atol=1e-12)


@pytest.mark.parametrize("g", [0.3, 0.5, 1.2])
def test_two_stage_family_order_two(g):
    t = two_stage_family_member(g)
    r = order_condition_residuals(t)
    assert abs(r[0]) < 1e-14
    assert abs(r[1]) < 1e-14
    assert t.single_gamma


@pytest.mark.parametrize("g", [0.3, 0.5, 0.8])
def test_three_stage_meets_all_conditions(g):
    t = three_stage_third_order(g)
    assert np.max(np.abs(order_condition_residuals(t))) < 1e-13


def test_row3n_is_half_gamma_instance():
    ref = three_stage_third_order(0.5)
    t = get_method("ROW3N")
    np.testing.assert_allclose(t.alpha, ref.alpha)
    np.testing.assert_allclose(t.gamma, ref.gamma)
    np.testing.assert_allclose(t.b, ref.b)


def test_validate_builtin_clean():
    for name in ("LIE1", "ROS2D", "ROW3N"):
        report = validate(get_method(name))
        assert report.ok, report.problems
        assert report.single_gamma


def test_validate_flags_problems():
    t = RowTableau(name="bad",
                   alpha=np.array([[0.0, 0.5], [1.0, 0.0]]),
                   gamma=np.array([[0.5, 0.0], [0.0, 0.0]]),
                   b=np.array([0.5, 0.5]), order=1)
    report = validate(t)
    assert not report.ok
    joined = " ".join(report.problems)
    assert "alpha" in joined
    assert "gamma" in joined


def test_validate_stiffly_accurate():
    # last row of alpha + gamma equals b and alpha row sums to 1
    t = RowTableau(name="sa",
                   alpha=np.array([[0.0, 0.0], [1.0, 0.0]]),
                   gamma=np.array([[0.5, 0.0], [-0.5, 0.5]]),
                   b=np.array([0.5, 0.5]), order=1)
    assert validate(t).stiffly_accurate
    assert not validate(get_method("LIE1")).stiffly_accurate
    assert not validate(get_method("ROS2D")).stiffly_accurate


def test_single_gamma_property():
    t = RowTableau(name="mixed",
                   alpha=np.zeros((2, 2)),
                   gamma=np.array([[0.5, 0.0], [0.0, 0.7]]),
                   b=np.array([0.5, 0.5]), order=1)
    assert not t.single_gamma
    assert get_method("ROS2D").single_gamma


def test_tableau_immutable():
    t = get_method("ROS2D")
    with pytest.raises(dataclasses.FrozenInstanceError):
        t.order = 5
    with pytest.raises(ValueError):
        t.b[0] = 2.0


def test_bhat_requires_embedded_order():
    with pytest.raises(StructuralError):
        RowTableau(name="x", alpha=np.zeros((1, 1)), gamma=np.ones((1, 1)),
                   b=np.array([1.0]), order=1, b_hat=np.array([0.5]))


def test_shape_mismatch_rejected():
    with pytest.raises(StructuralError):
        RowTableau(name="x", alpha=np.zeros((3, 3)), gamma=np.eye(2),
                   b=np.array([0.5, 0.5]), order=1)


def test_twostep_rejects_upper_triangular_coupling():
    tsw = get_method("TSW2")
    bad_cur = np.array([[0.0, 0.3], [0.1, 0.0]])
    with pytest.raises(StructuralError):
        TwoStepWTableau(name="bad", gamma=tsw.gamma, a_prev=tsw.a_prev,
                        a_cur=bad_cur, g_prev=tsw.g_prev, g_cur=tsw.g_cur,
                        b=tsw.b, v=tsw.v, order=2)
    with pytest.raises(StructuralError):
        TwoStepWTableau(name="bad", gamma=-0.5, a_prev=tsw.a_prev,
                        a_cur=tsw.a_cur, g_prev=tsw.g_prev, g_cur=tsw.g_cur,
                        b=tsw.b, v=tsw.v, order=2)


def test_peer_structural_checks():
    p = get_method("PEER2")
    np.testing.assert_allclose(p.b_mat.sum(axis=1), 1.0, atol=1e-12)
    assert p.nodes[-1] == pytest.approx(1.0)
    with pytest.raises(StructuralError):
        PeerTableau(name="bad", gamma=p.gamma, b_mat=p.b_mat * 1.1,
                    a_mat=p.a_mat, g_mat=p.g_mat, nodes=p.nodes, order=2)
    with pytest.raises(StructuralError):
        PeerTableau(name="bad", gamma=p.gamma, b_mat=p.b_mat,
                    a_mat=p.a_mat, g_mat=np.full((2, 2), 0.5),
                    nodes=p.nodes, order=2)
    with pytest.raises(StructuralError):
        PeerTableau(name="bad", gamma=p.gamma, b_mat=p.b_mat,
                    a_mat=p.a_mat, g_mat=p.g_mat,
                    nodes=np.array([0.0, 0.5]), order=2)
