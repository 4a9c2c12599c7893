"""Text round-trips and parse diagnostics for tableau files."""
import numpy as np
import pytest

from rowsolve import (
    RowTableau,
    StructuralError,
    format_tableau,
    get_method,
    load_tableau,
    parse_tableau_text,
    save_tableau,
)

GOOD = """\
[method]
name = demo
order = 2
embedded_order = 1

# trailing comments and blank lines are fine
[alpha]
1.0

[gamma]
0.25
-0.5 0.25   # inline comment

[b]
0.5 0.5

[bhat]
1.0 0.0
"""


def test_parse_basic():
    t = parse_tableau_text(GOOD)
    assert t.name == "demo"
    assert t.order == 2
    assert t.embedded_order == 1
    assert t.stages == 2
    np.testing.assert_allclose(t.alpha, [[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(t.gamma, [[0.25, 0.0], [-0.5, 0.25]])
    np.testing.assert_allclose(t.b, [0.5, 0.5])
    np.testing.assert_allclose(t.b_hat, [1.0, 0.0])


@pytest.mark.parametrize("name", ["LIE1", "ROS2D", "ROW3N"])
def test_format_parse_round_trip(name):
    t = get_method(name)
    back = parse_tableau_text(format_tableau(t))
    np.testing.assert_array_equal(back.alpha, t.alpha)
    np.testing.assert_array_equal(back.gamma, t.gamma)
    np.testing.assert_array_equal(back.b, t.b)
    assert back.order == t.order
    if t.b_hat is None:
        assert back.b_hat is None
    else:
        np.testing.assert_array_equal(back.b_hat, t.b_hat)
        assert back.embedded_order == t.embedded_order


def test_round_trip_is_exact_for_random_coefficients():
    # repr() serialization must reproduce every float bit for bit
    rng = np.random.default_rng(21)
    for _ in range(20):
        s = int(rng.integers(1, 6))
        alpha = np.tril(rng.standard_normal((s, s)), -1)
        gamma = np.tril(rng.standard_normal((s, s)), -1)
        gamma[np.diag_indices(s)] = rng.uniform(0.1, 2.0, size=s)
        t = RowTableau(name="rnd", alpha=alpha, gamma=gamma,
                       b=rng.standard_normal(s), order=1)
        back = parse_tableau_text(format_tableau(t))
        np.testing.assert_array_equal(back.alpha, t.alpha)
        np.testing.assert_array_equal(back.gamma, t.gamma)
        np.testing.assert_array_equal(back.b, t.b)


def test_file_round_trip(tmp_path):
    path = tmp_path / "ros2d.tab"
    save_tableau(get_method("ROS2D"), path)
    back = load_tableau(path)
    np.testing.assert_array_equal(back.gamma, get_method("ROS2D").gamma)
    assert back.name == "ROS2D"


def test_diagonal_spill_names_line():
    text = GOOD.replace("1.0\n\n[gamma]", "1.0 2.0\n\n[gamma]")
    with pytest.raises(StructuralError, match="on or above the diagonal"):
        parse_tableau_text(text)
    # the reported line number points at the offending alpha row
    with pytest.raises(StructuralError, match="line 8"):
        parse_tableau_text(text)


def test_missing_sections():
    with pytest.raises(StructuralError, match=r"missing \[gamma\]"):
        parse_tableau_text("[method]\nname = x\norder = 1\n[b]\n1.0\n")
    with pytest.raises(StructuralError, match=r"missing \[method\]"):
        parse_tableau_text("[gamma]\n1.0\n[b]\n1.0\n")


def test_unknown_section_and_key():
    with pytest.raises(StructuralError, match="unknown section"):
        parse_tableau_text("[weights]\n1.0\n")
    with pytest.raises(StructuralError, match="unknown key"):
        parse_tableau_text("[method]\nname = x\norder = 1\ncolor = red\n"
                           "[gamma]\n1.0\n[b]\n1.0\n")


def test_content_before_header():
    with pytest.raises(StructuralError, match="line 1"):
        parse_tableau_text("1.0 2.0\n[method]\n")


def test_bad_number_names_token():
    text = GOOD.replace("-0.5 0.25", "-0.5 oops")
    with pytest.raises(StructuralError, match="'oops' is not a number"):
        parse_tableau_text(text)


def test_row_count_mismatch():
    text = GOOD.replace("0.25\n-0.5 0.25   # inline comment", "0.25")
    with pytest.raises(StructuralError, match=r"\[gamma\] must have 2 rows"):
        parse_tableau_text(text)


def test_short_row_reports_needed_count():
    bad = """\
[method]
name = x
order = 1
[alpha]
1.0
[gamma]
0.5
0.25
[b]
0.5 0.5
"""
    with pytest.raises(StructuralError, match="needs 2 entries, got 1"):
        parse_tableau_text(bad)


def test_bhat_and_embedded_order_must_pair():
    no_order = GOOD.replace("embedded_order = 1\n", "")
    with pytest.raises(StructuralError, match="embedded_order"):
        parse_tableau_text(no_order)
    no_bhat = GOOD.replace("\n[bhat]\n1.0 0.0\n", "")
    with pytest.raises(StructuralError, match="without a"):
        parse_tableau_text(no_bhat)


def test_duplicate_section():
    with pytest.raises(StructuralError, match="duplicate"):
        parse_tableau_text("[b]\n1.0\n[b]\n1.0\n")


def test_single_stage_has_no_alpha_section():
    text = format_tableau(get_method("LIE1"))
    assert "[alpha]" not in text
    assert parse_tableau_text(text).stages == 1
