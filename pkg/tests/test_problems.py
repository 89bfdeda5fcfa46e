import numpy as np
import pytest
from hypothesis import given, strategies as st

from cemschrod import build_grid, make_initial_data, make_potential
from cemschrod.assembly import evaluate_on_quadrature
from cemschrod.problems import check_alignment, inclusion_layout, load_cell_map, write_cell_map


def test_smooth1d_value():
    assert make_potential("smooth1d")(np.array([[0.5]]))[0] == pytest.approx(0.125, abs=1e-15)


def test_twoscale_value():
    V = make_potential("twoscale1d", delta1=0.25, delta2=0.1)
    x = 0.7
    assert V(np.array([[x]]))[0] == pytest.approx(np.sin(x**2 / 0.25) * np.sin(np.pi * x / 0.1), abs=1e-15)


def test_checkerboard_value_in_fine_quarter():
    V = make_potential("checkerboard2d", delta1=1 / 8, delta2=1 / 16)
    expected = (np.cos(3.2 * np.pi) + 1) ** 2
    assert V(np.array([[0.1, 0.1]]))[0] == pytest.approx(expected, abs=1e-14)
    # off-diagonal quarter uses delta1
    assert V(np.array([[0.1, 0.7]]))[0] == pytest.approx(
        (np.cos(2 * np.pi * 0.1 * 8) + 1) * (np.cos(2 * np.pi * 0.7 * 8) + 1), abs=1e-14
    )


def test_inclusions_take_two_values():
    V = make_potential("inclusions2d", contrast=1e3)
    g = build_grid(2, (0.0, 1.0), 10, 20)
    vals = evaluate_on_quadrature(g, V, 2)
    assert set(np.unique(vals).tolist()) == {0.001, 1.0}
    assert V.vmin == 0.001 and V.vmax == 1.0 and V.contrast == 1e3


def test_inclusion_layout_frozen():
    m = inclusion_layout(20, 0)
    assert m.sum() == 93
    assert m[0].astype(int).tolist() == [0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1, 0, 1, 0, 0, 0, 0]


@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_inclusion_layout_pure(seed, cells):
    assert np.array_equal(inclusion_layout(cells, seed), inclusion_layout(cells, seed))


@pytest.mark.parametrize(
    "kind,params",
    [
        ("twoscale1d", dict(delta1=0.0)),
        ("checkerboard2d", dict(delta2=-1.0)),
        ("inclusions2d", dict(contrast=1.0)),
        ("bogus", {}),
    ],
)
def test_make_potential_rejects(kind, params):
    with pytest.raises(ValueError):
        make_potential(kind, **params)


potentials = st.sampled_from(
    [
        ("smooth1d", {}, 1),
        ("twoscale1d", dict(delta1=0.25, delta2=0.1), 1),
        ("checkerboard2d", {}, 2),
        ("inclusions2d", dict(contrast=1e2, seed=3), 2),
        ("constant", dict(c=2.5, dim=2), 2),
    ]
)


@given(potentials, st.integers(2, 6), st.integers(1, 4), st.integers(2, 3))
def test_declared_bounds_hold(case, n, r, order):
    kind, params, d = case
    V = make_potential(kind, **params)
    g = build_grid(d, (0.0, 2.0 if d == 1 else 1.0), n, r)
    vals = evaluate_on_quadrature(g, V, order)
    assert np.all(vals >= V.vmin - 1e-15) and np.all(vals <= V.vmax + 1e-15)


def test_delta_reports_smaller_scale():
    assert make_potential("checkerboard2d", delta1=1 / 8, delta2=1 / 16).delta == 1 / 16
    assert make_potential("smooth1d").delta is None


def test_alignment_checks():
    V = make_potential("checkerboard2d", delta1=1 / 8, delta2=1 / 16)
    assert check_alignment(V, 1 / 400)
    with pytest.warns(UserWarning):
        assert not check_alignment(V, 1 / 200)
    with pytest.warns(UserWarning):
        assert not check_alignment(make_potential("twoscale1d"), 1 / 64)


def test_cell_map_roundtrip(tmp_path):
    vals = np.arange(6, dtype=float).reshape(2, 3) + 0.5
    write_cell_map(tmp_path / "c.txt", vals)
    assert np.array_equal(load_cell_map(tmp_path / "c.txt"), vals)
    V = make_potential("custom", values=vals)
    # cell (ix=2, iy=1) covers x in [2/3, 1), y in [1/2, 1)
    assert V(np.array([[0.9, 0.6]]))[0] == 5.5
    write_cell_map(tmp_path / "d.txt", np.array([1.0, 2.0]))
    assert np.array_equal(load_cell_map(tmp_path / "d.txt"), [1.0, 2.0])


def test_cell_map_errors(tmp_path):
    (tmp_path / "bad.txt").write_text("2 2\n1 2 3\n")
    with pytest.raises(ValueError):
        load_cell_map(tmp_path / "bad.txt")
    (tmp_path / "empty.txt").write_text("# nothing\n")
    with pytest.raises(ValueError):
        load_cell_map(tmp_path / "empty.txt")


def test_wkb_at_centre():
    eps = 1 / 32
    u = make_initial_data("wkb1d", eps)(np.array([[1.0]]))[0]
    assert abs(u) == pytest.approx(1.0, abs=1e-15)
    assert u == pytest.approx(np.exp(-1j * 0.2 * np.log(2) / eps), abs=1e-12)


def test_gaussian_at_centre():
    u = make_initial_data("gaussian2d", 1 / 8)(np.array([[0.5, 0.5]]))[0]
    assert u.imag == 0.0
    assert u.real == pytest.approx(np.sqrt(10 / np.pi), abs=1e-15)


@given(st.sampled_from(["wkb1d", "gaussian2d"]), st.floats(0.005, 1.0), st.floats(0.005, 1.0))
def test_modulus_independent_of_eps(kind, e1, e2):
    d = 1 if kind == "wkb1d" else 2
    x = np.random.default_rng(0).uniform(0, 1, size=(20, d)) * (2.0 if d == 1 else 1.0)
    u1, u2 = make_initial_data(kind, e1)(x), make_initial_data(kind, e2)(x)
    assert np.allclose(np.abs(u1), np.abs(u2), rtol=1e-12)
    assert np.all(np.isfinite(u1))


def test_initial_data_rejects():
    with pytest.raises(ValueError):
        make_initial_data("gaussian2d", 0.0)
    with pytest.raises(ValueError):
        make_initial_data("bogus", 0.1)
    f = make_initial_data("custom", 0.1, func=lambda x: np.ones(x.shape[:-1], complex))
    assert f(np.zeros((3, 1))).tolist() == [1, 1, 1]
