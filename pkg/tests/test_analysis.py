import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cemschrod import (
    NormOperators,
    assemble_hamiltonian,
    build_grid,
    convergence_order,
    energy_density,
    make_initial_data,
    make_potential,
    position_density,
    relative_errors,
)
from cemschrod.analysis import CSV_COLUMNS, rows_to_csv
from cemschrod.evolve import interpolate


@pytest.fixture(scope="module")
def inclusions():
    g = build_grid(2, (0.0, 1.0), 4, 5)
    V = make_potential("inclusions2d", contrast=100.0, seed=2)
    return g, V, NormOperators.build(g, 0.125, V)


def test_position_density_basic():
    assert np.array_equal(position_density(np.ones(5, complex)), np.ones(5))
    g = build_grid(2, (0.0, 1.0), 2, 2)
    u = interpolate(g, make_initial_data("gaussian2d", 1 / 8))
    centre = g.ravel([np.array(2), np.array(2)], g.fine_counts).item()
    assert position_density(u)[centre] == pytest.approx(10 / np.pi, rel=1e-15)


@given(st.floats(-10, 10), st.integers(0, 2**31))
def test_position_density_phase_invariant(alpha, seed):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    assert np.allclose(position_density(np.exp(1j * alpha) * u), position_density(u), rtol=1e-12)


def test_energy_density_constant_field():
    g = build_grid(2, (0.0, 1.0), 3, 2)
    V = make_potential("constant", c=2.0, dim=2)
    e = energy_density(np.full(g.n_dofs, 1.5 + 0.5j), g, 0.1, V)
    assert np.allclose(e, 2.0 * abs(1.5 + 0.5j) ** 2, rtol=1e-12)


def test_energy_density_integrates_to_quadratic_form(inclusions):
    g, V, ops = inclusions
    u = interpolate(g, make_initial_data("gaussian2d", 0.125))
    e = energy_density(u, g, 0.125, V)
    A = assemble_hamiltonian(g, 0.125, V).matrix
    total = np.vdot(u, A @ u).real
    assert e.sum() * g.element_volume == pytest.approx(total, rel=1e-12)
    assert np.allclose(energy_density(2 * u, g, 0.125, V), 4 * e, rtol=1e-12)
    assert np.all(e >= 0)


def test_relative_errors_identity_and_scaling(inclusions):
    g, V, ops = inclusions
    u = interpolate(g, make_initial_data("gaussian2d", 0.125))
    rep = relative_errors(u, u, ops, H=0.25)
    assert (rep.l2, rep.h1, rep.a) == (0.0, 0.0, 0.0)
    assert rep.meta == {"H": 0.25}
    rep = relative_errors(1.01 * u, u, ops)
    assert rep.l2 == pytest.approx(0.01, rel=1e-12)
    assert rep.h1 == pytest.approx(0.01, rel=1e-12)
    assert rep.a == pytest.approx(0.01, rel=1e-12)


def test_relative_errors_guards(inclusions):
    g, V, ops = inclusions
    with pytest.raises(ZeroDivisionError):
        relative_errors(np.ones(g.n_dofs), np.zeros(g.n_dofs), ops)
    with pytest.raises(ValueError):
        relative_errors(np.ones(3), np.ones(4), ops)


@given(st.integers(0, 2**31))
def test_norm_consistency(seed):
    g = build_grid(2, (0.0, 1.0), 3, 3)
    V = make_potential("inclusions2d", contrast=50.0, seed=seed % 7)
    ops = NormOperators.build(g, 0.2, V)
    rng = np.random.default_rng(seed)
    ref = rng.standard_normal(g.n_dofs) + 1j * rng.standard_normal(g.n_dofs)
    test = ref + 0.1 * rng.standard_normal(g.n_dofs)
    rep = relative_errors(test, ref, ops)
    assert rep.a >= np.sqrt(V.vmin) * ops.l2(test - ref) / ops.a(ref) * (1 - 1e-12)
    assert rep.l2 >= 0 and rep.h1 >= 0


def test_convergence_order_values():
    assert convergence_order([(0.1, 4e-2), (0.05, 1e-2)]) == [pytest.approx(2.0)]
    assert convergence_order([(1 / 10, 1.651e-1), (1 / 20, 7.067e-2)])[0] == pytest.approx(1.22, abs=5e-3)
    assert convergence_order([(1 / 10, 3.856e-2), (1 / 20, 8.717e-3)])[0] == pytest.approx(2.14, abs=1e-2)


@given(st.floats(0.5, 4.0), st.floats(1e-3, 1.0), st.integers(2, 5))
def test_convergence_order_recovers_power(p, c, n):
    H = [2.0**-k for k in range(n)]
    orders = convergence_order([(h, c * h**p) for h in H])
    assert np.allclose(orders, p, rtol=1e-10)


def test_convergence_order_rejects_non_monotone():
    with pytest.raises(ValueError):
        convergence_order([(0.05, 1.0), (0.1, 0.5)])


def test_rows_to_csv():
    text = rows_to_csv([{"experiment_id": "x", "eps": np.float64(0.125), "err_l2": float("nan"), "note": "a"}],
                       extra_columns=("note",))
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == list(CSV_COLUMNS) + ["note"]
    assert rows[1][0] == "x" and rows[1][1] == "0.125" and rows[1][9] == "" and rows[1][-1] == "a"
