import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vacflow import scenarios
from vacflow.defects import (
    EnergyDefectField,
    ReynoldsDefectField,
    compatibility_check,
    estimate_numerical_defect,
    psd_check,
    write_defect_csv,
)
from vacflow.errors import DimensionError, DomainError
from vacflow.solver1d import EnergyLedger, run


def _run(name, n=40, **kw):
    case = scenarios.build_case(name, n_cells=n, t_end=0.2, **kw)
    return run(case.initial_state(), case.bc, case.law, case.nu, case.t_end)[1]


# -- positivity -------------------------------------------------------------


def test_psd_truth_table():
    assert psd_check(np.zeros((5, 2, 2))).ok
    res = psd_check(np.array([np.eye(2), np.diag([1.0, -1.0])]))
    assert not res.ok
    assert res.cell == 1
    assert res.min_eigenvalue == pytest.approx(-1.0)
    assert np.allclose(res.direction, [0.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_gram_matrices_are_psd(dim, seed):
    A = np.random.default_rng(seed).normal(size=(6, dim, dim))
    assert psd_check(np.einsum("kji,kjl->kil", A, A)).ok


def test_reynolds_field_validation():
    with pytest.raises(DimensionError):
        ReynoldsDefectField(np.array([[[1.0, 2.0], [0.0, 1.0]]]))
    with pytest.raises(DimensionError):
        ReynoldsDefectField(np.ones((3, 2)))
    with pytest.raises(DomainError):
        EnergyDefectField(np.array([1.0, -0.1]))


# -- trace compatibility ----------------------------------------------------


def test_compatibility_truth_table():
    I = np.eye(2)
    assert compatibility_check(np.zeros(4), np.zeros((4, 2, 2)), 1, 3).ok
    assert compatibility_check(np.ones(4), np.broadcast_to(I, (4, 2, 2)).copy(), 1, 3).ok
    res = compatibility_check(np.ones(4), np.broadcast_to(2 * I, (4, 2, 2)).copy(), 1, 3)
    assert not res.ok
    assert res.worst_ratio == pytest.approx(4.0)


def test_compatibility_lower_bound_violation():
    R = np.zeros((3, 1, 1))
    R[1] = 0.5
    res = compatibility_check(np.ones(3), R, 1, 3)
    assert not res.ok
    assert res.worst_cell in (0, 2)
    assert res.worst_ratio == 0.0


def test_compatibility_argument_checks():
    with pytest.raises(DomainError):
        compatibility_check(np.ones(2), np.zeros((2, 1, 1)), 3, 1)
    with pytest.raises(DimensionError):
        compatibility_check(np.ones(3), np.zeros((2, 1, 1)), 1, 1)


# -- ledger surrogate -------------------------------------------------------


def test_rest_ledger_gives_zero_defects():
    E, R = estimate_numerical_defect(_run("rest"))
    assert np.all(E.values == 0.0) and np.all(R.values == 0.0)


def test_injected_residual_recovered():
    ledger = EnergyLedger(cell_defect=np.array([0.0, 0.0, 0.25, 0.0]))
    E, R = estimate_numerical_defect(ledger, dim=2)
    assert E.values[2] == 0.25
    assert np.allclose(R.values[2], 0.125 * np.eye(2))
    assert compatibility_check(E, R, 1, 1).ok


def test_ledger_without_cells_rejected():
    with pytest.raises(DomainError):
        estimate_numerical_defect(EnergyLedger())


@pytest.mark.parametrize("name", scenarios.SCENARIOS)
def test_shipped_scenarios_give_admissible_defects(name):
    E, R = estimate_numerical_defect(_run(name))
    assert np.all(E.values >= 0.0)
    assert psd_check(R).ok
    assert compatibility_check(E, R, 1, 1).ok


def test_relaxation_defect_shrinks_under_refinement():
    totals = []
    for n in (25, 50, 100):
        E, _ = estimate_numerical_defect(_run("viscous-relaxation", n=n, nu=0.5))
        totals.append(E.values.sum())
    assert totals[0] / totals[1] >= 1.8 and totals[1] / totals[2] >= 1.8


def test_defect_snapshot_history():
    ledger = _run("viscous-relaxation", n=20)
    E0, _ = estimate_numerical_defect(ledger, step_index=0)
    assert np.all(E0.values == 0.0)
    E_last, _ = estimate_numerical_defect(ledger, step_index=-1)
    assert np.array_equal(E_last.values, estimate_numerical_defect(ledger)[0].values)


def test_defect_csv(tmp_path):
    E, R = estimate_numerical_defect(EnergyLedger(cell_defect=np.array([0.5, 0.0])), dim=2)
    path = tmp_path / "d.csv"
    write_defect_csv(E, R, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["cell", "energy", "R00", "R01", "R10", "R11"]
    assert rows[1] == ["0", "0.5", "0.25", "0", "0", "0.25"]
