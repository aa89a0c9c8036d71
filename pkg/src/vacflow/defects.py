"""Cellwise energy and Reynolds defect fields.

Defects are atoms at cell centres: the energy defect holds one nonnegative
number per cell and the Reynolds defect one symmetric ``dim x dim`` matrix
per cell.
"""

from dataclasses import dataclass
import csv
from typing import Optional

import numpy as np

from .errors import DimensionError, DomainError

__all__ = [
    "EnergyDefectField",
    "ReynoldsDefectField",
    "PSD_TOL",
    "psd_check",
    "compatibility_check",
    "estimate_numerical_defect",
    "write_defect_csv",
]

PSD_TOL = 1e-12
COMPAT_TOL = 1e-12


@dataclass
class EnergyDefectField:
    values: np.ndarray
    label: str = "ledger surrogate"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DimensionError("energy defect must be one value per cell")
        if np.any(self.values < 0):
            raise DomainError("energy defect must be nonnegative in every cell")


@dataclass
class ReynoldsDefectField:
    values: np.ndarray
    label: str = "ledger surrogate"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise DimensionError("Reynolds defect must have shape (n_cells, dim, dim)")
        if not np.array_equal(v, np.swapaxes(v, 1, 2)):
            raise DimensionError("Reynolds defect must be symmetric in every cell")
        self.values = v

    @property
    def dim(self):
        return self.values.shape[1]

    @property
    def trace(self):
        return np.trace(self.values, axis1=1, axis2=2)


@dataclass
class PSDResult:
    ok: bool
    min_eigenvalue: float
    cell: int
    direction: np.ndarray

    def __bool__(self):
        return self.ok


def psd_check(field, tol=PSD_TOL):
    """Whether every cell has smallest eigenvalue ``>= -tol``.

    The witness is the cell with the smallest eigenvalue and the
    corresponding unit eigenvector.
    """
    R = field.values if isinstance(field, ReynoldsDefectField) else ReynoldsDefectField(field).values
    if R.shape[0] == 0:
        return PSDResult(True, np.inf, -1, np.zeros(0))
    w, v = np.linalg.eigh(R)
    cell = int(np.argmin(w[:, 0]))
    lam = float(w[cell, 0])
    direction = v[cell, :, 0]
    # fix the sign so the largest component is positive
    direction = direction * np.sign(direction[np.argmax(np.abs(direction))])
    return PSDResult(lam >= -tol, lam, cell, direction)


@dataclass
class CompatibilityResult:
    ok: bool
    worst_ratio: float
    worst_cell: int

    def __bool__(self):
        return self.ok


def compatibility_check(E, R, d_lo, d_hi, tol=COMPAT_TOL):
    """Whether ``d_lo * E <= tr R <= d_hi * E`` cellwise.

    The worst ratio is ``tr R / E`` at the cell that violates the bounds
    most (or is closest to violating them).
    """
    if not 0 < d_lo <= d_hi:
        raise DomainError("need 0 < d_lo <= d_hi")
    e = E.values if isinstance(E, EnergyDefectField) else np.asarray(E, dtype=float)
    tr = R.trace if isinstance(R, ReynoldsDefectField) else ReynoldsDefectField(R).trace
    if e.shape != tr.shape:
        raise DimensionError("energy and Reynolds defects need the same number of cells")
    lower = d_lo * e - tr
    upper = tr - d_hi * e
    excess = np.maximum(lower, upper)
    ok = bool(np.all(excess <= tol))
    if e.size == 0:
        return CompatibilityResult(True, np.nan, -1)
    cell = int(np.argmax(excess))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = tr[cell] / e[cell] if e[cell] != 0 else (np.nan if tr[cell] == 0 else np.inf)
    return CompatibilityResult(ok, float(ratio), cell)


def estimate_numerical_defect(ledger, dim=1, step_index: Optional[int] = None):
    """Surrogate pair ``(E_h, R_h)`` from an energy ledger.

    ``E_h`` is the positive part of the cellwise energy-balance residual
    accumulated up to the final step (or the stored snapshot
    ``step_index``); ``R_h = E_h / dim * I`` so that trace compatibility
    holds with ``d_lo = d_hi = 1``.
    """
    if step_index is None:
        cells = ledger.cell_defect
    else:
        cells = ledger.cell_defect_history[step_index]
    if cells is None:
        raise DomainError("ledger carries no cellwise defect; run the solver first")
    E = np.maximum(np.asarray(cells, dtype=float), 0.0)
    R = (E / dim)[:, None, None] * np.eye(dim)
    return EnergyDefectField(E), ReynoldsDefectField(R)


def write_defect_csv(E, R, path):
    """Rows ``cell, energy, R_ij...`` for every cell."""
    dim = R.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", "energy"] + [f"R{i}{j}" for i in range(dim) for j in range(dim)])
        for k in range(len(E.values)):
            w.writerow([k, f"{E.values[k]:.17g}"] + [f"{v:.17g}" for v in R.values[k].ravel()])
