"""Observables, norms and error metrics on the fine grid."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    AssembledOperator,
    assemble_hamiltonian,
    assemble_laplacian,
    assemble_mass,
)
from .grid import PeriodicGrid

CSV_COLUMNS = (
    "experiment_id",
    "eps",
    "delta",
    "contrast",
    "H",
    "h",
    "m",
    "l",
    "dt",
    "err_l2",
    "err_h1",
    "err_a",
    "order_l2",
    "order_h1",
    "wall_time",
)


def position_density(u: np.ndarray) -> np.ndarray:
    return np.abs(u) ** 2


def energy_density(u: np.ndarray, grid: PeriodicGrid, eps: float, V, order: int = 2, a_op=None) -> np.ndarray:
    """Element-wise mean of ``eps^2/2 |grad u|^2 + V |u|^2``.

    Summing the result times the element volume reproduces ``u^H A u``.
    """
    if a_op is None:
        a_op = assemble_hamiltonian(grid, eps, V, order)
    ue = np.asarray(u)[grid.connectivity]
    local = np.einsum("ea,eab,eb->e", ue.conj(), a_op.element_matrices, ue).real
    return local / grid.element_volume


@dataclass(eq=False)
class NormOperators:
    mass: AssembledOperator
    laplacian: AssembledOperator
    hamiltonian: AssembledOperator

    @classmethod
    def build(cls, grid: PeriodicGrid, eps: float, V, order: int = 2, hamiltonian=None):
        return cls(
            mass=assemble_mass(grid),
            laplacian=assemble_laplacian(grid),
            hamiltonian=hamiltonian if hamiltonian is not None else assemble_hamiltonian(grid, eps, V, order),
        )

    def l2(self, v) -> float:
        return _qnorm(self.mass.matrix, v)

    def h1(self, v) -> float:
        return math.sqrt(_qnorm(self.mass.matrix, v) ** 2 + _qnorm(self.laplacian.matrix, v) ** 2)

    def a(self, v) -> float:
        return _qnorm(self.hamiltonian.matrix, v)


def _qnorm(mat, v) -> float:
    return math.sqrt(abs(np.vdot(v, mat @ v).real))


@dataclass
class ErrorReport:
    l2: float
    h1: float
    a: float
    meta: dict = field(default_factory=dict)


def relative_errors(u_test: np.ndarray, u_ref: np.ndarray, ops: NormOperators, **meta) -> ErrorReport:
    """Relative L2, H1 (unscaled gradient plus L2) and energy-norm errors."""
    if u_test.shape != u_ref.shape:
        raise ValueError("fields live on different grids")
    diff = np.asarray(u_test) - np.asarray(u_ref)
    norms = ops.l2(u_ref), ops.h1(u_ref), ops.a(u_ref)
    if min(norms[:2]) == 0.0:
        raise ZeroDivisionError("reference field has zero norm")
    return ErrorReport(
        l2=ops.l2(diff) / norms[0],
        h1=ops.h1(diff) / norms[1],
        a=ops.a(diff) / norms[2] if norms[2] > 0 else float("nan"),
        meta=meta,
    )


def convergence_order(errors) -> list:
    """Observed orders between consecutive ``(H, err)`` pairs, ``log(e_{k-1}/e_k) / log(H_{k-1}/H_k)``."""
    Hs = np.array([e[0] for e in errors], dtype=float)
    errs = np.array([e[1] for e in errors], dtype=float)
    if np.any(np.diff(Hs) >= 0):
        raise ValueError("H must be strictly decreasing")
    return [float(np.log(errs[k - 1] / errs[k]) / np.log(Hs[k - 1] / Hs[k])) for k in range(1, len(Hs))]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def rows_to_csv(rows, extra_columns=()) -> str:
    """CSV text for row dicts; the schema columns first, then ``extra_columns``."""
    cols = list(CSV_COLUMNS) + [c for c in extra_columns if c not in CSV_COLUMNS]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in cols])
    return buf.getvalue()
