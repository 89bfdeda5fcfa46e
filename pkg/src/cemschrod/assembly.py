"""Conforming P1/Q1 operators on a periodic fine grid.

All matrices are real symmetric; complex wave fields are handled by the
callers. Every operator keeps its element matrices so that restrictions to
a patch with natural boundary conditions can be re-assembled from the
patch's own elements only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .grid import Patch, PeriodicGrid

KINDS = ("stiffness_scaled", "stiffness", "potential_mass", "weighted_mass_s", "l2_mass", "hamiltonian_a")


@lru_cache(maxsize=None)
def reference_quadrature(d: int, order: int):
    """Tensor Gauss-Legendre rule on [0, 1]^d plus Q1 shape values and gradients.

    Returns ``(points, weights, values, grads)`` with shapes ``(nq, d)``,
    ``(nq,)``, ``(nq, 2**d)`` and ``(nq, 2**d, d)``.
    """
    x1, w1 = np.polynomial.legendre.leggauss(order)
    x1 = 0.5 * (x1 + 1.0)
    w1 = 0.5 * w1
    grids = np.meshgrid(*([x1] * d), indexing="ij")
    pts = np.stack([g.transpose().ravel() for g in grids], axis=1)
    wgrid = np.meshgrid(*([w1] * d), indexing="ij")
    wts = np.prod(np.stack([g.transpose().ravel() for g in wgrid], axis=1), axis=1)

    corners = np.array([[(a >> k) & 1 for k in range(d)] for a in range(2**d)])
    # 1D hats: L0 = 1 - t, L1 = t
    lin = np.where(corners[None, :, :] == 1, pts[:, None, :], 1.0 - pts[:, None, :])
    dlin = np.where(corners[None, :, :] == 1, 1.0, -1.0) * np.ones_like(lin)
    values = np.prod(lin, axis=2)
    grads = np.empty(lin.shape)
    for k in range(d):
        g = dlin[:, :, k].copy()
        for kk in range(d):
            if kk != k:
                g = g * lin[:, :, kk]
        grads[:, :, k] = g
    return pts, wts, values, grads


def quadrature_points(grid: PeriodicGrid, order: int = 2) -> np.ndarray:
    """Physical quadrature points of every fine element, shape (n_fine_elements, nq, d)."""
    pts, _, _, _ = reference_quadrature(grid.dim, order)
    return grid.element_origins()[:, None, :] + pts[None, :, :] * grid.h[None, None, :]


@dataclass(eq=False)
class AssembledOperator:
    kind: str
    grid: PeriodicGrid
    matrix: sp.csr_matrix
    element_matrices: np.ndarray  # (n_elements, 2**d, 2**d)
    params: dict = field(default_factory=dict)
    patch: Patch | None = None
    bc: str | None = None

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def local(self, fine_elements: np.ndarray, dofs: np.ndarray) -> sp.csr_matrix:
        """Assemble over ``fine_elements`` only, numbered by position in ``dofs`` (natural BC)."""
        lookup = np.full(self.grid.n_dofs, -1, dtype=np.int64)
        lookup[dofs] = np.arange(dofs.size)
        conn = lookup[self.grid.connectivity[fine_elements]]
        if np.any(conn < 0):
            raise ValueError("element nodes missing from the dof list")
        return _scatter(self.element_matrices[fine_elements], conn, dofs.size)

    def dump(self, path) -> None:
        """Write the operator as ``row col value`` text, one nonzero per line."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"# kind={self.kind} shape={coo.shape[0]}x{coo.shape[1]} nnz={coo.nnz}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {float(v)!r}\n")


def _scatter(elem_mats: np.ndarray, conn: np.ndarray, n: int) -> sp.csr_matrix:
    nloc = conn.shape[1]
    rows = np.repeat(conn, nloc, axis=1).ravel()
    cols = np.tile(conn, (1, nloc)).ravel()
    mat = sp.coo_matrix((elem_mats.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    # duplicate summation order can differ between (p, q) and (q, p)
    return ((mat + mat.T) * 0.5).tocsr()


def _make(kind, grid, elem_mats, **params) -> AssembledOperator:
    return AssembledOperator(
        kind=kind,
        grid=grid,
        matrix=_scatter(elem_mats, grid.connectivity, grid.n_dofs),
        element_matrices=elem_mats,
        params=params,
    )


def _laplace_element(grid: PeriodicGrid, order: int = 2) -> np.ndarray:
    _, wts, _, grads = reference_quadrature(grid.dim, order)
    g = grads / grid.h[None, None, :]
    return grid.element_volume * np.einsum("q,qak,qbk->ab", wts, g, g)


def _coefficient_mass(grid: PeriodicGrid, coef: np.ndarray, order: int) -> np.ndarray:
    _, wts, vals, _ = reference_quadrature(grid.dim, order)
    coef = np.asarray(coef, dtype=float)
    if coef.ndim == 0:
        coef = np.full((grid.n_fine_elements, wts.size), float(coef))
    if coef.shape != (grid.n_fine_elements, wts.size):
        raise ValueError(f"coefficient shape {coef.shape} does not match quadrature {(grid.n_fine_elements, wts.size)}")
    return grid.element_volume * np.einsum("q,eq,qa,qb->eab", wts, coef, vals, vals)


def assemble_laplacian(grid: PeriodicGrid) -> AssembledOperator:
    """Unscaled stiffness ``(grad u, grad v)``; used for H1 norms."""
    ke = _laplace_element(grid)
    return _make("stiffness", grid, np.broadcast_to(ke, (grid.n_fine_elements,) + ke.shape).copy())


def assemble_stiffness(grid: PeriodicGrid, eps: float) -> AssembledOperator:
    """Scaled stiffness ``0.5 eps^2 (grad u, grad v)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    ke = 0.5 * eps**2 * _laplace_element(grid)
    return _make(
        "stiffness_scaled", grid, np.broadcast_to(ke, (grid.n_fine_elements,) + ke.shape).copy(), eps=eps
    )


def assemble_mass(grid: PeriodicGrid) -> AssembledOperator:
    return _make("l2_mass", grid, _coefficient_mass(grid, 1.0, 2))


def evaluate_on_quadrature(grid: PeriodicGrid, func, order: int = 2) -> np.ndarray:
    """Evaluate a callable ``func(points)`` (points shape (..., d)) at the fine quadrature points."""
    pts = quadrature_points(grid, order)
    vals = np.asarray(func(pts), dtype=float)
    return np.broadcast_to(vals, pts.shape[:2])


def assemble_potential_mass(grid: PeriodicGrid, V, order: int = 2) -> AssembledOperator:
    """``(V u, v)`` by tensor Gauss quadrature with ``order`` points per axis.

    ``V`` is a callable of the physical points or an array of values at the
    quadrature points, shape (n_fine_elements, order**d).
    """
    if order < 2:
        raise ValueError("quadrature order must be >= 2")
    vals = evaluate_on_quadrature(grid, V, order) if callable(V) else np.asarray(V, dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential has non-finite values at quadrature points")
    return _make("potential_mass", grid, _coefficient_mass(grid, vals, order), order=order)


def assemble_hamiltonian(grid: PeriodicGrid, eps: float, V, order: int = 2) -> AssembledOperator:
    """``a(u, v) = 0.5 eps^2 (grad u, grad v) + (V u, v)``."""
    return combine(assemble_stiffness(grid, eps), assemble_potential_mass(grid, V, order))


def combine(stiffness: AssembledOperator, potential: AssembledOperator) -> AssembledOperator:
    op = _make("hamiltonian_a", stiffness.grid, stiffness.element_matrices + potential.element_matrices)
    op.params = {**stiffness.params, **potential.params}
    return op


@dataclass(frozen=True)
class WeightFunction:
    """Spectral weight mu~ for the local eigenproblems.

    ``constant`` is 12 eps^2 / H^2 per coarse element; ``exact_lagrange`` is
    ``sum_k 0.5 eps^2 |grad eta_k|^2`` over the coarse element's Q1 hats.
    """

    eps: float
    mode: str = "constant"

    def __post_init__(self):
        if self.mode not in ("constant", "exact_lagrange"):
            raise ValueError(f"unknown weight mode {self.mode!r}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")

    def constant_value(self, grid: PeriodicGrid) -> float:
        return 12.0 * self.eps**2 / float(np.max(grid.H)) ** 2

    def evaluate(self, grid: PeriodicGrid, order: int = 2) -> np.ndarray:
        pts = quadrature_points(grid, order)
        if self.mode == "constant":
            return np.full(pts.shape[:2], self.constant_value(grid))
        # coarse-local coordinates of each quadrature point
        t = ((pts - grid.origin) / grid.H) % 1.0
        total = np.zeros(pts.shape[:2])
        for k in range(grid.dim):
            # sum over corners of |d eta / dx_k|^2 = 2 / H_k^2 * prod_{kk != k} ((1-t)^2 + t^2)
            term = np.full(pts.shape[:2], 2.0 / grid.H[k] ** 2)
            for kk in range(grid.dim):
                if kk != k:
                    term = term * ((1.0 - t[..., kk]) ** 2 + t[..., kk] ** 2)
            total += term
        return 0.5 * self.eps**2 * total


def assemble_weighted_mass(grid: PeriodicGrid, weight: WeightFunction, order: int = 2) -> AssembledOperator:
    """``s(u, v) = (mu~ u, v)``."""
    op = _make("weighted_mass_s", grid, _coefficient_mass(grid, weight.evaluate(grid, order), order))
    op.params = {"eps": weight.eps, "mode": weight.mode}
    return op


def restrict(op: AssembledOperator, patch: Patch, bc: str = "zero_trace") -> AssembledOperator:
    """Restrict a global operator to a patch.

    ``zero_trace`` keeps the principal submatrix on the patch's interior nodes;
    ``none`` re-assembles over the patch's fine elements with natural boundary
    conditions, numbered like ``patch.dofs``.
    """
    if patch.grid is not op.grid:
        raise ValueError("patch was built on a different grid")
    if op.patch is not None:
        raise ValueError("operator is already restricted")
    if bc == "zero_trace":
        keep = patch.dofs[patch.interior]
        mat = op.matrix[keep][:, keep].tocsr()
    elif bc == "none":
        mat = op.local(patch.fine_elements, patch.dofs)
    else:
        raise ValueError(f"unknown boundary condition {bc!r}")
    return AssembledOperator(
        kind=op.kind,
        grid=op.grid,
        matrix=mat,
        element_matrices=op.element_matrices[patch.fine_elements],
        params=dict(op.params),
        patch=patch,
        bc=bc,
    )
