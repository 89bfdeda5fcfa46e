"""Localized CEM basis functions and the multiscale space they span.

On the oversampled patch ``K_j^m`` (zero trace on its boundary) every basis
function of element ``j`` solves the relaxed minimization system

    (A + B B^T) psi = B e_(j,i),

where ``B`` holds ``s_k(phi_k^i, .)`` for the auxiliary functions of the
patch's elements. ``B B^T`` is a dense block per coarse element. Small blocks
are added to ``A`` and factorized together. Large blocks go through the
Woodbury identity ``(A + B B^T)^{-1} B = X (I + B^T X)^{-1}`` with
``X = A^{-1} B``, so only the sparse patch Hamiltonian is factorized.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssembledOperator
from .auxspace import AuxiliarySpace
from .grid import PeriodicGrid, extract_patch

log = logging.getLogger(__name__)

CG_THRESHOLD = 200_000
# nodes per coarse element above which the auxiliary term is applied by Woodbury
WOODBURY_BLOCK = 200


class PatchSolveError(RuntimeError):
    pass


def default_oversampling(H: float, side: float = 1.0) -> int:
    """Oversampling layers ``(2/3) log2(side / H)`` rounded to the nearest integer (at least 1)."""
    return max(1, int(math.floor(2.0 / 3.0 * math.log2(side / H) + 0.5)))


def full_cover_layers(grid: PeriodicGrid) -> int:
    """Smallest ``m`` whose patches cover the whole domain."""
    return max(n // 2 for n in grid.coarse_counts)


def _patch_columns(aux: AuxiliarySpace, elements) -> np.ndarray:
    return np.array([aux.index(k, i) for k in elements for i in range(aux.l)], dtype=np.int64)


def solve_patch(grid, a_op: AssembledOperator, aux: AuxiliarySpace, j: int, m: int, solver: str = "auto"):
    """All ``l`` basis functions of element ``j`` on its ``m``-layer patch.

    ``solver`` is ``direct`` (factorize ``A + B B^T``), ``woodbury`` (factorize
    ``A`` only), ``cg`` or ``auto``. Returns ``(nodes, values)``: the global
    interior nodes of the patch and an array of shape ``(len(nodes), l)``.
    """
    patch = extract_patch(grid, j, m)
    keep = patch.dofs[patch.interior]
    A = a_op.matrix[keep][:, keep].tocsc()
    cols = _patch_columns(aux, patch.elements)
    B = aux.coupling_rows[keep][:, cols].tocsc()
    target = np.searchsorted(cols, [aux.index(j, i) for i in range(aux.l)])
    if solver == "auto":
        if keep.size > CG_THRESHOLD:
            solver = "cg"
        elif np.prod(np.array(grid.refinement) + 1) > WOODBURY_BLOCK:
            solver = "woodbury"
        else:
            solver = "direct"
    try:
        if solver == "direct":
            lu = spla.splu((A + B @ B.T).tocsc(), permc_spec="MMD_AT_PLUS_A")
            psi = lu.solve(B[:, target].toarray())
        elif solver == "woodbury":
            Bd = B.toarray()
            X = spla.splu(A, permc_spec="MMD_AT_PLUS_A").solve(Bd)
            C = np.eye(cols.size) + Bd.T @ X
            E = np.zeros((cols.size, target.size))
            E[target, np.arange(target.size)] = 1.0
            psi = X @ sla.solve(C, E)
        elif solver == "cg":
            psi = _solve_cg(A, B.toarray(), target)
        else:
            raise ValueError(f"unknown patch solver {solver!r}")
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise PatchSolveError(f"patch system for element {j} (m={m}) failed: {exc}") from exc
    if not np.all(np.isfinite(psi)):
        raise PatchSolveError(f"non-finite basis on element {j} (m={m})")
    return keep, psi


def _solve_cg(A, B, target):
    op = spla.LinearOperator(A.shape, matvec=lambda x: A @ x + B @ (B.T @ x), dtype=float)
    diag = A.diagonal() + np.einsum("ij,ij->i", B, B)
    prec = spla.LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=float)
    out = np.empty((A.shape[0], target.size))
    for c, t in enumerate(target):
        x, info = spla.cg(op, B[:, t], rtol=1e-12, atol=0.0, M=prec, maxiter=20 * A.shape[0])
        if info != 0:
            raise RuntimeError(f"CG did not converge (info={info})")
        out[:, c] = x
    return out


def solve_cem_basis(grid, a_op, s_op, aux: AuxiliarySpace, j: int, i: int, m: int) -> np.ndarray:
    """Basis function ``psi_{j,m}^i`` extended by zero to the whole fine grid."""
    if s_op is not None and s_op.grid is not grid:
        raise ValueError("weighted mass built on a different grid")
    nodes, psi = solve_patch(grid, a_op, aux, j, m)
    out = np.zeros(grid.n_dofs)
    out[nodes] = psi[:, i]
    return out


def _sym(mat):
    return ((mat + mat.T) * 0.5).tocsr()


@dataclass(eq=False)
class MultiscaleSpace:
    grid: PeriodicGrid
    P: sp.csc_matrix  # (n_dofs, n_basis)
    layers: int
    A_ms: sp.csr_matrix
    M_ms: sp.csr_matrix
    Lambda: float
    aux: AuxiliarySpace | None = None
    S_ms: sp.csr_matrix | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_basis(self) -> int:
        return self.P.shape[1]

    def prolong(self, coeffs: np.ndarray) -> np.ndarray:
        return self.P @ coeffs

    def compressed(self, rtol: float = 1e-10) -> "MultiscaleSpace":
        """Same span with an L2-orthonormal basis, dropping dependent directions."""
        w, V = sla.eigh(self.M_ms.toarray())
        keep = w > rtol * w.max()
        Q = V[:, keep] / np.sqrt(w[keep])
        P = sp.csc_matrix(self.P @ Q)
        return MultiscaleSpace(
            grid=self.grid,
            P=P,
            layers=self.layers,
            A_ms=sp.csr_matrix(Q.T @ (self.A_ms @ Q)),
            M_ms=sp.csr_matrix(Q.T @ (self.M_ms @ Q)),
            Lambda=self.Lambda,
            aux=self.aux,
            meta={**self.meta, "compressed_from": self.n_basis},
        )


def build_multiscale_space(
    grid, a_op, s_op, m_op, aux: AuxiliarySpace, m: int, threads: int = 1, with_s: bool = False
) -> MultiscaleSpace:
    """Solve every patch problem and assemble ``P``, ``P^T A P`` and ``P^T M P``."""
    if a_op.grid is not grid or m_op.grid is not grid or aux.grid is not grid:
        raise ValueError("operators and auxiliary space must share the grid")

    def work(j):
        return solve_patch(grid, a_op, aux, j, m)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, range(grid.n_coarse)))
    else:
        results = [work(j) for j in range(grid.n_coarse)]

    rows, cols, vals = [], [], []
    for j, (nodes, psi) in enumerate(results):
        for i in range(psi.shape[1]):
            rows.append(nodes)
            cols.append(np.full(nodes.size, aux.index(j, i)))
            vals.append(psi[:, i])
    P = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.n_dofs, aux.dimension)
    )
    A_ms = _sym(P.T @ (a_op.matrix @ P))
    M_ms = _sym(P.T @ (m_op.matrix @ P))
    S_ms = _sym(P.T @ (s_op.matrix @ P)) if with_s else None
    log.info("multiscale space: %d basis functions, m=%d, nnz(P)=%d", P.shape[1], m, P.nnz)
    return MultiscaleSpace(grid=grid, P=P, layers=m, A_ms=A_ms, M_ms=M_ms, Lambda=aux.Lambda, aux=aux, S_ms=S_ms)


def a_norm(a_op: AssembledOperator, v: np.ndarray) -> float:
    return float(np.sqrt(abs(np.vdot(v, a_op.matrix @ v).real)))


def fit_decay_rate(layers, errors) -> float:
    """Least-squares geometric rate ``theta`` in ``err ~ C theta^m`` over the positive errors."""
    layers = np.asarray(layers, dtype=float)
    errors = np.asarray(errors, dtype=float)
    ok = errors > 0
    if ok.sum() < 2:
        return float("nan")
    slope = np.polyfit(layers[ok], np.log(errors[ok]), 1)[0]
    return float(np.exp(slope))


def decay_study(grid, a_op, s_op, aux: AuxiliarySpace, j: int, i: int, m_list) -> tuple:
    """Energy error of ``psi_{j,m}^i`` against the global basis for each ``m``.

    Returns ``(rows, theta)`` where rows are ``(m, error)`` pairs.
    """
    reference = solve_cem_basis(grid, a_op, s_op, aux, j, i, full_cover_layers(grid))
    rows = []
    for m in m_list:
        psi = solve_cem_basis(grid, a_op, s_op, aux, j, i, m)
        rows.append((int(m), a_norm(a_op, reference - psi)))
    theta = fit_decay_rate([r[0] for r in rows], [r[1] for r in rows])
    return rows, theta


def decay_csv(rows, theta) -> str:
    lines = ["m,error_a,theta"]
    lines += [f"{m},{float(err)!r},{float(theta)!r}" for m, err in rows]
    return "\n".join(lines) + "\n"
