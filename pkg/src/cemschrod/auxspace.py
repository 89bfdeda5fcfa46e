"""Local spectral problems on coarse elements and the auxiliary projection.

Auxiliary functions live in the broken space: each eigenvector is stored on
the nodes of its own coarse element (closure included) and is understood as
zero elsewhere, so functions of neighbouring elements never interact.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import AssembledOperator
from .grid import PeriodicGrid, extract_patch


class EigenSolveError(RuntimeError):
    pass


@dataclass(eq=False)
class LocalEigenSet:
    element: int
    dofs: np.ndarray  # global nodes of the element closure
    eigenvalues: np.ndarray  # l + 1 values, ascending; the last one is discarded
    vectors: np.ndarray  # (len(dofs), l), s-orthonormal
    A: sp.csr_matrix  # local a_j
    S: sp.csr_matrix  # local s_j

    @property
    def n_basis(self) -> int:
        return self.vectors.shape[1]

    @property
    def retained(self) -> np.ndarray:
        return self.eigenvalues[:-1]

    @property
    def first_discarded(self) -> float:
        return float(self.eigenvalues[-1])

    def project(self, v: np.ndarray) -> np.ndarray:
        """s_j-orthogonal projection of a local vector onto the retained eigenvectors."""
        return self.vectors @ (self.vectors.T @ (self.S @ v))


def solve_local_eigenproblem(
    grid: PeriodicGrid, a_op: AssembledOperator, s_op: AssembledOperator, j: int, l: int
) -> LocalEigenSet:
    """Smallest ``l + 1`` eigenpairs of ``a_j phi = lambda s_j phi`` on coarse element ``j``.

    Natural boundary conditions on the element: ``a_j`` and ``s_j`` are assembled
    from the element's own fine elements.
    """
    patch = extract_patch(grid, j, 0)
    n = patch.dofs.size
    if l < 1 or l > n:
        raise ValueError(f"need 1 <= l <= {n} local dofs, got l={l}")
    A = a_op.local(patch.fine_elements, patch.dofs)
    S = s_op.local(patch.fine_elements, patch.dofs)
    try:
        # Cholesky of S then a standard symmetric eigensolve
        w, vecs = sla.eigh(A.toarray(), S.toarray(), subset_by_index=[0, min(l, n - 1)], driver="gvx")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolveError(f"local eigenproblem failed on element {j}: {exc}") from exc
    if l == n:
        # complete local basis: nothing is discarded
        w = np.append(w, np.inf)
    return LocalEigenSet(element=j, dofs=patch.dofs, eigenvalues=w, vectors=vecs[:, :l], A=A, S=S)


@dataclass(eq=False)
class AuxiliarySpace:
    grid: PeriodicGrid
    local_sets: list
    l: int

    @property
    def Lambda(self) -> float:
        return compute_lambda(self)

    @property
    def dimension(self) -> int:
        return sum(e.n_basis for e in self.local_sets)

    def index(self, j: int, i: int) -> int:
        """Column of the (element j, eigenfunction i) pair, i counted from 0."""
        return j * self.l + i

    @property
    def coupling(self) -> sp.csc_matrix:
        """``B`` with ``B[:, (j, i)] = s_j(phi_j^i, .)`` on global nodes.

        For a conforming vector ``v``, ``B.T @ v`` gives the coordinates of
        ``pi v`` and ``s(pi u, pi v) = (B.T u) . (B.T v)``.
        """
        if not hasattr(self, "_coupling"):
            rows, cols, vals = [], [], []
            for e in self.local_sets:
                block = e.S @ e.vectors
                for i in range(e.n_basis):
                    rows.append(e.dofs)
                    cols.append(np.full(e.dofs.size, self.index(e.element, i)))
                    vals.append(block[:, i])
            n = self.grid.n_dofs
            self._coupling = sp.csc_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, self.dimension)
            )
        return self._coupling

    @property
    def coupling_rows(self) -> sp.csr_matrix:
        """``coupling`` in row-compressed form for cheap row gathers."""
        if not hasattr(self, "_coupling_rows"):
            self._coupling_rows = self.coupling.tocsr()
        return self._coupling_rows


def build_auxiliary_space(grid, a_op, s_op, l: int = 3) -> AuxiliarySpace:
    sets = [solve_local_eigenproblem(grid, a_op, s_op, j, l) for j in range(grid.n_coarse)]
    return AuxiliarySpace(grid=grid, local_sets=sets, l=l)


def compute_lambda(aux: AuxiliarySpace) -> float:
    """Smallest first-discarded eigenvalue over all coarse elements."""
    return min(e.first_discarded for e in aux.local_sets)


class Projection:
    """Block-diagonal s-orthogonal projection onto the auxiliary space.

    Broken vectors are concatenations of per-element local vectors in
    element order.
    """

    def __init__(self, aux: AuxiliarySpace):
        self.aux = aux
        self.offsets = np.cumsum([0] + [e.dofs.size for e in aux.local_sets])

    def split(self, w: np.ndarray) -> list:
        return [w[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    def break_up(self, v: np.ndarray) -> np.ndarray:
        """Restrict a conforming global vector to every element (broken representation)."""
        return np.concatenate([v[e.dofs] for e in self.aux.local_sets])

    def apply_broken(self, w: np.ndarray) -> np.ndarray:
        return np.concatenate([e.project(x) for e, x in zip(self.aux.local_sets, self.split(w))])

    def __call__(self, v: np.ndarray) -> np.ndarray:
        """Project a conforming global vector; the result is broken."""
        return self.apply_broken(self.break_up(v))

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        return self.aux.coupling.T @ v

    def s_inner(self, w1: np.ndarray, w2: np.ndarray) -> complex:
        return sum(np.vdot(x2, e.S @ x1) for e, x1, x2 in zip(self.aux.local_sets, self.split(w1), self.split(w2)))

    def s_norm(self, w: np.ndarray) -> float:
        return float(np.sqrt(abs(self.s_inner(w, w))))


def build_projection(aux: AuxiliarySpace) -> Projection:
    return Projection(aux)


def spectra_csv(aux: AuxiliarySpace) -> str:
    """Per-element eigenvalues lambda_1..lambda_{l+1}; Lambda on a leading comment line."""
    buf = io.StringIO()
    buf.write(f"# Lambda={float(compute_lambda(aux))!r}\n")
    buf.write("element," + ",".join(f"lambda_{i + 1}" for i in range(aux.l + 1)) + "\n")
    for e in aux.local_sets:
        buf.write(f"{e.element}," + ",".join(repr(float(x)) for x in e.eigenvalues) + "\n")
    return buf.getvalue()
