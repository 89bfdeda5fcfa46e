"""Crank-Nicolson time stepping on the fine grid and in a multiscale space.

One step solves

    (i eps / dt M - A / 2) u^n = (i eps / dt M + A / 2) u^{n-1},

a Cayley transform of the Hermitian pencil (A, M), so both the M-norm and
the A-energy of the iterates are conserved up to round-off.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cembasis import MultiscaleSpace
from .grid import PeriodicGrid

DENSE_LIMIT = 3000


class StepError(RuntimeError):
    pass


@dataclass(eq=False)
class WaveField:
    values: np.ndarray  # complex; fine nodal values or reduced coefficients
    t: float
    eps: float
    grid: PeriodicGrid
    space: MultiscaleSpace | None = None

    @property
    def is_reduced(self) -> bool:
        return self.space is not None

    def fine(self) -> np.ndarray:
        return self.space.prolong(self.values) if self.is_reduced else self.values


@dataclass
class EvolutionConfig:
    dt: float
    T: float
    space: str = "multiscale"
    n_steps: int = field(init=False)

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.space not in ("multiscale", "fine"):
            raise ValueError(f"unknown space {self.space!r}")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-9 * self.T:
            n = math.ceil(self.T / self.dt)
        self.n_steps = int(n)
        self.dt = self.T / self.n_steps


def interpolate(grid: PeriodicGrid, func) -> np.ndarray:
    """Nodal interpolant of ``func`` on the periodic fine grid."""
    return np.asarray(func(grid.node_coordinates), dtype=complex)


def _split_solve(solve, b):
    """Apply a real factorization to a complex right-hand side."""
    if np.iscomplexobj(b):
        return solve(b.real) + 1j * solve(b.imag)
    return solve(b)


def elliptic_project(u0: WaveField, ms: MultiscaleSpace, a_op) -> WaveField:
    """Energy projection onto the multiscale space: ``A_ms c = P^T A u0``."""
    if u0.is_reduced:
        raise ValueError("elliptic projection expects a fine field")
    if u0.grid is not ms.grid:
        raise ValueError("field and multiscale space live on different grids")
    rhs = ms.P.T @ (a_op.matrix @ u0.values)
    try:
        if ms.n_basis <= DENSE_LIMIT:
            lu = sla.lu_factor(ms.A_ms.toarray(), check_finite=True)
            coeffs = _split_solve(lambda b: sla.lu_solve(lu, b), rhs)
        else:
            coeffs = _split_solve(spla.splu(ms.A_ms.tocsc()).solve, rhs)
    except (RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        raise StepError(f"multiscale stiffness is singular: {exc}") from exc
    return WaveField(np.asarray(coeffs, dtype=complex), u0.t, u0.eps, u0.grid, ms)


class CrankNicolson:
    """Factorizes the implicit CN matrix once and reuses it for every step."""

    def __init__(self, M, A, eps: float, dt: float):
        self.M = sp.csr_matrix(M)
        self.A = sp.csr_matrix(A)
        self.eps = eps
        self.dt = dt
        alpha = 1j * eps / dt
        lhs = alpha * self.M - 0.5 * self.A
        self.rhs_op = (alpha * self.M + 0.5 * self.A).tocsr()
        n = lhs.shape[0]
        try:
            if n <= DENSE_LIMIT:
                lu = sla.lu_factor(lhs.toarray())
                self._solve = lambda b: sla.lu_solve(lu, b)
            else:
                self._solve = spla.splu(lhs.tocsc()).solve
        except (RuntimeError, np.linalg.LinAlgError) as exc:
            raise StepError(f"CN factorization failed: {exc}") from exc

    def step(self, u: np.ndarray) -> np.ndarray:
        return self._solve(self.rhs_op @ np.asarray(u, dtype=complex))


_STEPPERS: dict = {}


def cn_step(u_prev: WaveField, eps: float, dt: float, M, A) -> WaveField:
    """Advance one CN step; the factorization is cached per (M, A, eps, dt)."""
    key = (id(M), id(A), eps, dt)
    entry = _STEPPERS.get(key)
    if entry is None or entry[0] is not M or entry[1] is not A:
        if len(_STEPPERS) >= 4:
            _STEPPERS.pop(next(iter(_STEPPERS)))
        entry = (M, A, CrankNicolson(M, A, eps, dt))
        _STEPPERS[key] = entry
    new = entry[2].step(u_prev.values)
    return WaveField(new, u_prev.t + dt, u_prev.eps, u_prev.grid, u_prev.space)


@dataclass
class Trajectory:
    snapshots: list  # WaveField at t = 0, requested cadence, and T
    mass: np.ndarray  # ||u^n||_M^2 for every step
    energy: np.ndarray  # (u^n)^H A u^n for every step
    config: EvolutionConfig

    @property
    def final(self) -> WaveField:
        return self.snapshots[-1]

    def drift(self) -> tuple:
        """Largest relative deviation of mass and energy from their initial values."""
        dm = np.max(np.abs(self.mass - self.mass[0])) / abs(self.mass[0]) if self.mass[0] else 0.0
        de = np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]) if self.energy[0] else 0.0
        return float(dm), float(de)


def run_cn(
    config: EvolutionConfig,
    u0,
    grid: PeriodicGrid,
    m_op,
    a_op,
    eps: float,
    ms: MultiscaleSpace | None = None,
    snapshot_every: int | None = None,
) -> Trajectory:
    """Evolve initial data ``u0`` (callable or nodal array) to ``config.T``.

    The fine space starts from the nodal interpolant; the multiscale space from
    its elliptic projection.
    """
    values = interpolate(grid, u0) if callable(u0) else np.asarray(u0, dtype=complex)
    field0 = WaveField(values, 0.0, eps, grid)
    if config.space == "multiscale":
        if ms is None:
            raise ValueError("multiscale run needs a MultiscaleSpace")
        field0 = elliptic_project(field0, ms, a_op)
        M, A = ms.M_ms, ms.A_ms
    else:
        M, A = m_op.matrix, a_op.matrix

    stepper = CrankNicolson(M, A, eps, config.dt)
    u = field0.values
    mass = np.empty(config.n_steps + 1)
    energy = np.empty(config.n_steps + 1)
    mass[0] = np.vdot(u, M @ u).real
    energy[0] = np.vdot(u, A @ u).real
    snaps = [field0]
    for n in range(1, config.n_steps + 1):
        try:
            u = stepper.step(u)
        except Exception as exc:  # noqa: BLE001 - re-raised with the step index
            raise StepError(f"CN step {n} failed: {exc}") from exc
        if not np.all(np.isfinite(u)):
            raise StepError(f"CN step {n} produced non-finite values")
        mass[n] = np.vdot(u, M @ u).real
        energy[n] = np.vdot(u, A @ u).real
        t = n * config.dt
        if n == config.n_steps or (snapshot_every and n % snapshot_every == 0):
            snaps.append(WaveField(u, t, eps, grid, field0.space))
    return Trajectory(snaps, mass, energy, config)


def write_field(path, values: np.ndarray, grid: PeriodicGrid, t: float, eps: float) -> None:
    """Header ``d nx [ny] t eps``, then one ``re im`` pair per node in grid order (x fastest)."""
    values = np.asarray(values, dtype=complex)
    if values.size != grid.n_dofs:
        raise ValueError("field size does not match the grid")
    header = [str(grid.dim)] + [str(n) for n in grid.fine_counts] + [repr(float(t)), repr(float(eps))]
    with open(path, "w") as fh:
        fh.write(" ".join(header) + "\n")
        for z in values:
            fh.write(f"{float(z.real)!r} {float(z.imag)!r}\n")


def read_field(path) -> dict:
    with open(path) as fh:
        head = fh.readline().split()
        d = int(head[0])
        counts = tuple(int(x) for x in head[1 : 1 + d])
        t, eps = float(head[1 + d]), float(head[2 + d])
        data = np.loadtxt(fh, ndmin=2)
    return {"dim": d, "counts": counts, "t": t, "eps": eps, "values": data[:, 0] + 1j * data[:, 1]}
