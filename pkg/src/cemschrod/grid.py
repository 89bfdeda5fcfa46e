"""Nested periodic tensor meshes and oversampled coarse patches.

Fine nodes are numbered with the x index running fastest,
``node = ix + nx * iy``; coarse and fine elements use the same convention.
Nodes on opposite faces of the box are identified, so an axis with ``n``
fine elements carries exactly ``n`` nodes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

_MAX_INDEX = np.iinfo(np.int64).max // 64


def _as_axis_tuple(value, d, name):
    arr = np.atleast_1d(np.asarray(value))
    if arr.size == 1:
        arr = np.repeat(arr, d)
    if arr.size != d:
        raise ValueError(f"{name} needs {d} entries, got {arr.size}")
    return arr


@dataclass(frozen=True, eq=False)
class PeriodicGrid:
    """Uniform coarse mesh with an ``r``-fold uniform refinement, periodic in every axis."""

    box: tuple  # ((a1, b1), (a2, b2), ...)
    coarse_counts: tuple
    refinement: tuple

    @property
    def dim(self) -> int:
        return len(self.coarse_counts)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.box], dtype=float)

    @cached_property
    def origin(self) -> np.ndarray:
        return np.array([a for a, _ in self.box], dtype=float)

    @cached_property
    def H(self) -> np.ndarray:
        """Coarse mesh size per axis."""
        return self.lengths / np.array(self.coarse_counts)

    @cached_property
    def h(self) -> np.ndarray:
        """Fine mesh size per axis."""
        return self.H / np.array(self.refinement)

    @cached_property
    def fine_counts(self) -> tuple:
        return tuple(int(n * r) for n, r in zip(self.coarse_counts, self.refinement))

    @property
    def n_coarse(self) -> int:
        return int(np.prod(self.coarse_counts))

    @property
    def n_fine_elements(self) -> int:
        return int(np.prod(self.fine_counts))

    @property
    def n_dofs(self) -> int:
        # periodic identification: as many nodes as fine elements per axis
        return int(np.prod(self.fine_counts))

    @property
    def element_volume(self) -> float:
        return float(np.prod(self.h))

    # -- index helpers -----------------------------------------------------

    def ravel(self, idx, counts) -> np.ndarray:
        """Multi-index (tuple of arrays, x first) to flat index with x fastest."""
        flat = np.zeros_like(np.asarray(idx[0]), dtype=np.int64)
        stride = 1
        for k in range(self.dim):
            flat = flat + (np.asarray(idx[k]) % counts[k]) * stride
            stride *= counts[k]
        return flat

    def unravel(self, flat, counts) -> tuple:
        flat = np.asarray(flat, dtype=np.int64)
        out = []
        for k in range(self.dim):
            out.append(flat % counts[k])
            flat = flat // counts[k]
        return tuple(out)

    @cached_property
    def local_corners(self) -> np.ndarray:
        """Reference-element vertex offsets, shape (2**d, d), x fastest."""
        return np.array(
            [[(a >> k) & 1 for k in range(self.dim)] for a in range(2**self.dim)],
            dtype=np.int64,
        )

    @cached_property
    def connectivity(self) -> np.ndarray:
        """Global node indices of every fine element, shape (n_fine_elements, 2**d)."""
        elem = self.unravel(np.arange(self.n_fine_elements), self.fine_counts)
        cols = []
        for corner in self.local_corners:
            cols.append(self.ravel([elem[k] + corner[k] for k in range(self.dim)], self.fine_counts))
        return np.stack(cols, axis=1)

    @cached_property
    def node_coordinates(self) -> np.ndarray:
        """Physical coordinates of the periodic nodes, shape (n_dofs, d)."""
        idx = self.unravel(np.arange(self.n_dofs), self.fine_counts)
        return np.stack([self.origin[k] + idx[k] * self.h[k] for k in range(self.dim)], axis=1)

    def element_origins(self) -> np.ndarray:
        """Lower-left corners of the fine elements, shape (n_fine_elements, d)."""
        idx = self.unravel(np.arange(self.n_fine_elements), self.fine_counts)
        return np.stack([self.origin[k] + idx[k] * self.h[k] for k in range(self.dim)], axis=1)

    def coarse_of_fine(self) -> np.ndarray:
        """Coarse element containing each fine element."""
        idx = self.unravel(np.arange(self.n_fine_elements), self.fine_counts)
        return self.ravel([idx[k] // self.refinement[k] for k in range(self.dim)], self.coarse_counts)

    def fine_elements_of(self, j: int) -> np.ndarray:
        """Fine elements making up coarse element ``j``."""
        return self.fine_elements_of_box(self.unravel(j, self.coarse_counts), 0)

    def fine_elements_of_box(self, center, m) -> np.ndarray:
        ranges = []
        for k in range(self.dim):
            nc, r = self.coarse_counts[k], self.refinement[k]
            if 2 * m + 1 >= nc:
                ranges.append(np.arange(nc * r))
            else:
                start = (int(center[k]) - m) * r
                ranges.append(np.arange(start, start + (2 * m + 1) * r))
        mesh = np.meshgrid(*ranges, indexing="ij")
        # x fastest in the flattened result
        mesh = [g.transpose().ravel() for g in mesh]
        return self.ravel(mesh, self.fine_counts)


def build_grid(d, box, coarse_counts, refinement) -> PeriodicGrid:
    """Build a nested periodic tensor grid.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 or 2.
    box : sequence
        ``(a, b)`` for 1D, or one ``(a, b)`` pair per axis.
    coarse_counts, refinement : int or sequence of int
        Coarse elements per axis and fine elements per coarse element per axis.
    """
    if d not in (1, 2):
        raise ValueError("only d = 1 and d = 2 are supported")
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = np.tile(box, (d, 1))
    if box.shape != (d, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError(f"invalid domain box {box.tolist()}")
    nc = _as_axis_tuple(coarse_counts, d, "coarse_counts")
    r = _as_axis_tuple(refinement, d, "refinement")
    if np.any(nc != np.round(nc)) or np.any(r != np.round(r)):
        raise ValueError("coarse counts and refinement must be integers")
    if np.any(nc < 2):
        raise ValueError("need at least 2 coarse elements per axis")
    if np.any(r < 1):
        raise ValueError("refinement factor must be >= 1")
    n_total = 1
    for a, b in zip(nc, r):
        n_total *= int(a) * int(b)
    if n_total > _MAX_INDEX:
        raise ValueError("refinement overflows the index space")
    return PeriodicGrid(
        box=tuple((float(a), float(b)) for a, b in box),
        coarse_counts=tuple(int(x) for x in nc),
        refinement=tuple(int(x) for x in r),
    )


def check_resolution(grid: PeriodicGrid, eps: float, delta: float | None = None) -> bool:
    """Warn when the fine mesh is coarser than a quarter of the smallest physical scale."""
    scale = eps if delta is None else min(eps, delta)
    if np.max(grid.h) > scale / 4:
        warnings.warn(
            f"fine mesh h={np.max(grid.h):.4g} under-resolves scale {scale:.4g} (h > scale/4)",
            stacklevel=2,
        )
        return False
    return True


@dataclass(frozen=True, eq=False)
class Patch:
    """Coarse element ``center`` enlarged by ``layers`` rings of coarse neighbours."""

    grid: PeriodicGrid
    center: int
    layers: int
    elements: np.ndarray  # coarse element indices, sorted
    fine_elements: np.ndarray
    dofs: np.ndarray  # global fine node indices; position = local index
    boundary: np.ndarray  # local indices of nodes on the patch boundary
    full_axes: tuple = field(default=())

    @property
    def covers_domain(self) -> bool:
        return all(self.full_axes)

    @cached_property
    def interior(self) -> np.ndarray:
        """Local indices of nodes not on the patch boundary."""
        mask = np.ones(self.dofs.size, dtype=bool)
        mask[self.boundary] = False
        return np.flatnonzero(mask)

    @cached_property
    def global_to_local(self) -> dict:
        return {int(g): i for i, g in enumerate(self.dofs)}

    def to_local(self, global_idx) -> np.ndarray:
        lookup = np.full(self.grid.n_dofs, -1, dtype=np.int64)
        lookup[self.dofs] = np.arange(self.dofs.size)
        return lookup[np.asarray(global_idx)]


def extract_patch(grid: PeriodicGrid, j: int, m: int) -> Patch:
    """Oversampled patch: all coarse elements within Chebyshev distance ``m`` of ``j``, wrapping periodically."""
    if not 0 <= j < grid.n_coarse:
        raise IndexError(f"coarse element {j} out of range [0, {grid.n_coarse})")
    if m < 0:
        raise ValueError("oversampling layers must be >= 0")
    center = grid.unravel(j, grid.coarse_counts)
    d = grid.dim

    coarse_ranges, node_ranges, full_axes, on_bdry = [], [], [], []
    for k in range(d):
        nc, r = grid.coarse_counts[k], grid.refinement[k]
        nf = nc * r
        full = 2 * m + 1 >= nc
        full_axes.append(full)
        if full:
            coarse_ranges.append(np.arange(nc))
            node_ranges.append(np.arange(nf))
            on_bdry.append(np.zeros(nf, dtype=bool))
        else:
            c0 = int(center[k]) - m
            coarse_ranges.append(np.arange(c0, c0 + 2 * m + 1) % nc)
            nodes = np.arange(c0 * r, (c0 + 2 * m + 1) * r + 1)
            node_ranges.append(nodes % nf)
            b = np.zeros(nodes.size, dtype=bool)
            b[[0, -1]] = True
            on_bdry.append(b)

    cmesh = [g.transpose().ravel() for g in np.meshgrid(*coarse_ranges, indexing="ij")]
    elements = np.sort(grid.ravel(cmesh, grid.coarse_counts))

    nmesh = [g.transpose().ravel() for g in np.meshgrid(*node_ranges, indexing="ij")]
    dofs = grid.ravel(nmesh, grid.fine_counts)
    bmesh = [g.transpose().ravel() for g in np.meshgrid(*on_bdry, indexing="ij")]
    boundary = np.flatnonzero(np.logical_or.reduce(bmesh))

    return Patch(
        grid=grid,
        center=int(j),
        layers=int(m),
        elements=elements,
        fine_elements=np.sort(grid.fine_elements_of_box(center, m)),
        dofs=dofs,
        boundary=boundary,
        full_axes=tuple(full_axes),
    )


def refine(grid: PeriodicGrid, factor: int) -> PeriodicGrid:
    """Same coarse mesh with every fine element split ``factor`` times per axis."""
    return PeriodicGrid(
        box=grid.box,
        coarse_counts=grid.coarse_counts,
        refinement=tuple(r * int(factor) for r in grid.refinement),
    )


def prolong_nodal(grid: PeriodicGrid, finer: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """Exact embedding of a P1/Q1 field on ``grid`` into the nested ``finer`` grid."""
    factors = np.array(finer.fine_counts) // np.array(grid.fine_counts)
    if np.any(factors * np.array(grid.fine_counts) != np.array(finer.fine_counts)) or finer.box != grid.box:
        raise ValueError("grids are not nested")
    idx = finer.unravel(np.arange(finer.n_dofs), finer.fine_counts)
    base = [idx[k] // factors[k] for k in range(grid.dim)]
    frac = [(idx[k] % factors[k]) / factors[k] for k in range(grid.dim)]
    out = np.zeros(finer.n_dofs, dtype=np.result_type(values, float))
    for corner in grid.local_corners:
        w = np.ones(finer.n_dofs)
        for k in range(grid.dim):
            w = w * (frac[k] if corner[k] else 1.0 - frac[k])
        out += w * values[grid.ravel([base[k] + corner[k] for k in range(grid.dim)], grid.fine_counts)]
    return out
