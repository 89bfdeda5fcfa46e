"""Potentials and initial data for the benchmark problems."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

POTENTIAL_KINDS = ("smooth1d", "twoscale1d", "checkerboard2d", "inclusions2d", "constant", "custom")


@dataclass(frozen=True, eq=False)
class Potential:
    kind: str
    func: Callable
    params: dict = field(default_factory=dict)
    vmin: float = -np.inf
    vmax: float = np.inf
    dim: int = 1

    def __call__(self, x):
        """Evaluate at points ``x`` of shape ``(..., d)``."""
        return self.func(np.asarray(x, dtype=float))

    @property
    def delta(self) -> float | None:
        """Single scale for reporting: the smaller of the two oscillation scales."""
        scales = [self.params[k] for k in ("delta1", "delta2") if self.params.get(k) is not None]
        return min(scales) if scales else None

    @property
    def contrast(self) -> float | None:
        return self.params.get("contrast")


def _smooth1d(x):
    return 0.5 * (x[..., 0] - 1.0) ** 2


def _cell_lookup(values: np.ndarray, box) -> Callable:
    """Piecewise-constant field on a uniform cell lattice; ``values[iy, ix]``."""
    values = np.atleast_2d(values)
    ny, nx = values.shape
    (ax, bx) = box[0]
    (ay, by) = box[1] if len(box) > 1 else (0.0, 1.0)

    def f(x):
        ix = np.floor((x[..., 0] - ax) / (bx - ax) * nx).astype(np.int64) % nx
        if x.shape[-1] == 1:
            return values[0, ix]
        iy = np.floor((x[..., 1] - ay) / (by - ay) * ny).astype(np.int64) % ny
        return values[iy, ix]

    return f


def inclusion_layout(cells: int, seed: int, probability: float = 0.25) -> np.ndarray:
    """Boolean ``cells x cells`` inclusion mask; a pure function of its arguments."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.random((cells, cells)) < probability


def make_potential(kind: str, **params) -> Potential:
    """Build a catalog potential.

    ``smooth1d``: 0.5 (x - 1)^2.
    ``twoscale1d``: sin(x^2 / delta1) sin(pi x / delta2).
    ``checkerboard2d``: (cos(2 pi x / d) + 1)(cos(2 pi y / d) + 1) with d = delta2 on the
    lower-left and upper-right quarters of [0, 1]^2 and d = delta1 elsewhere.
    ``inclusions2d``: seeded Bernoulli cells at 1 / contrast on a background of 1.
    ``constant``: value ``c``.
    ``custom``: cell values from ``load_cell_map``.
    """
    if kind == "smooth1d":
        return Potential(kind, _smooth1d, {}, vmin=0.0, vmax=0.5, dim=1)

    if kind == "twoscale1d":
        d1, d2 = params.get("delta1", 0.25), params.get("delta2", 0.1)
        _check_positive(delta1=d1, delta2=d2)

        def f(x):
            x = x[..., 0]
            return np.sin(x**2 / d1) * np.sin(np.pi * x / d2)

        return Potential(kind, f, {"delta1": d1, "delta2": d2}, vmin=-1.0, vmax=1.0, dim=1)

    if kind == "checkerboard2d":
        d1, d2 = params.get("delta1", 0.125), params.get("delta2", 0.0625)
        _check_positive(delta1=d1, delta2=d2)

        def f(x):
            X, Y = x[..., 0], x[..., 1]
            diag = ((X <= 0.5) & (Y <= 0.5)) | ((X >= 0.5) & (Y >= 0.5))
            d = np.where(diag, d2, d1)
            return (np.cos(2 * np.pi * X / d) + 1.0) * (np.cos(2 * np.pi * Y / d) + 1.0)

        return Potential(kind, f, {"delta1": d1, "delta2": d2}, vmin=0.0, vmax=4.0, dim=2)

    if kind == "inclusions2d":
        contrast = params.get("contrast", 1e3)
        if contrast <= 1:
            raise ValueError("contrast must exceed 1")
        cells = int(params.get("cells", 20))
        seed = int(params.get("seed", 0))
        prob = float(params.get("probability", 0.25))
        mask = inclusion_layout(cells, seed, prob)
        values = np.where(mask, 1.0 / contrast, 1.0)
        box = params.get("box", ((0.0, 1.0), (0.0, 1.0)))
        return Potential(
            kind,
            _cell_lookup(values, box),
            {"contrast": contrast, "cells": cells, "seed": seed, "probability": prob},
            vmin=float(values.min()),
            vmax=float(values.max()),
            dim=2,
        )

    if kind == "constant":
        c = float(params.get("c", 1.0))
        dim = int(params.get("dim", 1))
        return Potential(kind, lambda x: np.full(x.shape[:-1], c), {"c": c}, vmin=c, vmax=c, dim=dim)

    if kind == "custom":
        values = np.asarray(params["values"], dtype=float)
        box = params.get("box", ((0.0, 1.0), (0.0, 1.0)))
        dim = 1 if values.ndim == 1 or values.shape[0] == 1 else 2
        return Potential(
            kind,
            _cell_lookup(values, box),
            {"path": params.get("path")},
            vmin=float(values.min()),
            vmax=float(values.max()),
            dim=dim,
        )

    raise ValueError(f"unknown potential kind {kind!r}")


def _check_positive(**values):
    for name, v in values.items():
        if v is None or v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")


def check_alignment(potential: Potential, h) -> bool:
    """Warn when oscillation periods of the potential are not multiples of the fine mesh size."""
    ok = True
    for key in ("delta1", "delta2"):
        d = potential.params.get(key)
        if d is None:
            continue
        for hk in np.atleast_1d(h):
            ratio = d / hk
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                warnings.warn(f"{key}={d} is not a multiple of h={hk}", stacklevel=2)
                ok = False
    return ok


def load_cell_map(path) -> np.ndarray:
    """Read a cell map: header ``nx [ny]`` then ``nx*ny`` values, rows of constant y, x fastest.

    Lines starting with ``#`` are ignored.
    """
    tokens = []
    header = None
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if header is None:
                header = [int(t) for t in line.split()]
                continue
            tokens.extend(line.split())
    if header is None:
        raise ValueError(f"{path}: missing header")
    nx = header[0]
    ny = header[1] if len(header) > 1 else 1
    vals = np.array(tokens, dtype=float)
    if vals.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {vals.size}")
    return vals.reshape(ny, nx) if len(header) > 1 else vals


def write_cell_map(path, values: np.ndarray) -> None:
    values = np.asarray(values, dtype=float)
    with open(path, "w") as fh:
        if values.ndim == 1:
            fh.write(f"{values.size}\n")
            rows = [values]
        else:
            fh.write(f"{values.shape[1]} {values.shape[0]}\n")
            rows = values
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


@dataclass(frozen=True, eq=False)
class InitialData:
    kind: str
    func: Callable
    eps: float
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def make_initial_data(kind: str, eps: float, **params) -> InitialData:
    """WKB pulse in 1D, Gaussian with a quadratic phase in 2D."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if kind == "wkb1d":

        def f(x):
            x = x[..., 0]
            amp = np.exp(-50.0 * (x - 1.0) ** 2)  # sqrt(r0)
            s0 = -0.2 * np.log(np.exp(5.0 * (x - 1.0)) + np.exp(-5.0 * (x - 1.0)))
            return amp * np.exp(1j * s0 / eps)

        return InitialData(kind, f, eps)
    if kind == "gaussian2d":

        def f(x):
            r2 = (x[..., 0] - 0.5) ** 2 + (x[..., 1] - 0.5) ** 2
            return np.sqrt(10.0 / np.pi) * np.exp(-5.0 * r2) * np.exp(-1j * r2 / eps)

        return InitialData(kind, f, eps)
    if kind == "custom":
        return InitialData(kind, params["func"], eps, {k: v for k, v in params.items() if k != "func"})
    raise ValueError(f"unknown initial data kind {kind!r}")
