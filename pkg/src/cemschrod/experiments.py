"""Config-driven experiment runner and the built-in parameter sweeps.

Config files are INI-style (``configparser``): sections group keys for
readability only, every key is looked up by name regardless of section.
"""
from __future__ import annotations

import configparser
import dataclasses
import json
import logging
import math
import platform
import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import NormOperators, convergence_order, relative_errors, rows_to_csv
from .assembly import WeightFunction, assemble_hamiltonian, assemble_mass, assemble_weighted_mass
from .auxspace import build_auxiliary_space, spectra_csv
from .cembasis import build_multiscale_space, decay_csv, decay_study, default_oversampling, full_cover_layers
from .evolve import EvolutionConfig, run_cn, write_field
from .grid import build_grid, check_resolution, prolong_nodal, refine
from .problems import check_alignment, load_cell_map, make_initial_data, make_potential

log = logging.getLogger(__name__)

ONE_D = ("smooth1d", "twoscale1d")
REFERENCES = ("same-grid", "refined")
EXTRA_COLUMNS = (
    "problem",
    "initial",
    "delta1",
    "delta2",
    "seed",
    "side",
    "coarse",
    "refinement",
    "weight",
    "quad_order",
    "T",
    "n_steps",
    "reference",
    "reference_factor",
    "Lambda",
    "n_basis",
    "mass_drift_cem",
    "energy_drift_cem",
    "mass_drift_ref",
    "energy_drift_ref",
)


class ExperimentError(RuntimeError):
    """A pipeline stage failed; the message names the stage and the parameters."""


@dataclass
class ExperimentConfig:
    experiment_id: str = "solve"
    problem: str = "checkerboard2d"
    initial: str = "auto"
    eps: float = 0.125
    delta1: float | None = None
    delta2: float | None = None
    contrast: float | None = None
    seed: int = 0
    cells: int = 20
    probability: float = 0.25
    c: float = 1.0
    dim: int | None = None
    potential_file: str | None = None
    side: float | None = None
    coarse: int = 10
    refinement: int = 20
    l: int = 3
    m: int | str = "auto"
    weight: str = "constant"
    quad_order: int = 2
    T: float = 1.0
    dt: float = 1.0 / 32
    reference: str = "auto"
    reference_factor: int = 4
    csv: str = "results.csv"
    dump_every: int = 0

    # -- parsing -----------------------------------------------------------

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str  # keys are case sensitive (T vs t)
        if not parser.read(path):
            raise FileNotFoundError(path)
        flat = {}
        for section in parser.sections():
            flat.update(parser[section])
        return cls.from_dict(flat)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.coarse < 2 or self.refinement < 1 or self.l < 1:
            raise ValueError("need coarse >= 2, refinement >= 1, l >= 1")
        if self.m != "auto" and int(self.m) < 0:
            raise ValueError("m must be >= 0 or 'auto'")
        if self.reference not in REFERENCES + ("auto",):
            raise ValueError(f"reference must be one of {REFERENCES} or 'auto'")

    # -- resolution --------------------------------------------------------

    @property
    def dimension(self) -> int:
        if self.dim is not None:
            return int(self.dim)
        return 1 if self.problem in ONE_D else 2

    def resolved(self) -> dict:
        """Every parameter with defaults and ``auto`` values made explicit."""
        d = self.dimension
        side = self.side if self.side is not None else (2.0 if d == 1 else 1.0)
        H = side / self.coarse
        out = dataclasses.asdict(self)
        out.update(
            dim=d,
            side=side,
            H=H,
            h=H / self.refinement,
            m=default_oversampling(H, side) if self.m == "auto" else int(self.m),
            initial=self.initial if self.initial != "auto" else ("wkb1d" if d == 1 else "gaussian2d"),
            reference=self.reference if self.reference != "auto" else ("refined" if d == 1 else "same-grid"),
        )
        if self.problem == "twoscale1d":
            out["delta1"] = 0.25 if self.delta1 is None else self.delta1
            out["delta2"] = 0.1 if self.delta2 is None else self.delta2
        elif self.problem == "checkerboard2d":
            out["delta1"] = 0.125 if self.delta1 is None else self.delta1
            out["delta2"] = 0.0625 if self.delta2 is None else self.delta2
        elif self.problem == "inclusions2d":
            out["contrast"] = 1e3 if self.contrast is None else self.contrast
        return out


_FLOAT_KEYS = {"eps", "delta1", "delta2", "contrast", "probability", "c", "side", "T", "dt"}
_INT_KEYS = {"seed", "cells", "dim", "coarse", "refinement", "l", "quad_order", "reference_factor", "dump_every"}


def _coerce(key, raw):
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if raw.lower() in ("", "none"):
        return None
    if key in _FLOAT_KEYS:
        if "/" in raw:
            num, den = raw.split("/", 1)
            return float(num) / float(den)
        return float(raw)
    if key in _INT_KEYS:
        return int(raw)
    if key == "m":
        return "auto" if raw.lower() == "auto" else int(raw)
    return raw


@contextmanager
def _stage(name: str, params: dict):
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        brief = {k: params[k] for k in ("experiment_id", "problem", "eps", "coarse", "m", "l") if k in params}
        raise ExperimentError(f"stage '{name}' failed for {brief}: {exc}") from exc


# -- building blocks ---------------------------------------------------------


def build_potential(res: dict):
    kind = res["problem"]
    if kind == "smooth1d":
        return make_potential(kind)
    if kind in ("twoscale1d", "checkerboard2d"):
        return make_potential(kind, delta1=res["delta1"], delta2=res["delta2"])
    if kind == "inclusions2d":
        return make_potential(
            kind, contrast=res["contrast"], cells=res["cells"], seed=res["seed"], probability=res["probability"]
        )
    if kind == "constant":
        return make_potential(kind, c=res["c"], dim=res["dim"])
    if kind == "custom":
        if not res.get("potential_file"):
            raise ValueError("custom potential needs potential_file")
        values = load_cell_map(res["potential_file"])
        side = res["side"]
        box = ((0.0, side),) * res["dim"]
        return make_potential(kind, values=values, box=box, path=res["potential_file"])
    raise ValueError(f"unknown problem {kind!r}")


def build_setup(res: dict, threads: int = 1, with_space: bool = True) -> dict:
    """Grid, operators, auxiliary space and (optionally) multiscale space for a resolved config."""
    out = {}
    with _stage("grid", res):
        grid = build_grid(res["dim"], (0.0, res["side"]), res["coarse"], res["refinement"])
        out["grid"] = grid
    with _stage("potential", res):
        V = build_potential(res)
        check_resolution(grid, res["eps"], V.delta)
        if V.params.get("delta1") is not None:
            check_alignment(V, grid.h)
        out["V"] = V
    with _stage("assembly", res):
        out["a"] = assemble_hamiltonian(grid, res["eps"], V, res["quad_order"])
        out["M"] = assemble_mass(grid)
        out["S"] = assemble_weighted_mass(grid, WeightFunction(res["eps"], res["weight"]), res["quad_order"])
    with _stage("auxiliary space", res):
        out["aux"] = build_auxiliary_space(grid, out["a"], out["S"], res["l"])
    if with_space:
        with _stage("multiscale space", res):
            out["ms"] = build_multiscale_space(grid, out["a"], out["S"], out["M"], out["aux"], res["m"], threads=threads)
    return out


def _reference_key(res: dict) -> tuple:
    keys = ("problem", "initial", "eps", "delta1", "delta2", "contrast", "seed", "cells", "probability", "c",
            "potential_file", "dim", "side", "quad_order", "T", "dt", "reference", "reference_factor")
    fine = res["coarse"] * res["refinement"]
    return tuple(res.get(k) for k in keys) + (fine,)


class ReferenceCache:
    """Fine reference solutions shared by sweep cells with the same fine problem."""

    def __init__(self):
        self._data = {}
        self._locks = {}
        self._guard = threading.Lock()

    def get(self, res: dict, grid, V):
        key = _reference_key(res)
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._data:
                self._data[key] = compute_reference(res, grid, V)
            return self._data[key]


def compute_reference(res: dict, grid, V) -> dict:
    """CN-FEM on the same fine grid, or on an ``f``-times refined grid with ``dt / f``."""
    f = res["reference_factor"] if res["reference"] == "refined" else 1
    with _stage("reference", res):
        rgrid = refine(grid, f) if f > 1 else grid
        a = assemble_hamiltonian(rgrid, res["eps"], V, res["quad_order"])
        M = assemble_mass(rgrid)
        u0 = make_initial_data(res["initial"], res["eps"])
        cfg = EvolutionConfig(res["dt"] / f, res["T"], "fine")
        every = res["dump_every"] * f if res["dump_every"] else None
        traj = run_cn(cfg, u0, rgrid, M, a, res["eps"], snapshot_every=every)
        norms = NormOperators.build(rgrid, res["eps"], V, res["quad_order"], hamiltonian=a)
    return {"grid": rgrid, "traj": traj, "norms": norms, "factor": f}


def run_experiment(config, threads: int = 1, cache: ReferenceCache | None = None, out_dir=None) -> list:
    """Build, evolve CN-CEM and the reference, and return one analysis row."""
    res = config.resolved() if isinstance(config, ExperimentConfig) else dict(config)
    cache = cache or ReferenceCache()
    t0 = time.perf_counter()
    setup = build_setup(res, threads=threads)
    grid, ms = setup["grid"], setup["ms"]
    with _stage("cn-cem", res):
        cfg = EvolutionConfig(res["dt"], res["T"], "multiscale")
        u0 = make_initial_data(res["initial"], res["eps"])
        every = res["dump_every"] or None
        traj = run_cn(cfg, u0, grid, setup["M"], setup["a"], res["eps"], ms=ms, snapshot_every=every)
    wall = time.perf_counter() - t0
    ref = cache.get(res, grid, setup["V"])
    with _stage("analysis", res):
        u_cem = traj.final.fine()
        if ref["factor"] > 1:
            u_cem = prolong_nodal(grid, ref["grid"], u_cem)
        rep = relative_errors(u_cem, ref["traj"].final.values, ref["norms"])
    dm, de = traj.drift()
    rm, re_ = ref["traj"].drift()
    row = {
        "experiment_id": res["experiment_id"],
        "eps": res["eps"],
        "delta": setup["V"].delta,
        "contrast": setup["V"].contrast,
        "H": res["H"],
        "h": res["h"],
        "m": res["m"],
        "l": res["l"],
        "dt": cfg.dt,
        "err_l2": rep.l2,
        "err_h1": rep.h1,
        "err_a": rep.a,
        "order_l2": None,
        "order_h1": None,
        "wall_time": wall,
        "problem": res["problem"],
        "initial": res["initial"],
        "delta1": setup["V"].params.get("delta1"),
        "delta2": setup["V"].params.get("delta2"),
        "seed": res["seed"],
        "side": res["side"],
        "coarse": res["coarse"],
        "refinement": res["refinement"],
        "weight": res["weight"],
        "quad_order": res["quad_order"],
        "T": res["T"],
        "n_steps": cfg.n_steps,
        "reference": res["reference"],
        "reference_factor": ref["factor"],
        "Lambda": ms.Lambda,
        "n_basis": ms.n_basis,
        "mass_drift_cem": dm,
        "energy_drift_cem": de,
        "mass_drift_ref": rm,
        "energy_drift_ref": re_,
    }
    if out_dir is not None and res["dump_every"]:
        _dump_fields(Path(out_dir), res, grid, traj, ref)
    return [row]


def _dump_fields(out: Path, res, grid, traj, ref) -> None:
    fdir = out / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    tag = f"{res['experiment_id']}_N{res['coarse']}_m{res['m']}"
    for snap in traj.snapshots:
        write_field(fdir / f"{tag}_cem_t{snap.t:.6f}.txt", snap.fine(), grid, snap.t, res["eps"])
    for snap in ref["traj"].snapshots:
        write_field(fdir / f"{tag}_ref_t{snap.t:.6f}.txt", snap.values, ref["grid"], snap.t, res["eps"])


# -- built-in sweeps ---------------------------------------------------------


def _scaled_1d(problem: str, extra: dict) -> list:
    """H and dt scaled as eps^(5/4) from eps = 1/32, H = 1/64, dt = 1e-2 on [0, 2]."""
    cells = []
    for k, eps in enumerate((1 / 32, 1 / 64, 1 / 128)):
        s = (32 * eps) ** 1.25
        coarse = int(round(2.0 / (s / 64)))
        cells.append(
            dict(problem=problem, eps=eps, coarse=coarse, refinement=8, dt=1e-2 * s, T=0.1, l=3, m="auto",
                 reference="refined", reference_factor=4, **extra)
        )
    return cells


def _h_sweep(**common) -> list:
    return [dict(coarse=n, refinement=200 // n, m=m, **common) for n, m in ((10, 2), (20, 3), (40, 4))]


SWEEPS = {
    "table1": dict(order=False, cells=lambda: _scaled_1d("smooth1d", {})),
    "table2": dict(order=False, cells=lambda: _scaled_1d("twoscale1d", {"delta1": 0.25, "delta2": 0.1})),
    "table3": dict(
        order=False,
        cells=lambda: [
            dict(problem="checkerboard2d", eps=1 / 16, delta1=1 / 8, delta2=d, coarse=40, refinement=5, m=4,
                 dt=1 / 32, T=1.0)
            for d in (1 / 8, 1 / 16, 1 / 32)
        ],
    ),
    "table4": dict(order=True, cells=lambda: _h_sweep(problem="checkerboard2d", eps=1 / 8, delta1=1 / 8,
                                                     delta2=1 / 16, dt=1 / 32, T=1.0)),
    "table5": dict(order=True, cells=lambda: _h_sweep(problem="checkerboard2d", eps=1 / 32, delta1=1 / 8,
                                                     delta2=1 / 16, dt=1 / 32, T=1.0)),
    "table6": dict(order=True, cells=lambda: _h_sweep(problem="inclusions2d", eps=1 / 8, contrast=1e3,
                                                     dt=1 / 32, T=1.0)),
    "table7": dict(
        order=False,
        cells=lambda: [
            dict(problem="inclusions2d", eps=1 / 8, contrast=c, coarse=40, refinement=5, m=4, dt=1 / 32, T=1.0)
            for c in (1e1, 1e2, 1e3, 1e4)
        ],
    ),
}


def sweep_configs(name: str, seed: int | None = None, overrides: dict | None = None) -> list:
    if name not in SWEEPS:
        raise ValueError(f"unknown table {name!r}; choose from {sorted(SWEEPS)}")
    out = []
    for cell in SWEEPS[name]["cells"]():
        cell = {**cell, **(overrides or {}), "experiment_id": name}
        if seed is not None:
            cell["seed"] = seed
        cfg = ExperimentConfig(**cell)
        cfg.validate()
        out.append(cfg)
    return out


def _sort_key(row):
    return tuple(
        (0, v) if isinstance(v, (int, float)) else (1, str(v))
        for v in (row["experiment_id"], row["problem"], row["eps"], row["delta"] or 0.0, row["contrast"] or 0.0,
                  -row["H"], row["m"])
    )


def add_orders(rows: list) -> list:
    """Fill order columns along decreasing H within each (eps, delta, contrast) group."""
    groups = {}
    for row in rows:
        groups.setdefault((row["eps"], row["delta"], row["contrast"]), []).append(row)
    for group in groups.values():
        group.sort(key=lambda r: -r["H"])
        if len(group) < 2:
            continue
        o2 = convergence_order([(r["H"], r["err_l2"]) for r in group])
        o1 = convergence_order([(r["H"], r["err_h1"]) for r in group])
        for r, a, b in zip(group[1:], o2, o1):
            r["order_l2"], r["order_h1"] = a, b
    return rows


def run_sweep(name: str, threads: int = 1, seed: int | None = None, out_dir=None, overrides=None) -> list:
    """Run every cell of a named sweep; rows come back in deterministic order."""
    configs = sweep_configs(name, seed, overrides)
    cache = ReferenceCache()

    inner = max(1, threads // len(configs))

    def work(cfg):
        return run_experiment(cfg, threads=inner, cache=cache, out_dir=out_dir)

    if threads > 1 and len(configs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, configs))
    else:
        chunks = [work(c) for c in configs]
    rows = [r for chunk in chunks for r in chunk]
    if SWEEPS[name]["order"]:
        add_orders(rows)
    rows.sort(key=_sort_key)
    return rows


def run_decay(config, j: int | None = None, i: int = 0, m_list=None, threads: int = 1):
    """Energy-norm localization error of one basis function against its global version."""
    res = config.resolved() if isinstance(config, ExperimentConfig) else dict(config)
    setup = build_setup(res, threads=threads, with_space=False)
    grid = setup["grid"]
    if j is None:
        j = grid.ravel([np.array(n // 2) for n in grid.coarse_counts], grid.coarse_counts).item()
    if m_list is None:
        m_list = [1, 2, 3, 4]
    full = full_cover_layers(grid)
    m_list = [min(int(m), full) for m in m_list]
    with _stage("decay study", res):
        rows, theta = decay_study(grid, setup["a"], setup["S"], setup["aux"], j, i, m_list)
    return rows, theta, decay_csv(rows, theta)


def run_spectra(config) -> str:
    res = config.resolved() if isinstance(config, ExperimentConfig) else dict(config)
    setup = build_setup(res, with_space=False)
    return spectra_csv(setup["aux"])


def potential_cell_values(config) -> np.ndarray:
    """Potential at fine-element centres, shaped as a cell map (rows of constant y)."""
    res = config.resolved() if isinstance(config, ExperimentConfig) else dict(config)
    grid = build_grid(res["dim"], (0.0, res["side"]), res["coarse"], res["refinement"])
    V = build_potential(res)
    centres = grid.element_origins() + 0.5 * grid.h
    vals = V(centres)
    if res["dim"] == 1:
        return vals
    return vals.reshape(grid.fine_counts[1], grid.fine_counts[0])


def plan(configs) -> list:
    return [c.resolved() for c in configs]


def manifest(command: str, resolved: list, argv=None) -> dict:
    return {
        "command": command,
        "argv": list(argv) if argv is not None else sys.argv,
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "configs": resolved,
    }


def write_outputs(out_dir, name: str, rows: list, command: str, resolved: list, argv=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(rows_to_csv(rows, EXTRA_COLUMNS))
    write_manifest(out, command, resolved, argv)
    return path


def write_manifest(out_dir, command: str, resolved: list, argv=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest(command, resolved, argv), indent=2, default=_json_default))
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and math.isinf(obj):
        return str(obj)
    return str(obj)
