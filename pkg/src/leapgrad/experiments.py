"""Experiment drivers: convergence studies, oscillation diagnostics,
gradient cross-checks and a small training loop.

A flat JSON config describes one experiment instance (field, readout,
weight path, data pairs, grid ladder); every run is deterministic given
the config and seed. Runs emit schema'd CSVs and render a matplotlib
figure next to each one.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reports
from .adjoint import continuum_solution
from .averaging import gradient_averaging_matrix
from .errors import NumericalError
from .backprop import (
    RAW,
    TIMES_L,
    GradientGrid,
    LossSpec,
    fd_gradient,
    loss_value,
    relative_deviation,
    vanilla_gradient,
)
from .fields import TrigWeightPath, make_field, make_readout
from .integrators import EULER, LEAPFROG, WeightGrid, leapfrog_trajectory
from .tape import tape_gradient

__all__ = [
    "ExperimentConfig",
    "default_config",
    "linear_config",
    "load_config",
    "build_problem",
    "Problem",
    "NumericalError",
    "fit_rate",
    "alternation_fraction",
    "gradient_truth_error",
    "run_convergence",
    "run_oscillation",
    "run_gradcheck",
    "run_train",
    "ConvergenceRecord",
    "OscillationRecord",
    "GradCheckReport",
    "TrainRecord",
]

DIVERGENCE_CAP = 1e6


@dataclass
class ExperimentConfig:
    """Flat description of one experiment instance.

    ``path_seed`` defaults to ``seed``; explicit path coefficient arrays
    (all four of sin/cos/offset/freq) override seeded generation. Targets
    come from ``y_values``, a ``y_constant``, or ``y_match`` (y_i = g(x_i)).
    """

    field: str = "tanh"
    d: int = 2
    readout: str = "linear"
    readout_coeff: tuple = (1.0, 0.5)
    path_seed: int | None = None
    path_sin: tuple | None = None
    path_cos: tuple | None = None
    path_offset: tuple | None = None
    path_freq: tuple | None = None
    pairs: int = 1
    x_values: tuple | None = ((1.0, -0.5),)
    x_box: tuple = (-1.0, 1.0)
    y_values: tuple | None = (0.3,)
    y_constant: float | None = None
    y_match: bool = False
    levels: tuple = (16, 32, 64, 128, 256, 512)
    refine: int = 64
    seed: int = 42
    probe: str = "ones"
    out: str = "results"

    def validate(self):
        if self.field not in ("tanh", "linear"):
            raise ValueError(f"unknown field kind {self.field!r}")
        if self.readout not in ("linear", "tanh-linear"):
            raise ValueError(f"unknown readout kind {self.readout!r}")
        if self.probe not in ("ones", "e1"):
            raise ValueError(f"unknown probe {self.probe!r}")
        if not self.levels:
            raise ValueError("levels must be a non-empty list")
        if any(int(L) < 4 for L in self.levels):
            raise ValueError("every level must be >= 4")
        if self.refine < 1:
            raise ValueError("refine must be >= 1")
        if self.pairs < 1:
            raise ValueError("pairs must be >= 1")
        return self


def default_config() -> ExperimentConfig:
    """The pinned tanh instance used throughout the test battery."""
    return ExperimentConfig()


def linear_config() -> ExperimentConfig:
    """The analytic one-dimensional linear instance (constant unit weight)."""
    return ExperimentConfig(
        field="linear",
        d=1,
        readout_coeff=(1.0,),
        path_sin=(0.0,),
        path_cos=(0.0,),
        path_offset=(1.0,),
        path_freq=(1.0,),
        x_values=((1.0,),),
        y_values=(0.0,),
    )


_LIST_KEYS = {
    "readout_coeff", "path_sin", "path_cos", "path_offset", "path_freq",
    "x_values", "x_box", "y_values", "levels",
}


def load_config(path) -> ExperimentConfig:
    """Read a flat JSON config; unknown keys are rejected."""
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a JSON object")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    cfg = ExperimentConfig()
    for key, value in data.items():
        if key in _LIST_KEYS and value is not None:
            value = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        setattr(cfg, key, value)
    return cfg.validate()


@dataclass(frozen=True)
class Problem:
    field: object
    readout: object
    path: object
    loss: LossSpec
    probe: np.ndarray


def _build_path(cfg, n):
    explicit = (cfg.path_sin, cfg.path_cos, cfg.path_offset, cfg.path_freq)
    if any(c is not None for c in explicit):
        if any(c is None for c in explicit):
            raise ValueError("explicit paths need all of path_sin/path_cos/path_offset/path_freq")
        path = TrigWeightPath(cfg.path_sin, cfg.path_cos, cfg.path_offset, cfg.path_freq)
        if path.n != n:
            raise ValueError(f"path has {path.n} components, field needs {n}")
        return path
    seed = cfg.seed if cfg.path_seed is None else cfg.path_seed
    return TrigWeightPath.from_seed(n, seed)


def build_problem(cfg: ExperimentConfig) -> Problem:
    cfg.validate()
    field = make_field(cfg.field, cfg.d)
    coeff = np.asarray(cfg.readout_coeff, dtype=float).ravel()
    if coeff.size != field.d:
        raise ValueError(f"readout coefficient has {coeff.size} entries, field state is {field.d}-dimensional")
    readout = make_readout(cfg.readout, coeff)
    path = _build_path(cfg, field.n)

    if cfg.x_values is not None:
        xs = np.atleast_2d(np.asarray(cfg.x_values, dtype=float))
    else:
        rng = np.random.default_rng(cfg.seed)
        lo, hi = cfg.x_box
        xs = rng.uniform(lo, hi, (cfg.pairs, field.d))
    if xs.shape[1] != field.d:
        raise ValueError(f"data points have dimension {xs.shape[1]}, field state is {field.d}-dimensional")

    if cfg.y_values is not None:
        ys = np.asarray(cfg.y_values, dtype=float).ravel()
    elif cfg.y_constant is not None:
        ys = np.full(xs.shape[0], float(cfg.y_constant))
    elif cfg.y_match:
        ys = np.array([float(readout.value(x)) for x in xs])
    else:
        raise ValueError("config needs y_values, y_constant or y_match")

    if cfg.probe == "ones":
        probe = np.ones(field.n)
    else:
        probe = np.zeros(field.n)
        probe[0] = 1.0
    return Problem(field, readout, path, LossSpec(readout, xs, ys), probe)


def fit_rate(points):
    """Least-squares slope of log err against log h; None when unfittable."""
    points = [(float(h), float(e)) for h, e in points]
    if len(points) < 3 or any(e <= 0.0 or h <= 0.0 for h, e in points):
        return None
    hs = np.log([h for h, _ in points])
    es = np.log([e for _, e in points])
    return float(np.polyfit(hs, es, 1)[0])


def alternation_fraction(residuals) -> float:
    """Fraction of adjacent interior residual pairs with opposite signs.

    Interior means rows 1..L-2: the first row follows the one-step start of
    the recursion and the last row carries the final-data pattern, so both
    are excluded from the sign count.
    """
    r = np.asarray(residuals, dtype=float).ravel()
    inner = r[1:-1]
    if inner.size < 2:
        return 0.0
    return float(np.mean(inner[:-1] * inner[1:] < 0.0))


def gradient_truth_error(grad: GradientGrid, truth) -> float:
    """max_l of the infinity norm of (grad row - truth row); needs times_L rows."""
    grad.require_scaling(TIMES_L)
    rows = np.atleast_2d(np.asarray(getattr(truth, "rows", truth), dtype=float))
    if rows.shape != grad.rows.shape:
        raise ValueError(f"truth shape {rows.shape} does not match gradient shape {grad.rows.shape}")
    return float(np.max(np.abs(grad.rows - rows)))


@dataclass(frozen=True)
class LevelErrors:
    L: int
    h: float
    err_vanilla: float
    err_modified: float
    err_euler: float


@dataclass(frozen=True)
class ConvergenceRecord:
    levels: tuple
    slopes: dict

    def csv_rows(self):
        return [(lv.L, lv.h, lv.err_vanilla, lv.err_modified, lv.err_euler) for lv in self.levels]


def _level_gradients(problem, L, refine):
    """Vanilla/modified/euler gradients (times_L) and the continuum truth at one level."""
    grid = WeightGrid.from_path(problem.path, L)
    solution = continuum_solution(problem.field, problem.path, problem.loss, L, refine=refine)
    van = vanilla_gradient(problem.field, problem.loss, grid, L, scheme=LEAPFROG).times_layers()
    mod = gradient_averaging_matrix(L, problem.field.n).apply(van)
    eul = vanilla_gradient(problem.field, problem.loss, grid, L, scheme=EULER).times_layers()
    return grid, solution, van, mod, eul


def run_convergence(cfg: ExperimentConfig, out_dir=None) -> ConvergenceRecord:
    """Gradient error against the continuum truth across the level ladder."""
    problem = build_problem(cfg)
    levels = []
    for L in cfg.levels:
        L = int(L)
        _, solution, van, mod, eul = _level_gradients(problem, L, cfg.refine)
        errs = (
            gradient_truth_error(van, solution.truth),
            gradient_truth_error(mod, solution.truth),
            gradient_truth_error(eul, solution.truth),
        )
        if not all(math.isfinite(e) for e in errs):
            raise NumericalError(f"non-finite gradient error at L = {L}")
        levels.append(LevelErrors(L, 1.0 / L, *errs))

    def slope(attr):
        return fit_rate([(lv.h, getattr(lv, attr)) for lv in levels])

    record = ConvergenceRecord(
        tuple(levels),
        {
            "vanilla": slope("err_vanilla"),
            "modified": slope("err_modified"),
            "euler": slope("err_euler"),
        },
    )
    if out_dir is not None:
        csv_path = reports.write_csv(Path(out_dir) / "converge.csv", "converge", record.csv_rows())
        from .figures import render

        render(csv_path, "converge")
    return record


@dataclass(frozen=True)
class OscillationRecord:
    L: int
    times: np.ndarray
    vanilla: np.ndarray
    modified: np.ndarray
    truth: np.ndarray
    alternation: float

    def csv_rows(self):
        return [
            (l, self.times[l], self.vanilla[l], self.modified[l], self.truth[l])
            for l in range(self.L)
        ]


def run_oscillation(cfg: ExperimentConfig, L: int, out_dir=None) -> OscillationRecord:
    """Probe-projected per-layer gradient curves against the continuum truth."""
    L = int(L)
    if L < 4:
        raise ValueError("oscillation diagnostics need L >= 4")
    problem = build_problem(cfg)
    _, solution, van, mod, _ = _level_gradients(problem, L, cfg.refine)
    van.require_scaling(TIMES_L)
    mod.require_scaling(TIMES_L)
    truth_proj = solution.truth.rows @ problem.probe
    van_proj = van.rows @ problem.probe
    mod_proj = mod.rows @ problem.probe
    if not (np.all(np.isfinite(van_proj)) and np.all(np.isfinite(mod_proj)) and np.all(np.isfinite(truth_proj))):
        raise NumericalError(f"non-finite oscillation curve at L = {L}")
    record = OscillationRecord(
        L,
        np.arange(L) / L,
        van_proj,
        mod_proj,
        truth_proj,
        alternation_fraction(van_proj - truth_proj),
    )
    if out_dir is not None:
        csv_path = reports.write_csv(
            Path(out_dir) / f"oscillate_L{L}.csv",
            "oscillate",
            record.csv_rows(),
            comments=(f"alternation_fraction = {record.alternation!r}",),
        )
        from .figures import render

        render(csv_path, "oscillate")
    return record


@dataclass(frozen=True)
class GradCheckReport:
    L: int
    recursion_vs_tape: float
    recursion_vs_fd: float
    tol_tape: float
    tol_fd: float
    worst_tape: tuple
    worst_fd: tuple

    @property
    def ok(self) -> bool:
        return self.recursion_vs_tape <= self.tol_tape and self.recursion_vs_fd <= self.tol_fd


def _argmax_cell(a, b):
    diff = np.abs(a - b)
    l, j = np.unravel_index(int(np.argmax(diff)), diff.shape)
    return int(l), int(j)


def run_gradcheck(cfg: ExperimentConfig, L: int, fd_step: float = 1e-5,
                  tol_tape: float = 1e-12, tol_fd: float = 1e-4,
                  _step_coeff: float = 2.0) -> GradCheckReport:
    """Certify recursion == tape == finite differences on the config instance.

    Requires a nonzero readout mismatch on every pair (relative comparisons
    are meaningless at an exact minimum). ``_step_coeff`` forwards the
    recursion's test hook so the check itself can be negative-controlled.
    """
    L = int(L)
    problem = build_problem(cfg)
    grid = WeightGrid.from_path(problem.path, L)
    for i in range(problem.loss.npairs):
        x, y = problem.loss.pair(i)
        traj = leapfrog_trajectory(problem.field, x, grid, L)
        if abs(float(problem.readout.value(traj.states[L])) - y) < 1e-8:
            raise ValueError(f"pair {i} has (near-)zero readout mismatch; gradcheck needs a nonzero one")
    rec = vanilla_gradient(problem.field, problem.loss, grid, L, scheme=LEAPFROG, _step_coeff=_step_coeff)
    tape = tape_gradient(problem.field, problem.loss, grid, L, scheme=LEAPFROG)
    fd = fd_gradient(problem.field, problem.loss, grid, L, scheme=LEAPFROG, step=fd_step)
    return GradCheckReport(
        L,
        relative_deviation(rec, tape),
        relative_deviation(rec, fd),
        tol_tape,
        tol_fd,
        _argmax_cell(rec.rows, tape.rows),
        _argmax_cell(rec.rows, fd.rows),
    )


@dataclass(frozen=True)
class TrainRecord:
    mode: str
    losses: np.ndarray
    diverged: bool

    def csv_rows(self):
        return list(enumerate(self.losses))


def run_train(cfg: ExperimentConfig, steps: int, stepsize: float, mode: str = "vanilla",
              out_dir=None) -> TrainRecord:
    """Plain gradient descent on the sampled weight grid.

    ``mode`` picks the raw recursion gradient or its averaged version. Runs
    at the smallest configured level; stops early (flagged) if the loss
    exceeds the divergence cap.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if mode not in ("vanilla", "modified"):
        raise ValueError(f"unknown training mode {mode!r}")
    problem = build_problem(cfg)
    L = int(min(cfg.levels))
    rows = WeightGrid.from_path(problem.path, L).rows.copy()
    averager = gradient_averaging_matrix(L, problem.field.n) if mode == "modified" else None

    losses = [loss_value(problem.field, problem.loss, WeightGrid(rows), L, scheme=LEAPFROG)]
    diverged = False
    for _ in range(steps):
        grid = WeightGrid(rows)
        grad = vanilla_gradient(problem.field, problem.loss, grid, L, scheme=LEAPFROG)
        if averager is not None:
            grad = averager.apply(grad)
        grad.require_scaling(RAW)
        rows[:L] -= stepsize * grad.rows
        current = loss_value(problem.field, problem.loss, WeightGrid(rows), L, scheme=LEAPFROG)
        losses.append(current)
        if not math.isfinite(current):
            raise NumericalError("training loss became non-finite")
        if current > DIVERGENCE_CAP:
            diverged = True
            break
    record = TrainRecord(mode, np.asarray(losses), diverged)
    if out_dir is not None:
        csv_path = reports.write_csv(
            Path(out_dir) / f"train_{mode}.csv",
            "train",
            record.csv_rows(),
            comments=(f"diverged = {diverged}",),
        )
        from .figures import render

        render(csv_path, "train")
    return record
