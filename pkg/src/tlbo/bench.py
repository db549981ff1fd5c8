"""Benchmark harness: tabular tasks, synthetic transfer families, the static
(leave-one-out) and dynamic (sequential-arrival) protocols, and metrics.

Tabular tasks are finite pre-evaluated grids; runs on them suggest only
unevaluated rows, and range extremes for the distance-to-minimum metric come
from the full table. Synthetic families perturb a base function (translation
and output scale per task) so task relatedness is controllable.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import bo, gp, space as space_mod
from .bo import RunResult, derived_seed
from .errors import ParseError, ValidationError
from .space import ConfigSpace, Configuration, ParamSpec
from .transfer import SourceEnsemble

BRANIN_BOUNDS = ((-5.0, 10.0), (0.0, 15.0))
BRANIN_MIN_VALUE = 5.0 / (4.0 * math.pi)
BRANIN_MINIMA = (
    (-math.pi, 12.275),
    (math.pi, 2.275),
    (9.42478, 2.475),
)
BOWL_BOUND = 5.0

BASE_FUNCTIONS = ("branin", "quadratic-bowl")

# Seed-stream tags for deriving per-run and per-source seeds.
_TAG_SOURCE_ROWS = 30
_TAG_SOURCE_FIT = 31
_TAG_RUN = 10
_TAG_NOISE = 11


def branin(x: np.ndarray) -> np.ndarray:
    """Branin function on (-5, 10) x (0, 15); three global minima of 5/(4 pi)."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    t = 1.0 / (8.0 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6.0) ** 2 + 10.0 * (1.0 - t) * np.cos(x1) + 10.0


def quadratic_bowl(x: np.ndarray) -> np.ndarray:
    """Sum of squares; minimum 0 at the origin."""
    x = np.asarray(x, dtype=float)
    return (x**2).sum(axis=-1)


@dataclass(frozen=True)
class TabularTask:
    """A finite pre-evaluated benchmark: configurations with stored outcomes."""

    name: str
    space: ConfigSpace
    rows: tuple[tuple[Configuration, float], ...]
    y_min: float
    y_max: float

    @classmethod
    def from_rows(cls, name, space, rows) -> "TabularTask":
        rows = tuple(rows)
        if not rows:
            raise ValidationError("a tabular task needs at least one row")
        ys = [y for _, y in rows]
        return cls(name=name, space=space, rows=rows, y_min=min(ys), y_max=max(ys))

    def grid(self) -> list[Configuration]:
        return [c for c, _ in self.rows]

    def lookup(self) -> dict:
        return {bo._config_key(c): y for c, y in self.rows}


def load_tabular(path, strict: bool = False) -> TabularTask:
    """Load a tabular task file: {"space": {...}, "rows": [{"config", "y"}]}.

    Duplicate configurations keep the first row; in strict mode a duplicate
    with a differing outcome is rejected instead.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read task file ({exc})") from exc
    if not isinstance(data, dict) or "space" not in data or "rows" not in data:
        raise ParseError(f"{path}: expected an object with 'space' and 'rows'")
    try:
        space = space_mod.space_from_dict(data["space"])
    except ValidationError as exc:
        raise ParseError(f"{path}: bad space definition ({exc})") from exc
    rows_data = data["rows"]
    if not isinstance(rows_data, list) or not rows_data:
        raise ParseError(f"{path}: 'rows' must be a non-empty array")

    rows: list[tuple[Configuration, float]] = []
    seen: dict = {}
    for i, entry in enumerate(rows_data, start=1):
        if not isinstance(entry, dict) or "config" not in entry or "y" not in entry:
            raise ParseError(f"{path}: row {i}: expected an object with 'config' and 'y'")
        try:
            config = Configuration(dict(entry["config"]))
            space.validate(config)
        except (ValidationError, TypeError) as exc:
            raise ParseError(f"{path}: row {i}: {exc}") from exc
        y = entry["y"]
        if isinstance(y, bool) or not isinstance(y, (int, float)) or not math.isfinite(float(y)):
            raise ParseError(f"{path}: row {i}: 'y' must be a finite number")
        y = float(y)
        key = bo._config_key(config)
        if key in seen:
            if strict and seen[key] != y:
                raise ParseError(
                    f"{path}: row {i}: duplicate configuration with differing outcome"
                )
            continue
        seen[key] = y
        rows.append((config, y))
    return TabularTask.from_rows(name=data.get("name", path.stem), space=space, rows=rows)


def save_tabular(task: TabularTask, path) -> None:
    data = {
        "name": task.name,
        "space": space_mod.space_to_dict(task.space),
        "rows": [{"config": dict(c.values), "y": y} for c, y in task.rows],
    }
    with open(path, "w") as fh:
        json.dump(data, fh, sort_keys=True)


@dataclass(frozen=True)
class SyntheticFamilySpec:
    """A family of related tasks: a base function under per-task translation
    and output scaling, with observation noise proportional to each task's
    output range."""

    base: str = "branin"
    n_tasks: int = 6
    translation_range: float = 2.0
    scale_range: tuple[float, float] = (0.8, 1.25)
    noise_scale: float = 0.01
    seed: int = 0
    dim: int = 2

    def __post_init__(self):
        if self.base not in BASE_FUNCTIONS:
            raise ValidationError(f"unknown base function {self.base!r}")
        if self.n_tasks < 1:
            raise ValidationError("a family needs at least one task")
        if self.noise_scale < 0:
            raise ValidationError("noise scale must be nonnegative")
        if self.translation_range < 0:
            raise ValidationError("translation range must be nonnegative")
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValidationError("scale range must satisfy 0 < low <= high")
        if self.base == "branin" and self.dim != 2:
            raise ValidationError("branin is two-dimensional")
        if self.base == "quadratic-bowl" and self.translation_range > BOWL_BOUND:
            raise ValidationError("bowl translation range must keep the optimum in the domain")
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticFamilySpec":
        kwargs = dict(data)
        if "scale_range" in kwargs:
            kwargs["scale_range"] = tuple(kwargs["scale_range"])
        return cls(**kwargs)


@dataclass(frozen=True)
class SyntheticTask:
    """One member of a synthetic family, with known noiseless extremes."""

    name: str
    space: ConfigSpace
    base: str
    translation: np.ndarray
    scale: float
    noise_sigma: float
    y_min: float
    y_max: float
    optimum: np.ndarray | None

    def noiseless(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the task function on raw-coordinate rows (n, dim)."""
        shifted = np.asarray(x, dtype=float) - self.translation
        base = branin(shifted) if self.base == "branin" else quadratic_bowl(shifted)
        return self.scale * base

    def make_objective(self, rng: np.random.Generator):
        """A configuration-level callback adding Gaussian observation noise."""

        def objective(config: Configuration) -> float:
            x = np.array([config.values[p.name] for p in self.space.params], dtype=float)
            value = float(self.noiseless(x[None, :])[0])
            if self.noise_sigma > 0:
                value += float(rng.normal(0.0, self.noise_sigma))
            return value

        return objective


def _branin_space() -> ConfigSpace:
    return ConfigSpace(
        [
            ParamSpec(name="x1", kind="continuous", low=BRANIN_BOUNDS[0][0], high=BRANIN_BOUNDS[0][1]),
            ParamSpec(name="x2", kind="continuous", low=BRANIN_BOUNDS[1][0], high=BRANIN_BOUNDS[1][1]),
        ]
    )


def _bowl_space(dim: int) -> ConfigSpace:
    return ConfigSpace(
        [ParamSpec(name=f"x{d + 1}", kind="continuous", low=-BOWL_BOUND, high=BOWL_BOUND) for d in range(dim)]
    )


def _branin_extremes(translation: np.ndarray, scale: float):
    """Noiseless (min, max, argmin) of a translated, scaled branin on its box."""
    in_domain = []
    for mx, my in BRANIN_MINIMA:
        loc = np.array([mx, my]) + translation
        if (
            BRANIN_BOUNDS[0][0] <= loc[0] <= BRANIN_BOUNDS[0][1]
            and BRANIN_BOUNDS[1][0] <= loc[1] <= BRANIN_BOUNDS[1][1]
        ):
            in_domain.append(loc)
    g1 = np.linspace(BRANIN_BOUNDS[0][0], BRANIN_BOUNDS[0][1], 257)
    g2 = np.linspace(BRANIN_BOUNDS[1][0], BRANIN_BOUNDS[1][1], 257)
    mesh = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
    values = scale * branin(mesh - translation)
    y_max = float(values.max())
    if in_domain:
        return scale * BRANIN_MIN_VALUE, y_max, in_domain[0]
    return float(values.min()), y_max, mesh[int(values.argmin())]


def make_synthetic_family(spec: SyntheticFamilySpec) -> list[SyntheticTask]:
    """Materialize a family of related tasks, deterministically per seed."""
    rng = np.random.default_rng(spec.seed)
    tasks = []
    for i in range(spec.n_tasks):
        dim = 2 if spec.base == "branin" else spec.dim
        translation = rng.uniform(-spec.translation_range, spec.translation_range, size=dim)
        scale = float(rng.uniform(*spec.scale_range))
        if spec.base == "branin":
            space = _branin_space()
            y_min, y_max, optimum = _branin_extremes(translation, scale)
        else:
            space = _bowl_space(dim)
            y_min = 0.0
            y_max = float(scale * sum(max((-BOWL_BOUND - t) ** 2, (BOWL_BOUND - t) ** 2) for t in translation))
            optimum = translation.copy()
        noise_sigma = spec.noise_scale * (y_max - y_min)
        tasks.append(
            SyntheticTask(
                name=f"{spec.base}-{i:02d}",
                space=space,
                base=spec.base,
                translation=translation,
                scale=scale,
                noise_sigma=noise_sigma,
                y_min=float(y_min),
                y_max=y_max,
                optimum=optimum,
            )
        )
    return tasks


def adtm(incumbent_y_per_task, y_min_per_task, y_max_per_task) -> np.ndarray:
    """Average distance to the minimum after each trial, in [0, 1].

    Per task the incumbent's distance to the best value is normalized by the
    task's full range and clipped into [0, 1]; the result averages tasks.
    Tasks with a degenerate range are excluded with a warning.
    """
    incumbent_y_per_task = list(incumbent_y_per_task)
    y_mins = list(y_min_per_task)
    y_maxs = list(y_max_per_task)
    if not incumbent_y_per_task:
        raise ValidationError("adtm needs at least one task")
    if not (len(incumbent_y_per_task) == len(y_mins) == len(y_maxs)):
        raise ValidationError("adtm inputs must align per task")
    curves = []
    for i, (inc, lo, hi) in enumerate(zip(incumbent_y_per_task, y_mins, y_maxs)):
        if not hi > lo:
            warnings.warn(f"adtm: task {i} has a degenerate range and is excluded")
            continue
        inc = np.minimum.accumulate(np.asarray(inc, dtype=float))
        curves.append(np.clip((inc - lo) / (hi - lo), 0.0, 1.0))
    if not curves:
        raise ValidationError("adtm: every task had a degenerate range")
    lengths = {c.size for c in curves}
    if len(lengths) > 1:
        raise ValidationError("adtm: incumbent vectors must share one length")
    return np.mean(np.stack(curves), axis=0)


def average_rank(best_values) -> np.ndarray:
    """Competition ranking of per-method values (lower is better); tied
    values share the mean of the positions they occupy."""
    arr = np.asarray(best_values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("average_rank expects a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("average_rank expects finite values")
    return rankdata(arr, method="average")


@dataclass(frozen=True)
class TaskMeta:
    name: str
    y_min: float
    y_max: float


@dataclass
class ExperimentResult:
    """All runs of one experiment, keyed by (task, method, seed)."""

    protocol: str
    budget: int
    n_s: int
    n_cv: int
    methods: list[str]
    seeds: list[int]
    tasks: list[TaskMeta]
    runs: dict = field(default_factory=dict)

    def incumbent_curve(self, task: str, method: str, seed: int, true_values: bool = False) -> np.ndarray:
        """Per-trial incumbent values; with ``true_values`` the noiseless ones
        where recorded (synthetic tasks), falling back to observed."""
        records = self.runs[(task, method, seed)].records
        if true_values and records and "incumbent_y_true" in records[0]:
            return np.array([r["incumbent_y_true"] for r in records])
        return self.runs[(task, method, seed)].incumbents()

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        (out / "runs").mkdir(parents=True, exist_ok=True)
        manifest = {
            "protocol": self.protocol,
            "budget": self.budget,
            "n_s": self.n_s,
            "n_cv": self.n_cv,
            "methods": self.methods,
            "seeds": self.seeds,
            "tasks": [{"name": t.name, "y_min": t.y_min, "y_max": t.y_max} for t in self.tasks],
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=2)
        for (task, method, seed), result in self.runs.items():
            result.to_jsonl(out / "runs" / f"{task}__{method}__seed{seed}.jsonl")

    @classmethod
    def load(cls, result_dir) -> "ExperimentResult":
        root = Path(result_dir)
        manifest_path = root / "manifest.json"
        if not manifest_path.exists():
            raise ParseError(f"{root}: no manifest.json found")
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        result = cls(
            protocol=manifest["protocol"],
            budget=manifest["budget"],
            n_s=manifest["n_s"],
            n_cv=manifest["n_cv"],
            methods=list(manifest["methods"]),
            seeds=list(manifest["seeds"]),
            tasks=[TaskMeta(t["name"], t["y_min"], t["y_max"]) for t in manifest["tasks"]],
        )
        for t in result.tasks:
            for method in result.methods:
                for seed in result.seeds:
                    path = root / "runs" / f"{t.name}__{method}__seed{seed}.jsonl"
                    if path.exists():
                        result.runs[(t.name, method, seed)] = RunResult.from_jsonl(path)
        if not result.runs:
            raise ParseError(f"{root}: no run records found")
        return result


def _source_rows(task, n: int, seed: int):
    """Observation rows used to fit one source surrogate.

    Tabular tasks subsample the first n rows of a seeded shuffle; synthetic
    tasks evaluate n seeded uniform draws with observation noise.
    """
    if isinstance(task, TabularTask):
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(task.rows))[:n]
        configs = [task.rows[i][0] for i in order]
        ys = np.array([task.rows[i][1] for i in order])
        return configs, ys
    configs = space_mod.sample_uniform(task.space, n, seed)
    objective = task.make_objective(np.random.default_rng(derived_seed(seed, 1)))
    ys = np.array([objective(c) for c in configs])
    return configs, ys


def _fit_source(task, n_s: int, rows_seed: int, fit_seed: int, flip: bool) -> gp.GpSurrogate:
    configs, ys = _source_rows(task, n_s, rows_seed)
    if flip:
        ys = -ys
    x = space_mod.encode_batch(task.space, configs)
    return gp.fit(x, gp.standardize(ys).z, seed=fit_seed)


def build_static_sources(
    tasks, target_index: int, n_s: int, base_seed: int = 0, flip_source_outputs: bool = False
) -> SourceEnsemble:
    """Offline source ensemble for one target: every other task contributes a
    GP fitted on n_s of its observations. The target's own rows never enter."""
    models, ids = [], []
    for j, task in enumerate(tasks):
        if j == target_index:
            continue
        models.append(
            _fit_source(
                task,
                n_s,
                rows_seed=derived_seed(base_seed, _TAG_SOURCE_ROWS, j),
                fit_seed=derived_seed(base_seed, _TAG_SOURCE_FIT, j),
                flip=flip_source_outputs,
            )
        )
        ids.append(task.name)
    return SourceEnsemble(models=tuple(models), task_ids=tuple(ids))


def _task_objective(task, noise_seed: int):
    """(objective, candidate_grid) pair for running one task."""
    if isinstance(task, TabularTask):
        lookup = task.lookup()
        return (lambda config: lookup[bo._config_key(config)]), task.grid()
    return task.make_objective(np.random.default_rng(noise_seed)), None


def _augment_true_values(run_result: RunResult, task) -> RunResult:
    """Attach noiseless per-trial values for synthetic tasks.

    Observation noise stays in what the optimizer saw; the extra fields let
    metrics measure true progress against the known optimum.
    """
    if not isinstance(task, SyntheticTask):
        return run_result
    best = math.inf
    for record in run_result.records:
        x = np.array([record["config"][p.name] for p in task.space.params], dtype=float)
        y_true = float(task.noiseless(x[None, :])[0])
        best = min(best, y_true)
        record["y_true"] = y_true
        record["incumbent_y_true"] = best
    return run_result


def _normalize_seeds(seeds) -> list[int]:
    if isinstance(seeds, int):
        if seeds < 1:
            raise ValidationError("seed count must be positive")
        return list(range(seeds))
    out = [int(s) for s in seeds]
    if not out:
        raise ValidationError("at least one seed is required")
    return out


def _check_methods(methods) -> list[str]:
    methods = list(methods)
    if not methods:
        raise ValidationError("at least one method is required")
    unknown = set(methods) - set(bo.POLICIES)
    if unknown:
        raise ValidationError(f"unknown method(s): {sorted(unknown)}")
    return methods


def _static_job(task, sources, method, seed, run_seed, noise_seed, budget, n_cv, n_candidates):
    """One (target, method, seed) run; module-level so worker pools can call it."""
    objective, grid = _task_objective(task, noise_seed)
    return _augment_true_values(
        bo.run(
            task.space,
            objective,
            sources=sources,
            policy=method,
            budget=budget,
            seed=run_seed,
            n_cv=n_cv,
            n_candidates=n_candidates,
            candidate_grid=grid,
            task_id=task.name,
        ),
        task,
    )


def run_static(
    tasks,
    methods,
    budget: int,
    seeds,
    n_s: int = 50,
    n_cv: int = 5,
    n_candidates: int = bo.N_CANDIDATES,
    base_seed: int = 0,
    targets: list[int] | None = None,
    flip_source_outputs: bool = False,
    workers: int = 1,
) -> ExperimentResult:
    """Leave-one-out protocol: each selected task becomes the target once,
    with the remaining tasks as offline sources.

    Initial designs are shared across methods per (task, seed); observation
    noise streams are shared across methods as well. Independent runs may
    execute in parallel (``workers`` > 1) without changing any result.
    """
    tasks = list(tasks)
    if len(tasks) < 2:
        raise ValidationError("the static protocol needs at least two tasks")
    if budget < 3:
        raise ValidationError("budget must be at least 3")
    methods = _check_methods(methods)
    seeds = _normalize_seeds(seeds)
    target_indices = list(range(len(tasks))) if targets is None else list(targets)

    result = ExperimentResult(
        protocol="static",
        budget=budget,
        n_s=n_s,
        n_cv=n_cv,
        methods=methods,
        seeds=seeds,
        tasks=[TaskMeta(tasks[i].name, tasks[i].y_min, tasks[i].y_max) for i in target_indices],
    )
    jobs = []
    for ti in target_indices:
        task = tasks[ti]
        sources = build_static_sources(
            tasks, ti, n_s, base_seed=base_seed, flip_source_outputs=flip_source_outputs
        )
        for seed in seeds:
            run_seed = derived_seed(base_seed, _TAG_RUN, ti, seed)
            noise_seed = derived_seed(base_seed, _TAG_NOISE, ti, seed)
            for method in methods:
                jobs.append(
                    (
                        (task.name, method, seed),
                        (task, sources, method, seed, run_seed, noise_seed, budget, n_cv, n_candidates),
                    )
                )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(key, pool.submit(_static_job, *args)) for key, args in jobs]
            for key, future in futures:
                result.runs[key] = future.result()
    else:
        for key, args in jobs:
            result.runs[key] = _static_job(*args)
    return result


def _dynamic_chain(tasks, method, seed, budget, n_s, n_cv, n_candidates, base_seed):
    """One method's sequential pass over the arriving tasks."""
    out = []
    models: list[gp.GpSurrogate] = []
    ids: list[str] = []
    for ti, task in enumerate(tasks):
        sources = SourceEnsemble(models=tuple(models), task_ids=tuple(ids))
        objective, grid = _task_objective(task, derived_seed(base_seed, _TAG_NOISE, ti, seed))
        run_result = _augment_true_values(
            bo.run(
                task.space,
                objective,
                sources=sources,
                policy=method,
                budget=budget,
                seed=derived_seed(base_seed, _TAG_RUN, ti, seed),
                n_cv=n_cv,
                n_candidates=n_candidates,
                candidate_grid=grid,
                task_id=task.name,
            ),
            task,
        )
        out.append((task.name, run_result))
        head = run_result.history.observations[:n_s]
        x = space_mod.encode_batch(task.space, [o.config for o in head])
        ys = np.array([o.y for o in head])
        models.append(
            gp.fit(x, gp.standardize(ys).z, seed=derived_seed(base_seed, _TAG_SOURCE_FIT, ti, seed))
        )
        ids.append(task.name)
    return out


def run_dynamic(
    tasks,
    methods,
    budget: int,
    seeds,
    n_s: int = 50,
    n_cv: int = 5,
    n_candidates: int = bo.N_CANDIDATES,
    base_seed: int = 0,
    workers: int = 1,
) -> ExperimentResult:
    """Sequential-arrival protocol: task i uses the previously finished tasks
    as sources. Each method accumulates sources from its own runs; the first
    n_s observations of a finished task form its source history.

    Tasks within one (method, seed) chain are inherently sequential; with
    ``workers`` > 1 the independent chains run in parallel.
    """
    tasks = list(tasks)
    if not tasks:
        raise ValidationError("the dynamic protocol needs at least one task")
    if budget < 3:
        raise ValidationError("budget must be at least 3")
    methods = _check_methods(methods)
    seeds = _normalize_seeds(seeds)

    result = ExperimentResult(
        protocol="dynamic",
        budget=budget,
        n_s=n_s,
        n_cv=n_cv,
        methods=methods,
        seeds=seeds,
        tasks=[TaskMeta(t.name, t.y_min, t.y_max) for t in tasks],
    )
    chains = [(method, seed) for method in methods for seed in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (m, s, pool.submit(_dynamic_chain, tasks, m, s, budget, n_s, n_cv, n_candidates, base_seed))
                for m, s in chains
            ]
            for method, seed, future in futures:
                for task_name, run_result in future.result():
                    result.runs[(task_name, method, seed)] = run_result
    else:
        for method, seed in chains:
            for task_name, run_result in _dynamic_chain(
                tasks, method, seed, budget, n_s, n_cv, n_candidates, base_seed
            ):
                result.runs[(task_name, method, seed)] = run_result
    return result


def top_counts(result: ExperimentResult) -> dict[str, tuple[int, int]]:
    """Tasks on which each method reaches the best / second-best mean final
    performance; ties credit every tied method."""
    counts = {m: [0, 0] for m in result.methods}
    for t in result.tasks:
        finals = {
            m: float(np.mean([result.runs[(t.name, m, s)].records[-1]["incumbent_y"] for s in result.seeds]))
            for m in result.methods
        }
        distinct = sorted(set(finals.values()))
        for m, v in finals.items():
            if v == distinct[0]:
                counts[m][0] += 1
            elif len(distinct) > 1 and v == distinct[1]:
                counts[m][1] += 1
    return {m: (c[0], c[1]) for m, c in counts.items()}


def _write_csv(path, header, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def report(result: ExperimentResult, out_dir) -> list[str]:
    """Emit per-trial metric curves and per-run weight trajectories as CSV.

    Files: adtm.csv and avg_rank.csv (one column per method), overhead.csv
    (mean cumulative suggestion wallclock), weights/*.csv per transfer run,
    and top_counts.csv for dynamic results.
    """
    if not result.runs:
        raise ValidationError("cannot report an empty result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    budget = result.budget
    trials = np.arange(1, budget + 1)

    # ADTM: per method, averaged over seeds of the task-averaged curve.
    # Synthetic runs carry noiseless incumbents; use those where present.
    adtm_by_method = {}
    for method in result.methods:
        per_seed = []
        for seed in result.seeds:
            curves = [result.incumbent_curve(t.name, method, seed, true_values=True) for t in result.tasks]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                per_seed.append(
                    adtm(curves, [t.y_min for t in result.tasks], [t.y_max for t in result.tasks])
                )
        adtm_by_method[method] = np.mean(per_seed, axis=0)
    path = out / "adtm.csv"
    _write_csv(
        path,
        ["trial"] + result.methods,
        [
            [int(trials[i])] + [repr(float(adtm_by_method[m][i])) for m in result.methods]
            for i in range(budget)
        ],
    )
    written.append(str(path))

    # Average rank across methods, computed per (task, seed, trial).
    rank_sums = np.zeros((budget, len(result.methods)))
    count = 0
    for t in result.tasks:
        for seed in result.seeds:
            incs = np.stack([result.incumbent_curve(t.name, m, seed) for m in result.methods])
            for i in range(budget):
                rank_sums[i] += average_rank(incs[:, i])
            count += 1
    ranks = rank_sums / max(count, 1)
    path = out / "avg_rank.csv"
    _write_csv(
        path,
        ["trial"] + result.methods,
        [[int(trials[i])] + [repr(float(r)) for r in ranks[i]] for i in range(budget)],
    )
    written.append(str(path))

    # Mean cumulative suggestion overhead per trial.
    overhead = {}
    for method in result.methods:
        cum = []
        for t in result.tasks:
            for seed in result.seeds:
                wall = np.array(
                    [r["suggest_wallclock_ms"] for r in result.runs[(t.name, method, seed)].records]
                )
                cum.append(np.cumsum(wall))
        overhead[method] = np.mean(cum, axis=0)
    path = out / "overhead.csv"
    _write_csv(
        path,
        ["trial"] + result.methods,
        [
            [int(trials[i])] + [repr(float(overhead[m][i])) for m in result.methods]
            for i in range(budget)
        ],
    )
    written.append(str(path))

    # Weight trajectories for runs that learned them.
    weights_dir = out / "weights"
    for (task, method, seed), run_result in sorted(result.runs.items()):
        rows = [
            r
            for r in run_result.records
            if r.get("p_source") is not None and r.get("p_target") is not None
        ]
        if not rows:
            continue
        weights_dir.mkdir(exist_ok=True)
        k = max(len(r["w"] or []) for r in rows)
        path = weights_dir / f"{task}__{method}__seed{seed}.csv"
        _write_csv(
            path,
            ["iteration", "p_source", "p_target"] + [f"w_{i + 1}" for i in range(k)],
            [
                [r["iteration"], repr(float(r["p_source"])), repr(float(r["p_target"]))]
                + [repr(float(v)) for v in (r["w"] or [])]
                for r in rows
            ],
        )
        written.append(str(path))

    if result.protocol == "dynamic":
        counts = top_counts(result)
        path = out / "top_counts.csv"
        _write_csv(
            path,
            ["method", "top1", "top2"],
            [[m, counts[m][0], counts[m][1]] for m in result.methods],
        )
        written.append(str(path))
    return written
