"""Command-line interface for running benchmark experiments.

Verbs: run-static, run-dynamic, bench-synthetic, report, selftest. Commands
exit 0 on success; on failure they print a machine-readable JSON error
record to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, bo, gp, ranking, space as space_mod, transfer
from .errors import ParseError, ValidationError


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: cannot read JSON ({exc})") from exc


def _build_tasks(tasks_cfg):
    if not isinstance(tasks_cfg, dict) or "kind" not in tasks_cfg:
        raise ParseError("config 'tasks' must be an object with a 'kind'")
    kind = tasks_cfg["kind"]
    if kind == "tabular":
        paths = tasks_cfg.get("paths", [])
        if not paths:
            raise ParseError("tabular tasks need a non-empty 'paths' list")
        return [bench.load_tabular(p) for p in paths]
    if kind == "synthetic":
        family = tasks_cfg.get("family")
        if not isinstance(family, dict):
            raise ParseError("synthetic tasks need a 'family' object")
        return bench.make_synthetic_family(bench.SyntheticFamilySpec.from_dict(family))
    raise ParseError(f"unknown task kind {kind!r}")


def _require_out_dir(args, cfg) -> str:
    out = args.out or cfg.get("out_dir")
    if not out:
        raise ValidationError("an output directory is required (--out or config 'out_dir')")
    return out


def _cmd_run(args, protocol: str) -> int:
    cfg = _load_json(args.config)
    tasks = _build_tasks(cfg.get("tasks"))
    common = dict(
        methods=cfg.get("methods", ["transbo"]),
        budget=int(cfg.get("budget", 30)),
        seeds=cfg.get("seeds", 1),
        n_s=int(cfg.get("N_S", cfg.get("n_s", 50))),
        n_cv=int(cfg.get("n_cv", 5)),
        n_candidates=int(cfg.get("n_candidates", bo.N_CANDIDATES)),
        base_seed=int(cfg.get("base_seed", 0)),
        workers=int(cfg.get("workers", 1)),
    )
    if protocol == "static":
        result = bench.run_static(
            tasks,
            targets=cfg.get("targets"),
            flip_source_outputs=bool(cfg.get("flip_sources", False)),
            **common,
        )
    else:
        result = bench.run_dynamic(tasks, **common)
    out = _require_out_dir(args, cfg)
    result.save(out)
    print(f"wrote {len(result.runs)} run(s) to {out}")
    return 0


def _cmd_bench_synthetic(args) -> int:
    spec_data = _load_json(args.spec)
    grid_size = args.grid_size or int(spec_data.pop("grid_size", 2000))
    spec = bench.SyntheticFamilySpec.from_dict(spec_data)
    tasks = bench.make_synthetic_family(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    for i, task in enumerate(tasks):
        configs = space_mod.sample_uniform(task.space, grid_size, bo.derived_seed(spec.seed, 50, i))
        objective = task.make_objective(np.random.default_rng(bo.derived_seed(spec.seed, 51, i)))
        rows = [(c, objective(c)) for c in configs]
        table = bench.TabularTask.from_rows(task.name, task.space, rows)
        path = out / f"{task.name}.json"
        bench.save_tabular(table, path)
        manifest.append(
            {
                "name": task.name,
                "file": path.name,
                "noiseless_y_min": task.y_min,
                "noiseless_y_max": task.y_max,
                "optimum": None if task.optimum is None else task.optimum.tolist(),
                "translation": task.translation.tolist(),
                "scale": task.scale,
                "noise_sigma": task.noise_sigma,
            }
        )
    with open(out / "family.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    print(f"wrote {len(tasks)} task table(s) to {out}")
    return 0


def _cmd_report(args) -> int:
    result = bench.ExperimentResult.load(args.result_dir)
    written = bench.report(result, args.out_dir)
    for path in written:
        print(path)
    return 0


def _check(name: str, fn) -> bool:
    try:
        fn()
    except Exception as exc:
        print(f"FAIL {name}: {exc}")
        return False
    print(f"PASS {name}")
    return True


def _selftest() -> int:
    """Small oracle suite: closed forms against independent numerics."""
    rng = np.random.default_rng(1234)

    def check_encoding():
        s = space_mod.ConfigSpace(
            [
                space_mod.ParamSpec(name="a", kind="continuous", low=0, high=10),
                space_mod.ParamSpec(name="b", kind="categorical", categories=("x", "y", "z")),
                space_mod.ParamSpec(name="c", kind="continuous-log", low=0.01, high=2.0),
            ]
        )
        vec = space_mod.encode(s, space_mod.Configuration({"a": 5.0, "b": "y", "c": np.sqrt(0.02)}))
        assert np.allclose(vec, [0.5, 0.0, 1.0, 0.0, 0.5], atol=1e-12)

    def check_standardize():
        st = gp.standardize([1.0, 2.0, 3.0])
        assert abs(st.mean - 2.0) < 1e-12 and abs(st.std - np.sqrt(2.0 / 3.0)) < 1e-12

    def check_ranking_values():
        pm = ranking.PredictionMatrix(np.array([[0.0], [0.0]]), np.array([0.0, 1.0]))
        w = ranking.SimplexWeights([1.0])
        assert abs(ranking.ranking_loss(pm, w) - np.log(2.0) / 4.0) < 1e-12

    def check_ranking_grad():
        for _ in range(10):
            a = rng.normal(size=(8, 3))
            y = rng.normal(size=8)
            pm = ranking.PredictionMatrix(a, y)
            w = ranking.SimplexWeights(ranking.project_to_simplex(rng.uniform(size=3)))
            grad = ranking.ranking_loss_grad(pm, w)
            for d in range(3):
                e = np.zeros(3)
                e[d] = 1e-6
                fd = (_loss_raw(a, y, w.values + e) - _loss_raw(a, y, w.values - e)) / 2e-6
                assert abs(grad[d] - fd) <= 1e-5 * max(1.0, abs(fd))

    def _loss_raw(a, y, w):
        j, k = np.nonzero(y[:, None] < y[None, :])
        s = a @ w
        z = s[k] - s[j]
        return float((np.maximum(-z, 0) + np.log1p(np.exp(-np.abs(z)))).sum()) / y.size**2

    def check_solver_vs_grid():
        for _ in range(4):
            a = rng.normal(size=(12, 2))
            y = rng.normal(size=12)
            pm = ranking.PredictionMatrix(a, y)
            sol = ranking.minimize_on_simplex(pm, ranking.SimplexWeights.uniform(2))
            loss_sol = ranking.ranking_loss(pm, sol)
            grid = np.arange(0.0, 1.0 + 1e-12, 0.01)
            loss_grid = min(
                ranking.ranking_loss(pm, ranking.SimplexWeights([g, 1.0 - g])) for g in grid
            )
            assert loss_sol <= loss_grid + 1e-3

    def check_ei():
        for _ in range(20):
            mean = float(rng.uniform(-2, 2))
            sigma = float(rng.uniform(0.05, 3.0))
            y_best = float(rng.uniform(-2, 2))
            closed = bo.expected_improvement(mean, sigma**2, y_best)
            ys = np.linspace(mean - 10 * sigma, mean + 10 * sigma, 100001)
            pdf = np.exp(-0.5 * ((ys - mean) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
            quad = np.trapezoid(np.maximum(y_best - ys, 0.0) * pdf, ys)
            assert abs(closed - quad) < 1e-6
        assert bo.expected_improvement(0.3, 0.0, 0.5) == 0.2

    def check_rank():
        assert np.array_equal(bench.average_rank([0.2, 0.3, 0.3, 0.45]), [1.0, 2.5, 2.5, 4.0])

    def check_combined():
        class _Stub:
            def __init__(self, m, v):
                self.m, self.v = m, v

            def predict(self, x):
                return self.m, self.v

        mean, var = transfer.combined_predict(
            [_Stub(1.0, 4.0), _Stub(3.0, 4.0)], ranking.SimplexWeights([0.5, 0.5]), np.zeros(1)
        )
        assert mean == 2.0 and var == 2.0

    checks = [
        ("encoding", check_encoding),
        ("standardize", check_standardize),
        ("ranking-loss-values", check_ranking_values),
        ("ranking-gradient-fd", check_ranking_grad),
        ("simplex-solver-vs-grid", check_solver_vs_grid),
        ("expected-improvement-quadrature", check_ei),
        ("average-rank-ties", check_rank),
        ("combined-prediction", check_combined),
    ]
    ok = all([_check(name, fn) for name, fn in checks])
    return 0 if ok else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tlbo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-static", help="run the leave-one-out protocol from a config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides config 'out_dir')")

    p = sub.add_parser("run-dynamic", help="run the sequential-arrival protocol from a config file")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides config 'out_dir')")

    p = sub.add_parser("bench-synthetic", help="materialize a synthetic family as tabular task files")
    p.add_argument("spec")
    p.add_argument("--out", required=True)
    p.add_argument("--grid-size", type=int, default=None)

    p = sub.add_parser("report", help="emit CSV summaries from a result directory")
    p.add_argument("result_dir")
    p.add_argument("out_dir")

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run-static":
            return _cmd_run(args, "static")
        if args.command == "run-dynamic":
            return _cmd_run(args, "dynamic")
        if args.command == "bench-synthetic":
            return _cmd_bench_synthetic(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "selftest":
            return _selftest()
        raise ValidationError(f"unknown command {args.command!r}")
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
