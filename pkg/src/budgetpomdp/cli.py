"""Command-line entry point: ``budgetpomdp <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bench
from .agent.network import PolicyParameters
from .alloc import allocate_bruteforce, allocate_kkt, allocate_proportional, write_allocation_csv
from .errors import BuildOrderError, ContractViolation, DataError, ModelCorruptionError, ParameterError, ResourceError, SchemaError
from .model import Fleet, expected_unrepaired_lifetime, generate_fleet
from .oracle import OracleCache
from .survival.curves import read_curves_csv, write_curves_csv
from .survival.forest import ForestConfig, ForestModel, train_forest

log = logging.getLogger("budgetpomdp")

OUTPUT_ENV = "BUDGETPOMDP_OUTPUT"
MANIFEST_SCHEMA = "budgetpomdp.manifest/1"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (ParameterError, SchemaError, DataError, BuildOrderError, FileNotFoundError)
RUNTIME_ERRORS = (ResourceError, ModelCorruptionError, ContractViolation)


class UsageError(Exception):
    """Bad command line or config; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config and manifest helpers


def load_config_file(path: str | Path) -> dict:
    """Read a TOML or JSON config; a run manifest is accepted too (its recorded config is used)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} does not exist")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"{path}: invalid TOML: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: invalid JSON: {exc}") from exc
    if isinstance(data, dict) and data.get("schema") == MANIFEST_SCHEMA:
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a table of settings")
    return data


def resolve_config(args: argparse.Namespace, overrides: dict) -> bench.ExperimentConfig:
    data = load_config_file(args.config) if getattr(args, "config", None) else {}
    data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
    if getattr(args, "output_dir", None):
        data["output_dir"] = args.output_dir
    elif os.environ.get(OUTPUT_ENV):
        data["output_dir"] = os.environ[OUTPUT_ENV]
    return bench.ExperimentConfig.from_dict(data)


def sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path, command: str, cfg: bench.ExperimentConfig, artifacts: dict[str, Path], name: str | None = None) -> Path:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "seeds": {
            "fleet_seed": cfg.fleet_seed,
            "seed": cfg.seed,
            "train_seed": cfg.train_seed,
            "forest_seed": cfg.forest_seed,
            "alloc_fleet_seed": cfg.alloc_fleet_seed,
        },
        "artifacts": {k: {"path": str(Path(p).relative_to(out)) if Path(p).is_relative_to(out) else str(p), "sha256": sha256(p)} for k, p in artifacts.items()},
    }
    path = out / (name or f"manifest-{command}.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def parse_int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from exc


def require_file(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} {p} not found")
    return p


def output_dir(cfg: bench.ExperimentConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_forest_eval_csv(path: Path, ev: bench.ForestEvaluation) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component_id", "split", "fitted_beta", "predicted_beta"])
        for cid, f, p in zip(ev.test_ids, ev.test_fitted, ev.test_predicted):
            writer.writerow([cid, "test", repr(float(f)), repr(float(p))])


def read_forest_eval_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["split"] == "test"]
    return np.array([float(r["fitted_beta"]) for r in rows]), np.array([float(r["predicted_beta"]) for r in rows])


def read_timing_csv(path: Path) -> bench.ScalingTable:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    counts = tuple(sorted({int(r["n_components"]) for r in rows}))
    stages = list(dict.fromkeys(r["stage"] for r in rows))
    secs = {s: np.zeros((len(counts), 1)) for s in stages}
    for r in rows:
        secs[r["stage"]][counts.index(int(r["n_components"])), 0] = float(r["mean_seconds"])
    return bench.ScalingTable(counts, 1, secs)


def read_allocation_runs_csv(path: Path) -> dict[str, np.ndarray]:
    data: dict[str, dict[tuple[int, str], int]] = {}
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            data.setdefault(r["method"], {})[(int(r["run"]), r["component_id"])] = int(r["survival_time"])
    out = {}
    for method, cells in data.items():
        runs = sorted({k[0] for k in cells})
        ids = list(dict.fromkeys(k[1] for k in cells))
        out[method] = np.array([[cells[(r, c)] for c in ids] for r in runs], dtype=float)
    return out


def read_curve_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# commands


def cmd_gen_fleet(args) -> int:
    cfg = resolve_config(args, {"fleet_count": args.count, "fleet_seed": args.seed, "horizon": args.horizon})
    out = output_dir(cfg)
    fleet = generate_fleet(cfg.fleet_count, cfg.fleet_seed, total_budget=args.total_budget, horizon=cfg.horizon)
    path = Path(args.out) if args.out else out / "fleet.json"
    fleet.save(path)
    write_manifest(out, "gen-fleet", cfg, {"fleet": path})
    print(path)
    return EXIT_OK


def _load_fleet(cfg: bench.ExperimentConfig, path: str | None) -> Fleet:
    if path:
        return Fleet.load(require_file(path, "fleet file"))
    return cfg.load_fleet()


def cmd_train(args) -> int:
    cfg = resolve_config(args, {"train_steps": args.steps, "train_seed": args.seed, "fleet_path": args.fleet, "budgets": args.budgets})
    out = output_dir(cfg)
    fleet = _load_fleet(cfg, None)
    result = bench.train_policies(cfg, fleet, OracleCache(), which=(args.kind,))[args.kind]
    ckpt = Path(args.out) if args.out else out / f"{args.kind}.json"
    curve = ckpt.with_name(ckpt.stem + "_curve.csv")
    result.params.save(ckpt)
    result.write_curve(curve)
    arts = {"checkpoint": ckpt, "training_curve": curve}
    if not args.no_figures:
        from . import plots

        arts["figure"] = plots.training_curve(result.curve, out / "figures" / f"{args.kind}_training.png", args.kind)
    write_manifest(out, "train", cfg, arts, f"manifest-train-{args.kind}.json")
    print(ckpt)
    return EXIT_OK


def cmd_fit_curves(args) -> int:
    cfg = resolve_config(args, {"fleet_path": args.fleet, "curve_budgets": args.budgets})
    out = output_dir(cfg)
    fleet = _load_fleet(cfg, None)
    curves = bench.fit_fleet_curves(fleet, cfg.curve_budgets)
    path = Path(args.out) if args.out else out / "curves.csv"
    write_curves_csv(path, curves)
    write_manifest(out, "fit-curves", cfg, {"curves": path})
    print(path)
    return EXIT_OK


def cmd_train_forest(args) -> int:
    cfg = resolve_config(args, {"fleet_path": args.fleet, "forest_holdout": args.holdout})
    out = output_dir(cfg)
    fleet = _load_fleet(cfg, None)
    curves = read_curves_csv(require_file(args.curves, "curve table")) if args.curves else bench.fit_fleet_curves(fleet, cfg.curve_budgets)
    by_id = {c.component_id: c for c in curves}
    missing = [c.id for c in fleet.components if c.id not in by_id]
    if missing:
        raise DataError(f"curve table lacks components {missing[:5]}...; refit with `fit-curves` on the same fleet")
    ordered = [by_id[c.id] for c in fleet.components]
    fcfg = ForestConfig(n_trees=args.trees, max_depth=args.depth, min_leaf=args.min_leaf)
    ev = bench.evaluate_forest(fleet, ordered, cfg.forest_holdout, fcfg, seed=cfg.seed)
    model = train_forest([(c.features(), cv.beta) for c, cv in zip(fleet.components, ordered)], fcfg, seed=cfg.seed)
    path = Path(args.out) if args.out else out / "forest.json"
    model.save(path)
    eval_path = out / "forest_eval.csv"
    write_forest_eval_csv(eval_path, ev)
    write_manifest(out, "train-forest", cfg, {"forest": path, "forest_eval": eval_path})
    print(f"{path}\nheld-out R^2 = {ev.r2:.4f}, MSE = {ev.mse:.3e}")
    return EXIT_OK


def cmd_allocate(args) -> int:
    cfg = resolve_config(args, {})
    out = output_dir(cfg)
    curves = read_curves_csv(require_file(args.curves, "curve table"))
    ids = [c.component_id for c in curves]
    if args.method == "kkt":
        quanta = None
        if args.fleet:
            fleet = Fleet.load(require_file(args.fleet, "fleet file"))
            spec_by_id = {c.id: c for c in fleet.components}
            quanta = [spec_by_id[i].repair_cost + args.inspection_reserve * spec_by_id[i].inspect_cost for i in ids]
        result = allocate_kkt(curves, args.budget, quantum=args.quantum, quanta=quanta)
    elif args.method == "bruteforce":
        result = allocate_bruteforce(curves, args.budget, args.grid)
    else:
        if not args.fleet:
            raise UsageError("the proportional method needs --fleet (repair costs and lifetimes)")
        fleet = Fleet.load(require_file(args.fleet, "fleet file"))
        spec_by_id = {c.id: c for c in fleet.components}
        specs = [spec_by_id[i] for i in ids]
        lifetimes = [expected_unrepaired_lifetime(s, 1000, cfg.seed + k)[0] for k, s in enumerate(specs)]
        result = allocate_proportional(specs, lifetimes, args.budget)
    path = Path(args.out) if args.out else out / f"allocation_{args.method}.csv"
    write_allocation_csv(path, ids, result, curves)
    write_manifest(out, "allocate", cfg, {"allocation": path})
    print(f"{path}\nallocated {sum(result.budgets)} of {result.total_budget}")
    return EXIT_OK


def _load_params(path: str | None, what: str) -> PolicyParameters | None:
    if not path:
        return None
    return PolicyParameters.load(require_file(path, f"{what} checkpoint"))


def cmd_evaluate(args) -> int:
    policies = tuple(p.strip() for p in args.policies.split(",")) if args.policies else None
    if policies:
        unknown = [p for p in policies if p not in bench.POLICY_NAMES]
        if unknown:
            raise UsageError(f"unknown policy {', '.join(unknown)}; valid policies: {', '.join(bench.POLICY_NAMES)}")
    cfg = resolve_config(args, {"policies": policies, "budgets": args.budgets, "runs": args.runs, "seed": args.seed, "fleet_path": args.fleet})
    out = output_dir(cfg)
    fleet = _load_fleet(cfg, None)
    cache = OracleCache()
    pols = bench.build_policies(cfg, cache, _load_params(args.guided, "guided"), _load_params(args.vanilla, "vanilla"))
    sweep = bench.run_policy_sweep(cfg, fleet, pols)
    path = Path(args.out) if args.out else out / "metrics.csv"
    bench.write_metrics_csv(path, sweep.rows, fleet.horizon)
    arts = {"metrics": path}
    if not args.no_figures:
        from . import plots

        arts["figure"] = plots.policy_sweep(sweep.rows, out / "figures" / "policy_sweep.png")
    write_manifest(out, "evaluate", cfg, arts)
    print(path)
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg = resolve_config(args, {"scaling_counts": args.counts, "scaling_repeats": args.repeats, "seed": args.seed})
    out = output_dir(cfg)
    model = ForestModel.load(require_file(args.forest, "forest model"))
    params = _load_params(args.guided, "guided")
    cache = OracleCache()
    policy = bench.build_policies(cfg, cache, params, names=("guided-ppo",))["guided-ppo"] if params else bench.build_policies(cfg, cache, names=("oracle",))["oracle"]
    table = bench.run_scaling_study(cfg.scaling_counts, cfg.scaling_repeats, model, policy, cfg.seed, cfg.horizon, n_particles=cfg.n_particles)
    path = Path(args.out) if args.out else out / "timing.csv"
    bench.write_timing_csv(path, table)
    arts = {"timing": path}
    if not args.no_figures:
        from . import plots

        arts["figure"] = plots.scaling(table, out / "figures" / "scaling.png")
    write_manifest(out, "scaling", cfg, arts)
    print(path)
    for stage, slope in table.slopes.items():
        print(f"{stage}: log-log slope {slope:.3f}")
    return EXIT_OK


def run_pipeline(cfg: bench.ExperimentConfig, figures: bool = True) -> dict:
    """All stages with one config; returns the summary written to ``summary.json``."""
    out = output_dir(cfg)
    cache = OracleCache()
    arts: dict[str, Path] = {}
    summary: dict = {}

    fleet = cfg.load_fleet()
    arts["fleet"] = out / "fleet.json"
    fleet.save(arts["fleet"])

    trained = bench.train_policies(cfg, fleet, cache)
    for kind, res in trained.items():
        arts[f"{kind}_checkpoint"] = out / f"{kind}.json"
        arts[f"{kind}_training_curve"] = out / f"{kind}_curve.csv"
        res.params.save(arts[f"{kind}_checkpoint"])
        res.write_curve(arts[f"{kind}_training_curve"])
    guided, vanilla = trained["guided"].params, trained["vanilla"].params

    sweep = bench.run_policy_sweep(cfg, fleet, bench.build_policies(cfg, cache, guided, vanilla))
    arts["metrics"] = out / "metrics.csv"
    bench.write_metrics_csv(arts["metrics"], sweep.rows, fleet.horizon)
    summary["policy_sweep"] = [asdict(r) for r in sweep.rows]

    ffleet = generate_fleet(cfg.forest_components, cfg.forest_seed, horizon=cfg.horizon)
    arts["forest_fleet"] = out / "forest_fleet.json"
    ffleet.save(arts["forest_fleet"])
    curves = bench.fit_fleet_curves(ffleet, cfg.curve_budgets, cache)
    arts["curves"] = out / "curves.csv"
    write_curves_csv(arts["curves"], curves)
    ev = bench.evaluate_forest(ffleet, curves, cfg.forest_holdout, seed=cfg.seed)
    arts["forest_eval"] = out / "forest_eval.csv"
    write_forest_eval_csv(arts["forest_eval"], ev)
    model = train_forest([(c.features(), cv.beta) for c, cv in zip(ffleet.components, curves)], seed=cfg.seed)
    arts["forest"] = out / "forest.json"
    model.save(arts["forest"])
    summary["forest"] = {"holdout_r2": ev.r2, "holdout_mse": ev.mse}

    afleet = generate_fleet(cfg.alloc_components, cfg.alloc_fleet_seed, total_budget=cfg.alloc_budget, horizon=cfg.horizon)
    arts["alloc_fleet"] = out / "alloc_fleet.json"
    afleet.save(arts["alloc_fleet"])
    guided_policy = bench.build_policies(cfg, cache, guided, names=("guided-ppo",))["guided-ppo"]
    comp = bench.run_allocation_comparison(cfg, afleet, model, guided_policy, cache)
    pred = bench.predicted_curves(afleet, model, cache)
    ids = [c.id for c in afleet.components]
    arts["allocation_rf"] = out / "allocation_rf.csv"
    arts["allocation_baseline"] = out / "allocation_baseline.csv"
    write_allocation_csv(arts["allocation_rf"], ids, comp.rf, pred)
    write_allocation_csv(arts["allocation_baseline"], ids, comp.baseline, pred)
    arts["allocation_runs"] = out / "allocation_runs.csv"
    bench.write_allocation_runs_csv(arts["allocation_runs"], comp)
    ok, diff, se = comp.paired()
    summary["allocation"] = {"t_max_rf": comp.t_max_rf, "t_max_baseline": comp.t_max_baseline, "paired_diff": diff, "paired_se": se}

    table = bench.run_scaling_study(cfg.scaling_counts, cfg.scaling_repeats, model, guided_policy, cfg.seed, cfg.horizon, n_particles=cfg.n_particles)
    arts["timing"] = out / "timing.csv"
    bench.write_timing_csv(arts["timing"], table)
    summary["scaling_slopes"] = table.slopes

    safety = bench.SafetyTally()
    for tally in (sweep.safety, comp.safety, table.safety):
        safety.merge(tally)
    summary["safety"] = asdict(safety)

    arts["summary"] = out / "summary.json"
    bench.write_summary(arts["summary"], cfg, summary)
    if figures:
        arts.update(render_figures(out))
    write_manifest(out, "pipeline", cfg, arts, "manifest.json")
    return summary


def render_figures(out: Path) -> dict[str, Path]:
    """Render every figure whose source CSV exists in ``out``."""
    from . import plots

    figs: dict[str, Path] = {}
    fig_dir = out / "figures"
    if (out / "metrics.csv").exists():
        figs["fig_policy_sweep"] = plots.policy_sweep(bench.read_metrics_csv(out / "metrics.csv"), fig_dir / "policy_sweep.png")
    if (out / "forest_eval.csv").exists():
        figs["fig_forest"] = plots.forest_fit(*read_forest_eval_csv(out / "forest_eval.csv"), fig_dir / "forest_fit.png")
    if (out / "allocation_runs.csv").exists():
        figs["fig_allocation"] = plots.allocation_violins(read_allocation_runs_csv(out / "allocation_runs.csv"), fig_dir / "allocation.png")
    if (out / "timing.csv").exists():
        figs["fig_scaling"] = plots.scaling(read_timing_csv(out / "timing.csv"), fig_dir / "scaling.png")
    for kind in ("guided", "vanilla"):
        path = out / f"{kind}_curve.csv"
        if path.exists():
            figs[f"fig_{kind}_training"] = plots.training_curve(read_curve_rows(path), fig_dir / f"{kind}_training.png", kind)
    return figs


def cmd_pipeline(args) -> int:
    cfg = resolve_config(args, {"seed": args.seed, "train_steps": args.steps, "runs": args.runs})
    summary = run_pipeline(cfg, figures=not args.no_figures)
    print(json.dumps({k: summary[k] for k in ("forest", "allocation", "scaling_slopes", "safety")}, indent=2, default=float))
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.dir) if args.dir else Path(os.environ.get(OUTPUT_ENV, "out"))
    if not out.is_dir():
        raise FileNotFoundError(f"output directory {out} not found; run `pipeline` first")
    figs = render_figures(out)
    if not figs:
        raise DataError(f"{out} holds no harness CSVs to plot")
    for path in figs.values():
        print(path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="budgetpomdp", description="Budgeted maintenance planning: fleets, agents, curves, allocation, benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, figures: bool = False):
        sp.add_argument("--config", help="TOML/JSON config file (a run manifest also works); flags override it")
        sp.add_argument("--output-dir", help=f"output directory (default: ${OUTPUT_ENV} or the config's output_dir)")
        if figures:
            sp.add_argument("--no-figures", action="store_true", help="skip PNG figures (CSV output is unchanged)")

    sp = sub.add_parser("gen-fleet", help="draw a synthetic fleet")
    common(sp)
    sp.add_argument("--count", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--total-budget", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_gen_fleet)

    sp = sub.add_parser("train", help="meta-train a PPO agent")
    common(sp, figures=True)
    sp.add_argument("--fleet")
    sp.add_argument("--kind", choices=("guided", "vanilla"), default="guided")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--budgets", type=parse_int_list, help="training budgets, comma-separated")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("fit-curves", help="fit survival-vs-budget curves")
    common(sp)
    sp.add_argument("--fleet")
    sp.add_argument("--budgets", type=parse_int_list)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit_curves)

    sp = sub.add_parser("train-forest", help="train the beta regressor and report held-out quality")
    common(sp)
    sp.add_argument("--fleet")
    sp.add_argument("--curves")
    sp.add_argument("--holdout", type=float)
    sp.add_argument("--trees", type=int, default=100)
    sp.add_argument("--depth", type=int, default=12)
    sp.add_argument("--min-leaf", type=int, default=2)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_train_forest)

    sp = sub.add_parser("allocate", help="split a fleet budget over fitted or predicted curves")
    common(sp)
    sp.add_argument("--curves", required=True)
    sp.add_argument("--budget", type=int, required=True)
    sp.add_argument("--method", choices=("kkt", "bruteforce", "proportional"), default="kkt")
    sp.add_argument("--fleet", help="fleet file (needed for proportional; enables repair-sized rounding for kkt)")
    sp.add_argument("--quantum", type=int, default=1)
    sp.add_argument("--inspection-reserve", type=int, default=10)
    sp.add_argument("--grid", type=int, default=10)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_allocate)

    sp = sub.add_parser("evaluate", help="policy sweep over budgets with paired seeds")
    common(sp, figures=True)
    sp.add_argument("--fleet")
    sp.add_argument("--policies", help=f"comma-separated subset of {','.join(bench.POLICY_NAMES)}")
    sp.add_argument("--guided")
    sp.add_argument("--vanilla")
    sp.add_argument("--budgets", type=parse_int_list)
    sp.add_argument("--runs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("scaling", help="per-stage wall clock vs fleet size")
    common(sp, figures=True)
    sp.add_argument("--forest", required=True)
    sp.add_argument("--guided")
    sp.add_argument("--counts", type=parse_int_list)
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("pipeline", help="run every stage with one config")
    common(sp, figures=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--runs", type=int)
    sp.set_defaults(func=cmd_pipeline)

    sp = sub.add_parser("report", help="render figures from an existing output directory")
    sp.add_argument("--dir")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - report, then fail with the runtime code
        log.exception("unexpected failure")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
