"""Command-line front end: scenario files, single runs, batch matrices and reports.

Exit codes: 0 converged (batch and report: completed), 2 budget exhausted,
1 planning failure, 64 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .dynamics import CONTROL_NAMES, STATE_NAMES
from .environment import (Scenario, make_empty_scenario, make_random_columns_scenario,
                          make_two_obstacle_scenario)
from .guess import GuessLevel
from .metrics import EvaluationRow, evaluate, order_rows, render_table, table_csv
from .params import CRAZYFLIE
from .refine import Method, PlanOptions, PlanResult, PlanStatus, plan
from .solver import SolveOptions
from .transcribe import Mesh

log = logging.getLogger("uavplan")

CONFIG_SCHEMA = "uavplan.run/1"
RESULT_SCHEMA = "uavplan.result/1"
BUILTIN_SCENARIOS = ("empty", "two_obstacles", "random_columns")
ENV_OUTPUT_ROOT = "UAVPLAN_OUTPUT_ROOT"
ENV_JOBS = "UAVPLAN_JOBS"
TRAJECTORY_SAMPLES = 1000

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BUDGET = 2
EXIT_USAGE = 64


class ConfigError(ValueError):
    """Invalid run configuration."""


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "two_obstacles"
    method: str = "PSM"
    guess_level: str = "Position"
    constrained: bool = True
    seed: int = 0
    column_count: int = 30
    iterations: int = 10
    wall_clock_budget: float = 900.0
    psm_degree: int = 30
    psem_degree: int = 10
    psem_segments: int = 4
    mesh: dict | None = None
    solver: dict = field(default_factory=dict)
    output: str = ""

    def validate(self) -> "RunConfig":
        """Normalised copy; raises :class:`ConfigError` on invalid fields."""
        try:
            method = Method.parse(self.method).value
            level = GuessLevel.parse(self.guess_level).label
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.scenario not in BUILTIN_SCENARIOS and not Path(self.scenario).is_file():
            raise ConfigError(f"scenario {self.scenario!r} is neither a built-in "
                              f"({', '.join(BUILTIN_SCENARIOS)}) nor an existing file")
        for name in ("iterations", "psm_degree", "psem_degree", "psem_segments"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not self.wall_clock_budget > 0:
            raise ConfigError("wall_clock_budget must be positive")
        if self.column_count < 0:
            raise ConfigError("column_count must be >= 0")
        try:
            self.solver_options()
            if self.mesh is not None:
                Mesh.from_dict(self.mesh)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from None
        return replace(self, method=method, guess_level=level)

    def solver_options(self) -> SolveOptions:
        opts = dict(self.solver)
        opts.setdefault("wall_clock_budget", self.wall_clock_budget)
        return SolveOptions(**opts)

    def plan_options(self) -> PlanOptions:
        return PlanOptions(
            max_iterations=self.iterations,
            wall_clock_budget=self.wall_clock_budget,
            psm_degree=self.psm_degree,
            psem_degree=self.psem_degree,
            psem_default_segments=self.psem_segments,
            initial_mesh=None if self.mesh is None else Mesh.from_dict(self.mesh),
            solver=self.solver_options(),
        )

    def load_scenario(self) -> Scenario:
        if self.scenario == "empty":
            return make_empty_scenario()
        if self.scenario == "two_obstacles":
            return make_two_obstacle_scenario()
        if self.scenario == "random_columns":
            return make_random_columns_scenario(self.column_count, self.seed)
        return Scenario.from_dict(json.loads(Path(self.scenario).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema"] = CONFIG_SCHEMA
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if d.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
            raise ConfigError(f"unsupported config schema {d.get('schema')!r}")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known - {"schema"}
        if extra:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(extra))}")
        return cls(**{k: v for k, v in d.items() if k in known})


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------- outputs


def _split_timing(summary: dict) -> tuple[dict, dict]:
    """Move every wall-clock quantity out of ``summary`` so the rest is reproducible."""
    summary = json.loads(json.dumps(_jsonable(summary)))
    timing = {"plan_wall_time": summary.pop("wall_time")}
    timing["solver_wall_times"] = [s.pop("wall_time") for s in summary["solves"]]
    return summary, timing


def write_run(out_dir: Path, cfg: RunConfig, result: PlanResult, row: EvaluationRow) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    summary, timing = _split_timing(result.summary())
    timing["total_time"] = row.total_time
    timing["created"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    row_d = row.to_dict()
    row_d.pop("total_time")
    doc = {"schema": RESULT_SCHEMA, "config": cfg.to_dict(), "result": summary,
           "row": row_d, "timestamp": timing}
    (out_dir / "result.json").write_text(_dump(doc))
    (out_dir / "row.csv").write_text(table_csv([row], timing=False))
    with open(out_dir / "path.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y"])
        if result.path is not None:
            for x, y in result.path.waypoints:
                w.writerow([repr(float(x)), repr(float(y))])
    header = ["t", *STATE_NAMES, *CONTROL_NAMES]
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        traj = result.trajectory
        if traj is not None:
            t = np.linspace(traj.t0, traj.tf, TRAJECTORY_SAMPLES)
            for ti, x, u in zip(t, traj.state(t), traj.control(t)):
                w.writerow([repr(float(v)) for v in (ti, *x, *u)])
    with open(out_dir / "collocation.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment", *header])
        traj = result.trajectory
        if traj is not None:
            for s, sl in enumerate(traj.slices):
                for ti, x, u in zip(traj.grids[s].times, traj.X[sl], traj.U[sl]):
                    w.writerow([s, *(repr(float(v)) for v in (ti, *x, *u))])


def _exit_code(status: PlanStatus) -> int:
    if status is PlanStatus.CONVERGED:
        return EXIT_OK
    if status in (PlanStatus.ITERATION_LIMIT, PlanStatus.TIME_LIMIT):
        return EXIT_BUDGET
    return EXIT_FAILURE


def run_config(cfg: RunConfig) -> tuple[PlanResult, EvaluationRow]:
    scenario = cfg.load_scenario()
    result = plan(scenario, CRAZYFLIE, cfg.method, cfg.guess_level, cfg.constrained, cfg.plan_options())
    return result, evaluate(result, scenario, CRAZYFLIE)


def cmd_plan(cfg: RunConfig) -> tuple[int, Path]:
    cfg = cfg.validate()
    out = Path(cfg.output or _output_root() / "run")
    result, row = run_config(cfg)
    write_run(out, cfg, result, row)
    print(f"{result.status.value}: {result.iterations} iteration(s), "
          f"eps_a_max={row.absolute_error:.3e}, output in {out}")
    return _exit_code(result.status), out


def cmd_scenario(kind: str, count: int, seed: int, out) -> Scenario:
    if kind == "empty":
        scen = make_empty_scenario()
    elif kind == "two_obstacles":
        scen = make_two_obstacle_scenario()
    elif kind == "random_columns":
        scen = make_random_columns_scenario(count, seed)
    else:
        raise ConfigError(f"unknown scenario kind {kind!r}")
    Path(out).write_text(_dump(scen.to_dict()))
    print(f"{scen.name}: {len(scen.columns)} column(s), start {scen.start}, goal {scen.goal} -> {out}")
    return scen


# ---------------------------------------------------------------- batch


def _cell_name(cfg: RunConfig) -> str:
    return f"{cfg.guess_level}_{cfg.method}_{'constrained' if cfg.constrained else 'free'}"


def _batch_cell(cfg: RunConfig) -> dict:
    """Worker entry point; never raises."""
    try:
        result, row = run_config(cfg)
        write_run(Path(cfg.output), cfg, result, row)
        return row.to_dict()
    except Exception as exc:  # a failed cell is a recorded outcome
        log.exception("cell %s failed", _cell_name(cfg))
        nan = math.nan
        return EvaluationRow(cfg.guess_level, cfg.constrained, cfg.method, 0, nan, nan, nan, nan,
                             0.0, status=f"Error: {type(exc).__name__}").to_dict()


def batch_configs(base: RunConfig, levels, methods, constrained, root: Path) -> list[RunConfig]:
    cells = []
    for lv in levels:
        for m in methods:
            for c in constrained:
                cfg = replace(base, guess_level=lv, method=m, constrained=c).validate()
                cells.append(replace(cfg, output=str(root / _cell_name(cfg))))
    return sorted(cells, key=lambda c: (int(GuessLevel.parse(c.guess_level)),
                                        list(Method).index(Method.parse(c.method)),
                                        not c.constrained))


def cmd_batch(base: RunConfig, levels, methods, constrained, jobs: int, root) -> list[EvaluationRow]:
    root = Path(root)
    cells = batch_configs(base, levels, methods, constrained, root)
    if jobs <= 1 or len(cells) == 1:
        dicts = [_batch_cell(c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=jobs, mp_context=get_context("spawn")) as pool:
            dicts = list(pool.map(_batch_cell, cells))
    rows = order_rows(EvaluationRow.from_dict(d) for d in dicts)
    write_tables(root, rows)
    return rows


def write_tables(root: Path, rows) -> None:
    root.mkdir(parents=True, exist_ok=True)
    (root / "table.csv").write_text(table_csv(rows, timing=False))
    (root / "timing.csv").write_text(_timing_csv(rows))
    (root / "table.txt").write_text(render_table(rows))


def _timing_csv(rows) -> str:
    lines = ["init_level,constrained,method,total_time"]
    lines += [f"{r.init_level},{r.constrained},{r.method},{r.total_time!r}" for r in order_rows(rows)]
    return "\n".join(lines) + "\n"


def collect_rows(root) -> list[EvaluationRow]:
    """Rows of every ``result.json`` below ``root``."""
    rows = []
    for p in sorted(Path(root).rglob("result.json")):
        doc = json.loads(p.read_text())
        d = dict(doc["row"])
        d["total_time"] = doc.get("timestamp", {}).get("total_time", 0.0)
        rows.append(EvaluationRow.from_dict({k: (math.nan if v is None else v) for k, v in d.items()}))
    return order_rows(rows)


# ---------------------------------------------------------------- argument parsing


def _output_root() -> Path:
    return Path(os.environ.get(ENV_OUTPUT_ROOT, "runs"))


def _jobs(arg) -> int:
    if arg is not None:
        return arg
    return int(os.environ.get(ENV_JOBS, os.cpu_count() or 1))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y", "on"):
        return True
    if t in ("0", "false", "no", "n", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _list(text: str) -> list[str]:
    return [s for s in (p.strip() for p in text.split(",")) if s]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config file (JSON); flags override its fields")
    p.add_argument("--scenario", help="built-in name or scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--count", dest="column_count", type=int, help="columns for random_columns")
    p.add_argument("--iterations", type=int, help="refinement iteration budget")
    p.add_argument("--budget", dest="wall_clock_budget", type=float, help="wall-clock budget in seconds")
    p.add_argument("--psm-degree", type=int)
    p.add_argument("--psem-degree", type=int)
    p.add_argument("--psem-segments", type=int)
    p.add_argument("--solver-iterations", type=int, help="solver iteration limit per mesh")
    p.add_argument("--constraint-tolerance", type=float)
    p.add_argument("--optimality-tolerance", type=float)
    p.add_argument("-v", "--verbose", action="store_true")


def _config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    over = {}
    for name in ("scenario", "seed", "column_count", "iterations", "wall_clock_budget",
                 "psm_degree", "psem_degree", "psem_segments"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    for name in ("method", "guess_level", "constrained", "output"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    solver = dict(cfg.solver)
    for flag, key in (("solver_iterations", "max_iterations"),
                      ("constraint_tolerance", "constraint_tolerance"),
                      ("optimality_tolerance", "optimality_tolerance")):
        v = getattr(args, flag, None)
        if v is not None:
            solver[key] = v
    over["solver"] = solver
    return replace(cfg, **over)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="write a scenario file")
    p.add_argument("kind", choices=BUILTIN_SCENARIOS)
    p.add_argument("--count", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("plan", help="plan one trajectory")
    _add_run_flags(p)
    p.add_argument("--method")
    p.add_argument("--guess", dest="guess_level")
    p.add_argument("--constrained", type=_bool)
    p.add_argument("--out", dest="output")

    p = sub.add_parser("batch", help="run a guess-level x method x constrained matrix")
    _add_run_flags(p)
    p.add_argument("--levels", type=_list, default=[lv.label for lv in GuessLevel])
    p.add_argument("--methods", type=_list, default=[m.value for m in Method])
    p.add_argument("--constrained-flags", type=lambda s: [_bool(x) for x in _list(s)], default=[True])
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", dest="output")

    p = sub.add_parser("report", help="tabulate the results below a directory")
    p.add_argument("root")
    p.add_argument("--csv", action="store_true", help="print CSV instead of the text table")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        if args.command == "scenario":
            if args.count < 0:
                raise ConfigError("count must be >= 0")
            try:
                cmd_scenario(args.kind, args.count, args.seed, args.out)
            except OSError as exc:
                print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
                return EXIT_FAILURE
            return EXIT_OK
        if args.command == "plan":
            code, _ = cmd_plan(_config_from_args(args))
            return code
        if args.command == "batch":
            base = _config_from_args(args).validate()
            root = Path(args.output) if args.output else _output_root() / "batch"
            jobs = _jobs(args.jobs)
            if jobs < 1:
                raise ConfigError("jobs must be >= 1")
            rows = cmd_batch(base, args.levels, args.methods, args.constrained_flags, jobs, root)
            print(render_table(rows), end="")
            return EXIT_OK
        if args.command == "report":
            rows = collect_rows(args.root)
            if not rows:
                raise ConfigError(f"no results below {args.root}")
            print(table_csv(rows) if args.csv else render_table(rows), end="")
            return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
