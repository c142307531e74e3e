"""Command-line front end.

Every subcommand writes its artifacts plus ``config.resolved.json`` into the
output directory.  Exit codes: 0 success, 1 internal error, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path


from . import acceptance
from .config import ExperimentConfig, load_config
from .core import core_membership, least_core, max_excess
from .dynamics import DiagonalConfig, diagonal_experiment, empty_core_search, stationary_experiment
from .errors import ConfigError, DomainError, LPError
from .game import CostGame, build_expected_game
from .processes import run
from .solutions import WeightProfile, ls_value, shapley_value

log = logging.getLogger("nvgames")

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG = 0, 1, 2


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_game(path: str) -> CostGame:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError(f"cannot read game document {path}: {exc}") from exc
    return CostGame.from_dict(doc)


def _parse_floats(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from exc


def _diagonal_config(cfg: ExperimentConfig, threads: int) -> DiagonalConfig:
    model = cfg.demand_model()
    p, h = cfg.cost_params()
    e = cfg.experiment
    return DiagonalConfig(
        model, p, h, e.T_max, e.rule, e.replications, e.seed, e.schedule, cfg.weight_profile(model.n),
        e.stages, e.warm_start, e.dr_mode, cfg.estimator_obj(), threads,
    )


def cmd_build(cfg: ExperimentConfig, out: Path, args) -> int:
    p, h = cfg.cost_params()
    game = build_expected_game(cfg.demand_model(), p, h, cfg.estimator_obj())
    (out / "game.json").write_text(game.to_json())
    print(out / "game.json")
    return EXIT_OK


def cmd_solve(cfg: ExperimentConfig, out: Path, args) -> int:
    game = _load_game(args.game)
    result: dict = {"solution": args.solution, "n": game.n}
    if args.solution == "ls":
        w = _parse_floats(args.weights) or cfg.experiment.weights
        try:
            profile = None if w is None else WeightProfile(game.n, tuple(w))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        result["allocation"] = ls_value(game, profile).tolist()
    elif args.solution == "shapley":
        result["allocation"] = shapley_value(game).tolist()
    elif args.solution == "least-core":
        lc = least_core(game)
        result.update(epsilon=lc.epsilon, witness=lc.witness.tolist(), balanced=lc.balanced)
    else:
        x = _parse_floats(args.x)
        if x is None or len(x) != game.n:
            raise ConfigError(f"core-check needs --x with {game.n} values")
        result.update(allocation=x, in_core=core_membership(game, x), max_excess=max_excess(game, x))
    _write_json(out / "solution.json", result)
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


def cmd_process(cfg: ExperimentConfig, out: Path, args) -> int:
    game = _load_game(args.game)
    rule = args.rule or cfg.experiment.rule
    steps = args.steps or cfg.experiment.steps
    weights = cfg.weight_profile(game.n) if rule == "R1" else None
    res = run(rule, game, steps, weights, stride=cfg.output.stride)
    with open(out / "process_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "player"] + [f"alloc_{i + 1}" for i in range(game.n)] + ["max_excess", "objective"])
        for row in res.trace:
            writer.writerow(
                [row.t, row.player + 1] + [format(v, ".17g") for v in row.allocation]
                + [format(row.max_excess, ".17g"), format(row.objective, ".17g")]
            )
    summary = {
        "rule": rule,
        "steps": steps,
        "degenerate": res.degenerate,
        "allocation": res.allocation.tolist(),
        "max_excess": max_excess(game, res.allocation),
    }
    _write_json(out / "process.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_diagonal(cfg: ExperimentConfig, out: Path, args) -> int:
    res = diagonal_experiment(_diagonal_config(cfg, args.threads))
    res.trace.write_csv(out / "trace.csv")
    _write_json(out / "summary.json", res.summary())
    print(out / "trace.csv")
    return EXIT_OK


def cmd_stationary(cfg: ExperimentConfig, out: Path, args) -> int:
    summary = stationary_experiment(_diagonal_config(cfg, args.threads), cfg.experiment.eps, cfg.experiment.beta)
    _write_json(out / "summary.json", summary)
    print(out / "summary.json")
    return EXIT_OK


def cmd_search_empty_core(cfg: ExperimentConfig, out: Path, args) -> int:
    p, h = cfg.cost_params()
    report = empty_core_search(cfg.demand_model(), p, h, cfg.experiment.attempts, cfg.experiment.seed, estimator=cfg.estimator_obj())
    _write_json(out / "empty_core.json", report.to_dict())
    if report.found:
        (out / "witness_game.json").write_text(report.game.to_json())
        print(f"found at draw {report.index}: epsilon* = {report.epsilon:.6g}")
    else:
        print(f"no empty-core realization in {report.attempts} draws")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, out: Path, args) -> int:
    numbers = None if args.criteria is None else [int(v) for v in args.criteria.split(",")]
    if numbers and any(k not in acceptance.CRITERIA for k in numbers):
        raise ConfigError(f"criteria must be among {sorted(acceptance.CRITERIA)}")
    results = acceptance.run_suite(numbers)
    _write_json(out / "acceptance.json", [r.to_dict() for r in results])
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_INTERNAL


COMMANDS = {
    "build": cmd_build,
    "solve": cmd_solve,
    "process": cmd_process,
    "diagonal": cmd_diagonal,
    "stationary": cmd_stationary,
    "search-empty-core": cmd_search_empty_core,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config (JSON)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (overrides the config)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker processes for replications")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="nvgames", parents=[common], description="Newsvendor cost games and allocation processes.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("build", parents=[common], help="build the expected game of the configured demand model")
    solve = sub.add_parser("solve", parents=[common], help="solution concepts for a game document")
    solve.add_argument("game")
    solve.add_argument("--solution", choices=["ls", "shapley", "least-core", "core-check"], required=True)
    solve.add_argument("--x", help="allocation for core-check, comma-separated")
    solve.add_argument("--weights", help="LS weight profile alpha(1..n-1), comma-separated")
    proc = sub.add_parser("process", parents=[common], help="run R1 or R2 on a game document")
    proc.add_argument("game")
    proc.add_argument("--rule", choices=["R1", "R2"])
    proc.add_argument("--steps", type=int)
    sub.add_parser("diagonal", parents=[common], help="diagonal process on dynamic realization games")
    sub.add_parser("stationary", parents=[common], help="stationary-demand experiment")
    sub.add_parser("search-empty-core", parents=[common], help="search for a realization game with an empty core")
    ver = sub.add_parser("verify", parents=[common], help="run the acceptance suite")
    ver.add_argument("--criteria", help="comma-separated criterion numbers (default: all)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.threads = getattr(args, "threads", 1)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None))
        updates = {}
        if hasattr(args, "seed"):
            if args.seed < 0:
                raise ConfigError("seed must be a nonnegative integer")
            updates["experiment"] = cfg.experiment.model_copy(update={"seed": args.seed})
        if hasattr(args, "out"):
            updates["output"] = cfg.output.model_copy(update={"directory": args.out})
        if updates:
            cfg = cfg.model_copy(update=updates)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        out = Path(cfg.output.directory)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.resolved.json", cfg.resolved())
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LPError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics, default=str, sort_keys=True), file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - report and map to the internal-error exit code
        log.debug("unhandled error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
