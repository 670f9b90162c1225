"""Command-line entry point: ``ambrl gen|solve|run|compare|check``.

Environments are given as ``kind:key=value,...`` (``sj:n=8,delta_min=0.1``,
``tree:n=8,A=2,gamma=0.1``, ``random:levels=10/10/10,A=3,seed=0,min_gap=0.15``)
or as a path to an MDP file.  Errors print one JSON line on stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import checks, harness
from .mdp import backward_induction, dumps


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def parse_env(text: str) -> dict | str:
    if ":" not in text:
        if not Path(text).exists():
            raise CliError(f"environment {text!r} is neither kind:params nor an existing file")
        return text
    kind, _, rest = text.partition(":")
    env: dict = {"kind": kind}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise CliError(f"bad environment parameter {item!r}")
        env[key] = _parse_value(val)
    if kind == "random" and isinstance(env.get("levels"), int):
        env["levels"] = [env["levels"]]
    return env


def _parse_value(val: str):
    if "/" in val:
        return [_parse_value(v) for v in val.split("/")]
    for cast in (int, float):
        try:
            return cast(val)
        except ValueError:
            pass
    return val


def parse_seeds(text: str, base: int = 0) -> tuple[int, ...]:
    """``"5"`` is a count from ``base``; ``"3,7"`` a list; ``"0:20"`` a range."""
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi)))
    if "," in text:
        return tuple(int(s) for s in text.split(",") if s)
    return tuple(range(base, base + int(text)))


def _config(args) -> harness.ExperimentConfig:
    doc = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.env is not None:
        doc["env"] = parse_env(args.env)
    if "env" not in doc:
        raise CliError("no environment given (use --env or a config file)")
    for flag, key in (("algo", "algo"), ("episodes", "episodes"), ("delta", "delta"),
                      ("bonus_c", "bonus_c"), ("record_every", "record_every")):
        val = getattr(args, flag, None)
        if val is not None:
            doc[key] = val
    if args.seeds is not None:
        doc["seeds"] = list(parse_seeds(args.seeds, args.base_seed or 0))
    elif args.base_seed is not None:
        doc["base_seed"] = args.base_seed
    if args.out is not None:
        doc["out"] = args.out
    if args.no_check:
        doc["check"] = False
    try:
        return harness.ExperimentConfig.from_dict(doc)
    except (TypeError, ValueError) as e:
        raise CliError(f"invalid config: {e}") from e


def _add_run_flags(p):
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--env")
    p.add_argument("--episodes", type=int)
    p.add_argument("--seeds", help="count, comma list, or lo:hi range")
    p.add_argument("--base-seed", type=int)
    p.add_argument("--delta", type=float)
    p.add_argument("--bonus-c", dest="bonus_c", type=float)
    p.add_argument("--record-every", dest="record_every", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--no-check", action="store_true", help="skip per-episode invariant checks")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ambrl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write an instance file")
    g.add_argument("env")
    g.add_argument("--out")

    s = sub.add_parser("solve", help="print optimal values, gaps and gap statistics")
    s.add_argument("env")

    r = sub.add_parser("run", help="run one algorithm over seeds")
    _add_run_flags(r)
    r.add_argument("--algo", choices=harness.ALGOS)
    r.add_argument("--format", choices=("csv", "json"), default="csv")

    c = sub.add_parser("compare", help="run amb and ucb on the same instance and seeds")
    _add_run_flags(c)

    k = sub.add_parser("check", help="run the invariant suites")
    k.add_argument("--full", action="store_true", help="use acceptance-size parameters")
    return p


def _finite(x: float):
    return x if math.isfinite(x) else None


def cmd_gen(args) -> int:
    mdp = harness.build_env(parse_env(args.env))
    text = dumps(mdp)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_solve(args) -> int:
    mdp = harness.build_env(parse_env(args.env))
    sol = backward_induction(mdp)
    names = mdp.states
    doc = {
        "v0_star": sol.v0_star,
        "gap_min": _finite(sol.gap_min_global),
        "z_opt": len(sol.z_opt),
        "z_mul": len(sol.z_mul),
        "states": {
            names[s]: {
                "level": int(mdp.level_of[s]),
                "v_star": float(sol.v_star[s]),
                "gaps": [float(g) for g in sol.gap[s, :mdp.num_actions[s]]],
                "gap_min_local": _finite(float(sol.gap_min_local[s])),
            }
            for s in range(mdp.num_states)
        },
    }
    print(json.dumps(doc, indent=2))
    return 0


def cmd_run(args) -> int:
    cfg = _config(args)
    series = harness.run_experiment(cfg, args.workers)
    summary = harness.aggregate(series)
    if cfg.out:
        harness.export(summary if len(series) > 1 else series[0], cfg.out, args.format)
    final = summary.mean[-1]
    print(json.dumps({"algo": cfg.algo, "episodes": cfg.episodes, "seeds": list(summary.seeds),
                      "mean_cum_regret": float(final), "median_cum_regret": float(summary.median[-1]),
                      "out": cfg.out}))
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    result = harness.compare(cfg, args.workers)
    sums = result.pop("summaries")
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        for algo, sm in sums.items():
            harness.export(sm, out / f"{algo}.csv")
        (out / "compare.json").write_text(json.dumps(result, indent=2) + "\n")
    print(f"{'episode':>10} {'amb mean':>14} {'ucb mean':>14}")
    a, u = sums["amb"], sums["ucb"]
    for k in np.unique(np.geomspace(1, cfg.episodes, 12).astype(int)):
        i = np.searchsorted(a.episodes, k)
        if i < len(a.episodes):
            print(f"{a.episodes[i]:>10d} {a.mean[i]:>14.3f} {u.mean[i]:>14.3f}")
    print(json.dumps(result))
    return 0


def cmd_check(args) -> int:
    results = checks.run_all(full=args.full)
    for r in results:
        print(r.line())
    return 0 if all(r.ok for r in results) else 1


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "run": cmd_run, "compare": cmd_compare, "check": cmd_check}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.cmd](args)
    except Exception as e:  # noqa: BLE001 - every failure becomes one machine-readable line
        sys.stderr.write(json.dumps({"error": type(e).__name__, "message": str(e)}) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
