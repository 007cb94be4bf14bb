"""Command line entry point: ``pmmreplan plan|race|bench``.

Exit codes: 0 on success, 2 when the scenario cannot be parsed, 3 when an
episode ends in timeout, a non-finite state or a planning failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from importlib.resources import files
from pathlib import Path as FsPath

from .bench import STRATEGIES, cmd_bench, cmd_plan, cmd_race, compare_modes
from .scenario import ParseError, Scenario, parse_scenario

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_EPISODE = 3


def shipped_tracks() -> list[str]:
    return sorted(p.name[:-5] for p in files("pmmreplan").joinpath("tracks").iterdir() if p.name.endswith(".yaml"))


def resolve_scenario(name: str) -> FsPath:
    """A path as given, or the shipped track of that name."""
    path = FsPath(name)
    if path.exists() or path.suffix:
        return path
    shipped = files("pmmreplan").joinpath("tracks", f"{name}.yaml")
    return FsPath(str(shipped)) if shipped.is_file() else path


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help="scenario file, or the name of a shipped track (%s)" % ", ".join(shipped_tracks()))
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--replan-every", type=int, default=None, help="control ticks between replans")
    common.add_argument("--out", type=FsPath, default=None, help="directory for JSON and CSV artifacts")
    common.add_argument("--lazy", type=_on_off, default=None, help="lazy edge evaluation: on|off")
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--deterministic", action="store_true",
                      help="plan inside the control loop (the default); replays are bit-identical")
    mode.add_argument("--threaded", action="store_true",
                      help="plan in a background thread; the simulation is not paced to wall time, "
                           "so plan latency in simulated time depends on the machine")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pmmreplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="one-shot plan over the first gates")
    p.add_argument("--strategy", choices=STRATEGIES, default="refocus")

    r = sub.add_parser("race", parents=[common], help="fly one closed-loop episode")
    r.add_argument("--mode", choices=("fixed", "replan", "both"), default="replan",
                   help="'both' flies the two modes and prints a comparison")

    b = sub.add_parser("bench", parents=[common], help="compare the sampling strategies")
    b.add_argument("--seeds", type=int, nargs="*", default=None, help="seeds to sweep (default 0..9)")
    b.add_argument("--no-episodes", action="store_true", help="skip the per-seed closed-loop episodes")
    return parser


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if args.replan_every is not None:
        if args.replan_every < 1:
            raise ParseError("must be >= 1", key="replan_every", source="--replan-every")
        sc = replace(sc, run=replace(sc.run, replan_every=args.replan_every))
    if args.lazy is not None:
        sc = replace(sc, planner=replace(sc.planner, lazy=args.lazy))
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    return sc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        sc = _apply_overrides(parse_scenario(resolve_scenario(args.scenario)), args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    if args.command == "plan":
        cmd_plan(sc, args.strategy, out=args.out)
        return EXIT_OK

    if args.command == "race":
        modes = ("fixed", "replan") if args.mode == "both" else (args.mode,)
        results = [cmd_race(sc, m, out=args.out, async_planner=args.threaded) for m in modes]
        if len(results) > 1:
            print(compare_modes(results))
        return EXIT_OK if all(r.completed for r in results) else EXIT_EPISODE

    seeds = list(range(10)) if args.seeds is None else args.seeds
    if not seeds:
        print("error: --seeds needs at least one seed", file=sys.stderr)
        return EXIT_PARSE
    report = cmd_bench(sc, seeds, out=args.out, episodes=not args.no_episodes)
    failed = any(e["status"] != "completed" for runs in report.episodes.values() for e in runs)
    return EXIT_EPISODE if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
