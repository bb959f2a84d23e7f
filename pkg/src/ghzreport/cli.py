"""Command-line interface.

    ghzreport run SPEC.json [--seed N] [--output PREFIX]
    ghzreport check [--seed N]
    ghzreport demo [--seed N] [--agents M] [--key-len N]

Exit codes: 0 success, 1 configuration error, 2 invariant-suite failure.
The global seed can also be set via the GHZREPORT_SEED environment
variable; an explicit --seed always wins over the environment.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from . import harness

SEED_ENV_VAR = "GHZREPORT_SEED"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INVARIANT = 2


def _resolve_seed(cli_seed: int | None) -> int | None:
    """CLI flag beats environment variable beats nothing."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV_VAR)
    if env is None:
        return None
    try:
        return int(env)
    except ValueError as exc:
        raise harness.SpecError(f"{SEED_ENV_VAR} must be an integer, got {env!r}") from exc


def _cmd_run(args: argparse.Namespace) -> int:
    spec = harness.load_spec(args.spec)
    seed = _resolve_seed(args.seed)
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    if args.output is not None:
        spec = dataclasses.replace(spec, output=args.output)
    rows = harness.run_experiment(spec)
    print(harness.render_csv(rows), end="")
    print(f"wrote {spec.output}.csv and {spec.output}.json", file=sys.stderr)
    return EXIT_OK


def _cmd_check(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    results = harness.invariant_suite(**({"seed": seed} if seed is not None else {}))
    failures = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        print(f"{status}  {name}{suffix}")
        failures += 0 if passed else 1
    print(f"{len(results) - failures}/{len(results)} invariant checks passed")
    return EXIT_OK if failures == 0 else EXIT_INVARIANT


def _cmd_demo(args: argparse.Namespace) -> int:
    seed = _resolve_seed(args.seed)
    harness.demo(
        seed=seed if seed is not None else 7,
        num_agents=args.agents,
        key_len=args.key_len,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghzreport",
        description="Exact simulator of a GHZ-keyed multiparty quantum secret-report protocol",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment grid described by a JSON spec file")
    p_run.add_argument("spec", help="path to the experiment spec (JSON)")
    p_run.add_argument("--seed", type=int, default=None, help="override the spec's global seed")
    p_run.add_argument("--output", default=None, help="override the spec's output path prefix")
    p_run.set_defaults(func=_cmd_run)

    p_check = sub.add_parser("check", help="run the fast invariant suite")
    p_check.add_argument("--seed", type=int, default=None)
    p_check.set_defaults(func=_cmd_check)

    p_demo = sub.add_parser("demo", help="verbose annotated honest round at toy scale")
    p_demo.add_argument("--seed", type=int, default=None)
    p_demo.add_argument("--agents", type=int, default=2)
    p_demo.add_argument("--key-len", type=int, default=8)
    p_demo.set_defaults(func=_cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except harness.SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
