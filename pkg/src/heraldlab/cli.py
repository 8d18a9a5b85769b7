"""Command-line entry point: ``heraldlab <stage> --config FILE --out DIR``.

Exit codes: 0 success, 1 numeric failure or unmet thresholds, 2 config or
schema error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path

from heraldlab import pipeline
from heraldlab.config import ExperimentConfig, load_config
from heraldlab.errors import ConfigError, HeraldLabError

log = logging.getLogger("heraldlab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

# subcommand -> stages it runs (prerequisites are pulled in automatically)
COMMANDS = {
    "plan": ("plan",),
    "waveform": ("waveform",),
    "herald": ("herald",),
    "synth": ("synth",),
    "pca": ("pca",),
    "tomo": ("tomo",),
    "pipeline": pipeline.STAGES,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heraldlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", type=Path, help="YAML experiment config (defaults if omitted)")
        p.add_argument("--out", type=Path, default=Path("heraldlab_out"), help="output directory")
        p.add_argument("--seed", type=int, help="override measurement.seed")
        p.add_argument("--frames", type=int, help="override measurement.frames_per_phase")
    rp = sub.add_parser("report", help="summarize a finished run")
    rp.add_argument("--manifest", type=Path, help="manifest.json of the run")
    rp.add_argument("--out", type=Path, default=Path("heraldlab_out"), help="run directory")
    return parser


def _thread_limit():
    raw = os.environ.get("HERALDLAB_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HERALDLAB_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("HERALDLAB_THREADS must be positive")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.frames is not None and args.frames < 1:
        raise ConfigError("--frames must be positive")
    return cfg.with_overrides(seed=args.seed, frames=args.frames)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            if args.command == "report":
                manifest = args.manifest or args.out / "manifest.json"
                sys.stdout.write(pipeline.render_report(manifest))
                return EXIT_OK
            cfg = _config(args)
            run = pipeline.run_stages(cfg, args.out, COMMANDS[args.command])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HeraldLabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for stage, secs in run.timing.items():
        log.info("%s finished in %.2f s", stage, secs)
    if args.command == "pipeline":
        report = run.results["report"]
        print(pipeline.dumps({k: report[k] for k in ("fidelity_to_target", "wigner_min", "pc1_overlap", "passed")}),
              end="")
        return EXIT_OK if report["passed"] else EXIT_FAIL
    if args.command == "plan" and run.results["plan"]["verify"].fidelity < cfg.thresholds.min_plan_fidelity:
        return EXIT_FAIL
    print(f"{args.command}: wrote {', '.join(run.outputs.get(args.command, []))} in {args.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
