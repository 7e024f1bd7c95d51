"""Command line entry point: ``crf <experiment> [--config path] [--out dir] [--workers N] [--seed S]``.

Exit status is 0 when every check passes, 1 when a check fails and 2 for
configuration errors. ``CRF_OUT`` overrides the default output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .errors import ConfigError
from .experiments import EXPERIMENTS, ExperimentConfig, timed_run, write_outputs

log = logging.getLogger("crflow")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crf", description="Run a Chern-Ricci flow experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", help="JSON config file; fields not given use the experiment defaults")
    ap.add_argument("--out", help="output directory (default: $CRF_OUT or ./crf-out/<experiment>)")
    ap.add_argument("--workers", type=int, help="cap on parallel shortest-path workers")
    ap.add_argument("--seed", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def output_dir(cli_out, config_out, experiment) -> str:
    if cli_out:
        return cli_out
    env = os.environ.get("CRF_OUT")
    if env:
        return os.path.join(env, experiment)
    if config_out:
        return config_out
    return os.path.join("crf-out", experiment)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    overrides = {"seed": args.seed, "workers": args.workers}
    try:
        if args.config:
            config = ExperimentConfig.load(args.config, **overrides)
            if config.experiment != args.experiment:
                raise ConfigError(f"config is for {config.experiment!r}, not {args.experiment!r}")
        else:
            config = ExperimentConfig.from_dict({"experiment": args.experiment}, **overrides)
    except ConfigError as exc:
        out = output_dir(args.out, None, args.experiment)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "report.json"), "w") as fh:
            json.dump({"experiment": args.experiment, "passed": False, "failures": ["config"],
                       "error": str(exc)}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = output_dir(args.out, config.out, config.experiment)
    log.info("running %s -> %s", config.experiment, out)
    result, runtime = timed_run(config)
    write_outputs(result, config, out, runtime)
    for c in result.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']!r} (threshold {c['threshold']!r})")
    print(f"{config.experiment}: {'pass' if result.passed else 'fail'} ({runtime:.1f} s) -> {out}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
