"""Command-line pipeline driver.

    snncompress --config experiment.yaml --stage all --out runs/exp1

Runs one stage (or the whole dependency chain) of the train / convert /
fine-tune / prune / quantize / analyze pipeline. Stages whose inputs
and config sections are unchanged are skipped as cached.

Exit codes: 0 success, 2 configuration error, 3 missing stage
dependency, 4 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_ENV = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
               "NUMEXPR_NUM_THREADS")
_REEXEC_FLAG = "_SNNC_REEXEC"


def _apply_threads(n: int, argv: list[str]) -> None:
    """Pin BLAS worker counts. The libraries read these variables when
    numpy loads, which has already happened by now, so the process
    re-executes itself once with the environment in place."""
    if all(os.environ.get(k) == str(n) for k in _THREAD_ENV):
        return
    if os.environ.get(_REEXEC_FLAG) == "1":
        return
    env = dict(os.environ)
    for k in _THREAD_ENV:
        env[k] = str(n)
    env[_REEXEC_FLAG] = "1"
    os.execve(sys.executable,
              [sys.executable, "-m", "snncompress.pipeline.cli", *argv], env)


def build_parser() -> argparse.ArgumentParser:
    from .stages import STAGE_ORDER

    p = argparse.ArgumentParser(
        prog="snncompress",
        description="Train, compress, and analyze a spiking network "
                    "stage by stage.")
    p.add_argument("--config", required=True, metavar="PATH",
                   help="experiment YAML file")
    p.add_argument("--stage", default="all", metavar="NAME",
                   choices=STAGE_ORDER + ("all",),
                   help="stage to run, or 'all' for the full chain "
                        "(default: all)")
    p.add_argument("--seed", type=int, default=None, metavar="N",
                   help="override the config's global seed")
    p.add_argument("--out", default="runs", metavar="DIR",
                   help="output directory (default: runs)")
    p.add_argument("--threads", type=int, default=None, metavar="N",
                   help="BLAS thread count (default: library default)")
    return p


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("error: --threads must be positive", file=sys.stderr)
            return 2
        _apply_threads(args.threads, argv)

    from ..errors import ConfigError, DependencyError, TrainingError
    from .config import ExperimentConfig, load_config
    from .stages import STAGE_ORDER, StageRunner

    try:
        config = load_config(args.config)
        if args.seed is not None:
            raw = dict(config.resolved)
            raw["seed"] = args.seed
            config = ExperimentConfig.from_dict(raw)
        runner = StageRunner(config, args.out)
        names = STAGE_ORDER if args.stage == "all" else (args.stage,)
        for name in names:
            res = runner.run(name)
            note = ""
            for key in ("val_acc", "accuracy", "clean_acc", "final_val_acc"):
                if key in res.manifest["metrics"]:
                    note = f"  {key}={res.manifest['metrics'][key]:.4f}"
                    break
            print(f"[{res.status}] {name}{note}")
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DependencyError as e:
        print(f"dependency error: {e}", file=sys.stderr)
        return 3
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return 4
    print(f"artifacts in {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
