"""``qml <subcommand> [--config FILE] [--out DIR] [--seed N] [--threads N]``.

Exit codes: 0 success, 1 unwritable output, 2 invalid config, 3 numerical
failure.  Failures print one JSON object to stderr.
"""

import argparse
import json
import sys

import numpy as np

from ..errors import ConfigError, GibbsCmiError
from .config import EXPERIMENTS, default_config_path, read_yaml, resolve
from .record import emit, jsonable
from .runners import DEFAULTS, run


def _fail(exc, code):
    payload = {"status": "error", "exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, GibbsCmiError):
        payload["code"] = exc.code
        payload["details"] = jsonable(exc.details)
    print(json.dumps(payload), file=sys.stderr)
    return code


def build_parser():
    parser = argparse.ArgumentParser(prog="qml", description="Gibbs-state CMI experiments")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="subcommand")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML config (default: the bundled one for this subcommand)")
        sp.add_argument("--out", help="output directory (default: runs/<subcommand>)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for independent grid cells")
    return parser


def load(experiment, path=None, seed=None):
    raw = read_yaml(path or default_config_path(experiment))
    return resolve(raw, experiment, DEFAULTS[experiment], seed)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("bad-threads", "--threads must be at least 1")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("bad-seed", "--seed must be non-negative")
        cfg = load(args.experiment, args.config, args.seed)
        record = run(args.experiment, cfg, args.threads)
    except ConfigError as exc:
        return _fail(exc, 2)
    except (GibbsCmiError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _fail(exc, 3)
    out = args.out or f"runs/{args.experiment}"
    try:
        emit(record, out)
    except OSError as exc:
        return _fail(exc, 1)
    summary = {"status": "ok", "experiment": args.experiment, "out": str(out),
               "config_hash": record.config_hash, "wall_time_s": round(record.wall_time, 3)}
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
