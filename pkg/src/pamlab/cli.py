"""Command line entry point.

    pam-lab <kind> --config cfg.json [--seed S] [--workers W] [--out DIR]
                   [--zero-noise]
    pam-lab sweep --config cfg.json --axis covariance.epsilon \
                  --values 0.4,0.2,0.1 [--out DIR]

Exit codes: 0 success, 2 invalid config, 3 numerical module failure,
4 unwritable output, 1 anything else.  Errors go to stderr as one JSON line
with an ``error_class`` field.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import harness
from .errors import ConfigInvalid, ModuleError, OutputUnwritable, PamLabError


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pam-lab",
        description="numerical experiments for the multiplicative stochastic heat equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default: ${harness.WORKERS_ENV} or 1)")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--zero-noise", action="store_true",
                       help="force all noise increments to zero (diagnostic)")

    for kind in harness.KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        common(p)

    p = sub.add_parser("sweep", help="run a config across an axis of values")
    common(p)
    p.add_argument("--axis", required=True, help="dotted config path, e.g. covariance.epsilon")
    p.add_argument("--values", required=True,
                   help="comma separated values for the axis (numbers when parseable)")
    return parser


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    overrides = {"seed": args.seed, "out_dir": args.out, "workers": args.workers}
    if args.zero_noise:
        overrides["zero_noise"] = True
    try:
        if args.command == "sweep":
            cfg = harness.load_config(args.config, overrides=overrides)
            values = [_parse_value(v) for v in args.values.split(",") if v != ""]
            records = harness.sweep(cfg, args.axis, values, out_dir=args.out)
            print(json.dumps({"runs": len(records),
                              "headlines": [r.headline for r in records]}, indent=2))
        else:
            cfg = harness.load_config(args.config, kind=args.command, overrides=overrides)
            record = harness.run(cfg)
            print(json.dumps({"config_hash": record.config_hash,
                              "headline": record.headline,
                              "headline_digest": record.headline_digest()}, indent=2))
        return 0
    except ConfigInvalid as exc:
        _fail("ConfigInvalid", exc)
        return 2
    except OutputUnwritable as exc:
        _fail("OutputUnwritable", exc)
        return 4
    except ModuleError as exc:
        _fail("ModuleError", exc)
        return 3
    except PamLabError as exc:
        _fail(type(exc).__name__, exc)
        return 3
    except Exception as exc:  # pragma: no cover - last resort
        _fail(type(exc).__name__, exc)
        return 1


def _fail(error_class: str, exc: Exception) -> None:
    sys.stderr.write(json.dumps({"error_class": error_class, "message": str(exc)}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
