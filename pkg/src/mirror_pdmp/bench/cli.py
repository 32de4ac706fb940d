"""Command line entry point: ``mirror-pdmp {sample,compare,wasserstein,noise-floor}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..metrics import noise_floor, w1_multivariate_by_marginals
from ..pdmp import BoundViolationError
from ..samplers import ZeroGradientError
from ..targets import RejectionAbortError
from .config import ConfigError, load_config, build_target
from .runner import MismatchedTargetsError, compare, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3

log = logging.getLogger("mirror_pdmp")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mirror-pdmp", description="Mirror PDMP samplers and Langevin baselines.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, many=False):
        if many:
            sp.add_argument("--config", action="append", required=True, metavar="PATH", help="repeat once per config")
        else:
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="N", help="override master_seed")
        sp.add_argument("--replicates", type=int, metavar="N")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--threads", type=int, default=1, metavar="N")

    common(sub.add_parser("sample", help="run one experiment"))
    common(sub.add_parser("compare", help="run several experiments on one target"), many=True)

    w = sub.add_parser("wasserstein", help="marginal W1 between two sample CSV files")
    w.add_argument("first")
    w.add_argument("second")
    w.add_argument("--out", metavar="DIR")

    nf = sub.add_parser("noise-floor", help="W1 between independent exact sample sets")
    nf.add_argument("--config", required=True, metavar="PATH")
    nf.add_argument("--samples", type=int, default=1000, metavar="N")
    nf.add_argument("--copies", type=int, default=10)
    nf.add_argument("--coordinate", type=int)
    nf.add_argument("--seed", type=int, default=0, metavar="N")
    nf.add_argument("--out", metavar="DIR")
    return p


def _override(cfg, args):
    return cfg.override(master_seed=args.seed, replicates=args.replicates, output=args.out)


def _read_samples(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2))


def _emit(doc, out):
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "result.json").write_text(text)
    print(text)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "sample":
            cfg = _override(load_config(args.config), args)
            res = run_experiment(cfg, threads=args.threads)
            if res.failed:
                for o in res.failed:
                    print(f"replicate {o.index} (seed {o.seed}) aborted: {o.error}", file=sys.stderr)
                return EXIT_ABORT
            summary = {k: v for k, v in res.metrics.items() if k != "per_replicate"}
            summary["output"] = None if res.out_dir is None else str(res.out_dir)
            print(json.dumps(summary, indent=2))
        elif args.command == "compare":
            cfgs = []
            for path in args.config:
                c = load_config(path).override(master_seed=args.seed, replicates=args.replicates)
                cfgs.append(c)
            rows = compare(cfgs, out_dir=args.out, threads=args.threads)
            print(json.dumps(rows, indent=2))
        elif args.command == "wasserstein":
            a, b = _read_samples(args.first), _read_samples(args.second)
            _emit(w1_multivariate_by_marginals(a, b, allow_unequal=True).to_dict(), args.out)
        elif args.command == "noise-floor":
            target = build_target(load_config(args.config).target)
            nf = noise_floor(target.exact_sample, args.samples, args.copies, args.seed, args.coordinate)
            _emit({"mean": nf.mean, "std": nf.std, "samples": args.samples, "copies": args.copies}, args.out)
    except (ConfigError, MismatchedTargetsError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BoundViolationError, ZeroGradientError, RejectionAbortError, FloatingPointError) as exc:
        print(f"sampler aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
