"""Command line front end: ``lgmor {offline,online,study,bench}``.

Flags mirror :class:`ExperimentConfig`; ``--config FILE`` loads a JSON config
that flags then override.  ``LGMOR_OUTPUT`` overrides the output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import io
from .errors import InvalidArgument
from .experiments import (STUDIES, ExperimentConfig, ExperimentError, offline, persist,
                          run_experiment, run_online)
from .scenarios import SCENARIOS

OUTPUT_ENV = "LGMOR_OUTPUT"

_LISTS = {"betas": float, "coarse_list": int, "n_list": int, "L_list": int}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON config file")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "experiment":
            p.add_argument(flag, choices=sorted(SCENARIOS))
        elif f.name in _LISTS:
            p.add_argument(flag, type=_LISTS[f.name], nargs="+")
        else:
            p.add_argument(flag, type=type(f.default))


def config_from_args(args) -> ExperimentConfig:
    base = json.loads(args.config.read_text()) if getattr(args, "config", None) else {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            base[f.name] = v
    if os.environ.get(OUTPUT_ENV):
        base["output"] = os.environ[OUTPUT_ENV]
    return ExperimentConfig.from_dict(base)


def cmd_offline(args) -> int:
    cfg = config_from_args(args)
    off = offline(cfg)
    paths = persist(off, cfg.output)
    print(f"N={off.greedy.spaces.N} M={off.local.M} eps={off.greedy.eps[-1]:.3e}")
    for k, v in paths.items():
        print(f"{k}: {v}")
    return 0


def cmd_online(args) -> int:
    cfg = config_from_args(args) if args.config or args.experiment else None
    bundle = Path(args.bundle)
    sols, mus, model = run_online(bundle, cfg, args.n_test, args.test_seed)
    out = Path(os.environ.get(OUTPUT_ENV) or args.out or bundle.parent)
    rows = [dict(id=k, **{f"mu_{j + 1}": float(v) for j, v in enumerate(m)}, J=s.J)
            for k, (m, s) in enumerate(zip(mus, sols))]
    path = io.write_table(rows, out / "online_solutions.csv")
    print(f"solved {len(sols)} samples with a {model.size}x{model.size} reduced system -> {path}")
    return 0


def cmd_study(args) -> int:
    cfg = config_from_args(args)
    rep = run_experiment(cfg, studies=args.study)
    for name in args.study:
        key = "N_study" if name == "N" else f"{name}_study"
        print(f"{key}: {rep.paths.get(key, rep.paths.get('errors'))}")
    return 0


def cmd_bench(args) -> int:
    cfg = config_from_args(args)
    rep = run_experiment(cfg, bench=True)
    t = rep.timing
    print(f"fine {t['fine_mean']:.4e} s  online {t['online_mean']:.4e} s  speedup {t['speedup']:.1f}x  "
          f"size {t['fine_size']}:{t['reduced_size']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgmor", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="train the reduced model and persist it")
    _add_config_flags(off)
    off.set_defaults(func=cmd_offline)

    on = sub.add_parser("online", help="load a persisted model and solve a test set")
    on.add_argument("bundle", help="bundle directory written by 'offline'")
    on.add_argument("--out", help="directory for the solution table")
    _add_config_flags(on)
    on.set_defaults(func=cmd_online)

    st = sub.add_parser("study", help="beta / coarse-mesh / N / L sweeps")
    st.add_argument("--study", nargs="+", choices=STUDIES, required=True)
    _add_config_flags(st)
    st.set_defaults(func=cmd_study)

    be = sub.add_parser("bench", help="fine versus online timing")
    _add_config_flags(be)
    be.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ExperimentError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
