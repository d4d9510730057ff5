"""Command-line entry point: ``tomonet <subcommand> [options]``.

Exit codes: 0 success, 2 validation/format failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from . import experiments as ex
from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import FormatError, NumericalFailure, ValidationError
from .training import TrainConfig, evaluate, train_dataset

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3

_SIGMA_RE = re.compile(r"^\s*(?:(?P<num>[0-9.]+)\s*\*?\s*)?pi\s*(?:/\s*(?P<den>[0-9.]+))?\s*$")


def parse_sigma(text: str) -> float:
    """Float or a multiple/fraction of pi: ``0.5``, ``pi``, ``pi/6``, ``2pi/3``."""
    m = _SIGMA_RE.match(text.lower())
    if m:
        num = float(m.group("num") or 1.0)
        den = float(m.group("den") or 1.0)
        return num * math.pi / den
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse sigma {text!r}") from None


def _parse_values(text: str, kind: str) -> tuple:
    items = [t for t in text.split(",") if t.strip()]
    if kind == "fig3a":
        return tuple(parse_sigma(t) for t in items)
    return tuple(int(t) for t in items)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tomonet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="results", help="output directory")

    g = sub.add_parser("generate", help="simulate and save a dataset")
    common(g)
    g.add_argument("--states", type=int, default=20)
    g.add_argument("--kind", choices=("pure", "mixed"), default="mixed")
    g.add_argument("--sigma", type=parse_sigma, default=math.pi / 6)
    g.add_argument("--keep", type=int, default=36)
    g.add_argument("--noisy", type=int, default=200, help="grids per state")
    g.add_argument("--train-per-state", type=int, default=195)
    g.add_argument("--noiseless", type=int, default=0, metavar="N",
                   help="instead: N unique noiseless samples split 11:1")

    t = sub.add_parser("train", help="train the CNN on a saved dataset")
    common(t)
    t.add_argument("dataset", help="dataset directory written by `generate`")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--dump-samples", action="store_true")

    e = sub.add_parser("eval", help="score a checkpoint and Stokes on a dataset's test split")
    common(e)
    e.add_argument("dataset")
    e.add_argument("checkpoint")
    e.add_argument("--dump-samples", action="store_true")

    for kind in ex.KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} sweep")
        common(p)
        p.add_argument("--states", type=int, default=None)
        p.add_argument("--sigma", type=parse_sigma, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--keep", type=int, default=None)
        p.add_argument("--repetitions", type=int, default=None)
        p.add_argument("--values", default=None, help="comma-separated swept values")
        p.add_argument("--kind", choices=("pure", "mixed", "both"),
                       default={"fig2a": "both", "fig2b": "both", "fig3b": "pure", "noiseless": "pure"}.get(kind, "mixed"))
        p.add_argument("--compact", action="store_true",
                       help="fig3b: feed only the kept values, unpadded")
        scale = p.add_mutually_exclusive_group()
        scale.add_argument("--paper-scale", action="store_true")
        scale.add_argument("--smoke", action="store_true")
        p.add_argument("--dump-samples", action="store_true")
        p.add_argument("--record-time", action="store_true",
                       help="fill the CSV seconds column with wall-clock times")

    s = sub.add_parser("selftest", help="run the fast property checks")
    s.add_argument("--quick", action="store_true", help="reduced sample counts")
    return parser


def _experiment(args) -> int:
    factory = ex.paper_spec if args.paper_scale else ex.smoke_spec if args.smoke else ex.desk_spec
    overrides = dict(seed=args.seed, out=args.out, dump_samples=args.dump_samples,
                     record_time=args.record_time, compact=args.compact)
    for name, attr in (("states", "n_states"), ("sigma", "sigma"), ("epochs", "epochs"),
                       ("keep", "keep"), ("repetitions", "repetitions")):
        value = getattr(args, name)
        if value is not None:
            overrides[attr] = value
    if args.values:
        overrides["values"] = _parse_values(args.values, args.command)
    kinds = ("mixed", "pure") if args.kind == "both" else (args.kind,)
    for state_kind in kinds:
        spec = factory(args.command, state_kind=state_kind, **overrides)
        rows = ex.run(spec)
        for r in rows:
            print(f"{spec.name} swept={r.swept:.6g} cnn={r.cnn_mean:.5f}+-{r.cnn_std:.1e} "
                  f"stokes={r.stokes_mean:.5f}")
    return EXIT_OK


def _generate(args) -> int:
    if args.noiseless:
        data = ds_mod.generate_noiseless_random(args.noiseless, args.seed, args.kind)
    else:
        cfg = ds_mod.DatasetConfig(
            n_states=args.states, state_kind=args.kind, noisy_per_state=args.noisy,
            train_per_state=args.train_per_state, sigma=args.sigma,
            keep_projectors=args.keep, master_seed=args.seed,
        )
        data = ds_mod.generate(cfg)
    path = ds_mod.save(data, args.out)
    print(f"wrote {len(data.train)} train / {len(data.test)} test samples to {path}")
    return EXIT_OK


def _write_samples(path, fids, stokes_f, state_index) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "state_index", "cnn_fidelity", "stokes_fidelity"])
        for k, (f, s, i) in enumerate(zip(fids, stokes_f, state_index)):
            w.writerow([k, int(i), repr(float(f)), repr(float(s))])


def _train(args) -> int:
    data = ds_mod.load(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params, history = train_dataset(data, TrainConfig(epochs=args.epochs, seed=args.seed))
    save_checkpoint(params, out / "model.ckpt")
    with open(out / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "test_fidelity", "degenerate"])
        for k, (l, f, d) in enumerate(zip(history.train_loss, history.test_fidelity, history.degenerate)):
            w.writerow([k, repr(l), repr(f), d])
    final = history.test_fidelity[-1] if len(history) else float("nan")
    print(f"trained {args.epochs} epochs; final test fidelity {final:.5f}; checkpoint {out / 'model.ckpt'}")
    if args.dump_samples:
        fids, _ = evaluate(params, data.test.grids, data.test.references)
        stokes_f, _ = ex._stokes_fidelities(data.test)
        _write_samples(out / "samples.csv", fids, stokes_f, data.test.state_index)
    return EXIT_OK


def _eval(args) -> int:
    data = ds_mod.load(args.dataset)
    params = load_checkpoint(args.checkpoint)
    fids, bad = evaluate(params, data.test.grids, data.test.references)
    stokes_f, _ = ex._stokes_fidelities(data.test)
    print(f"cnn {np.mean(fids):.6f} +- {np.std(fids):.2e}  stokes {np.mean(stokes_f):.6f}  "
          f"degenerate {bad}")
    if args.dump_samples:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_samples(out / "samples.csv", fids, stokes_f, data.test.state_index)
    return EXIT_OK


def _selftest(args) -> int:
    from .selftest import run_checks

    results = run_checks(quick=args.quick)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"generate": _generate, "train": _train, "eval": _eval, "selftest": _selftest}
    try:
        return handlers.get(args.command, _experiment)(args)
    except (ValidationError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
