"""Fidelity sweeps: CNN vs Stokes reconstruction over one swept parameter.

Each sweep point builds one dataset and trains ``repetitions`` networks from
different initial weights on it; CNN mean/std are taken over the repetitions'
mean test fidelities.  Stokes reconstruction is deterministic, so its std over
repetitions is 0 and it is computed once per point.

Per-point results are cached as JSON under ``<out>/points/`` keyed by a hash
of everything that determines them, so an interrupted sweep resumes where it
stopped and a finished one is reproduced byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import dataset as ds_mod
from . import rng as _rng
from . import stokes
from .exceptions import ValidationError
from .linalg import fidelity
from .training import TrainConfig, evaluate, train

logger = logging.getLogger(__name__)

CSV_HEADER = ("swept", "cnn_mean", "cnn_std", "stokes_mean", "stokes_std", "seconds")
WORKERS_ENV = "TOMONET_WORKERS"
KINDS = ("fig2a", "fig2b", "fig3a", "fig3b", "noiseless")

PI = math.pi
FIG3A_PAPER_SIGMAS = tuple(PI / k for k in (1, 2, 3, 6, 9, 12, 15, 18, 21, 800, 1200, 1600))


@dataclass(frozen=True)
class ResultRow:
    swept: float
    cnn_mean: float
    cnn_std: float
    stokes_mean: float
    stokes_std: float
    seconds: float = 0.0


@dataclass(frozen=True)
class ExperimentSpec:
    """What to sweep and at which scale.

    ``values`` holds the swept quantity: number of states (fig2a), training
    grids per state (fig2b), sigma (fig3a), kept projectors (fig3b) or total
    sample count (noiseless).
    """

    kind: str
    values: tuple
    repetitions: int = 3
    epochs: int = 200
    out: str = "results"
    seed: int = 0
    state_kind: str = "mixed"
    n_states: int = 20
    noisy_per_state: int = 200
    train_per_state: int = 195
    sigma: float = PI / 6
    keep: int = 36
    compact: bool = False
    dump_samples: bool = False
    record_time: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown experiment kind {self.kind!r}")
        if not self.values:
            raise ValidationError("swept values must be non-empty")
        if self.repetitions < 1:
            raise ValidationError("repetitions must be >= 1")
        object.__setattr__(self, "values", tuple(self.values))

    @property
    def name(self) -> str:
        name = self.kind
        if self.kind in ("fig2a", "fig2b", "fig3a", "fig3b", "noiseless"):
            name += f"_{self.state_kind}"
        if self.compact:
            name += "_compact"
        return name


def desk_spec(kind: str, **overrides) -> ExperimentSpec:
    """Reduced profile: 20 states, 200 epochs, 3 repetitions."""
    base = dict(
        fig2a=dict(values=(20,)),
        fig2b=dict(values=(40, 120, 195)),
        fig3a=dict(values=(PI, PI / 6, PI / 21)),
        fig3b=dict(values=(4, 16, 28, 36), n_states=30, state_kind="pure"),
        noiseless=dict(values=(5000,), repetitions=1, state_kind="pure", epochs=40),
    )[kind]
    base.update(overrides)
    return ExperimentSpec(kind=kind, **base)


def paper_spec(kind: str, **overrides) -> ExperimentSpec:
    """Full-size sweeps: 10 repetitions, 100-200 states, 500-800 epochs."""
    base = dict(
        fig2a=dict(values=tuple(range(20, 201, 20)), epochs=800),
        fig2b=dict(values=(40, 80, 120, 160, 195), n_states=100, epochs=500),
        fig3a=dict(values=FIG3A_PAPER_SIGMAS, n_states=100, epochs=500),
        fig3b=dict(values=tuple(range(4, 37, 4)), n_states=100, epochs=500, state_kind="pure"),
        noiseless=dict(values=(60000,), epochs=500, repetitions=1, state_kind="pure"),
    )[kind]
    base.setdefault("repetitions", 10)
    base.update(overrides)
    return ExperimentSpec(kind=kind, **base)


def smoke_spec(kind: str, **overrides) -> ExperimentSpec:
    """Seconds-scale profile for CI and determinism checks."""
    base = dict(
        fig2a=dict(values=(3,)),
        fig2b=dict(values=(4, 8)),
        fig3a=dict(values=(PI, PI / 21)),
        fig3b=dict(values=(4, 36), state_kind="pure"),
        noiseless=dict(values=(40,), state_kind="pure"),
    )[kind]
    base.update(dict(repetitions=1, epochs=2, n_states=3, noisy_per_state=10, train_per_state=8))
    if kind == "fig2b":
        base.update(noisy_per_state=12, train_per_state=8)
    base.update(overrides)
    return ExperimentSpec(kind=kind, **base)


# --- compact (unpadded) inputs ------------------------------------------------


def compact_shape(k: int) -> tuple[int, int]:
    """Smallest-area rectangle holding ``k`` cells; ties go to the squarer one."""
    best = None
    for rows in range(1, k + 1):
        cols = -(-k // rows)
        if rows > cols:
            break
        cand = (rows * cols, cols - rows, (rows, cols))
        if best is None or cand < best:
            best = cand
    return best[2]


def compact_inputs(grids: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Kept values in row-major order, packed into :func:`compact_shape`."""
    idx = np.flatnonzero(np.asarray(mask, bool).reshape(-1))
    rows, cols = compact_shape(len(idx))
    flat = np.zeros((len(grids), rows * cols))
    flat[:, : len(idx)] = grids.reshape(len(grids), 36)[:, idx]
    return flat.reshape(len(grids), rows, cols)


# --- sweep machinery ----------------------------------------------------------


def _point_dataset(spec: ExperimentSpec, value) -> ds_mod.Dataset:
    data_seed = _rng.derive_seed(spec.seed, f"data-{spec.state_kind}")
    if spec.kind == "noiseless":
        return ds_mod.generate_noiseless_random(int(value), data_seed, spec.state_kind)
    cfg = dict(
        n_states=spec.n_states,
        state_kind=spec.state_kind,
        noisy_per_state=spec.noisy_per_state,
        train_per_state=spec.train_per_state,
        sigma=spec.sigma,
        keep_projectors=spec.keep,
        master_seed=data_seed,
    )
    if spec.kind == "fig2a":
        cfg["n_states"] = int(value)
    elif spec.kind == "fig2b":
        test = spec.noisy_per_state - spec.train_per_state
        cfg["train_per_state"] = int(value)
        cfg["noisy_per_state"] = int(value) + test
    elif spec.kind == "fig3a":
        cfg["sigma"] = float(value)
    elif spec.kind == "fig3b":
        cfg["keep_projectors"] = int(value)
    return ds_mod.generate(ds_mod.DatasetConfig(**cfg))


def _inputs(spec: ExperimentSpec, split: ds_mod.SampleSet) -> np.ndarray:
    if spec.compact:
        return compact_inputs(split.grids, split.masks[0])
    return split.grids


def _stokes_fidelities(split: ds_mod.SampleSet) -> tuple[np.ndarray, np.ndarray]:
    raw = stokes.stokes_reconstruct(split.grids)
    rho, min_eig = stokes.physicalize(raw, return_min_eig=True)
    return np.atleast_1d(fidelity(rho, split.references)), np.atleast_1d(min_eig)


def _run_repetition(spec: ExperimentSpec, value, rep: int):
    data = _point_dataset(spec, value)
    cfg = TrainConfig(epochs=spec.epochs, seed=_rng.derive_seed(spec.seed, "init", rep))
    x_train, x_test = _inputs(spec, data.train), _inputs(spec, data.test)
    params, history = train(x_train, data.train.targets, cfg, x_test, data.test.references)
    fids, bad = evaluate(params, x_test, data.test.references)
    return fids, bad, history


def _point_key(spec: ExperimentSpec, value) -> str:
    fields = asdict(spec)
    for name in ("out", "dump_samples", "record_time", "values"):
        fields.pop(name)
    fields["value"] = value
    blob = json.dumps(fields, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_point(spec: ExperimentSpec, value, pool=None) -> dict:
    """All repetitions of one sweep point, with per-sample detail."""
    start = time.perf_counter()
    data = _point_dataset(spec, value)
    stokes_f, min_eig = _stokes_fidelities(data.test)
    reps = range(spec.repetitions)
    if pool is not None:
        results = list(pool.map(_run_repetition, [spec] * len(reps), [value] * len(reps), reps))
    else:
        results = [_run_repetition(spec, value, r) for r in reps]
    cnn_means = [float(np.mean(f)) for f, _, _ in results]
    return dict(
        row=asdict(
            ResultRow(
                swept=float(value),
                cnn_mean=float(np.mean(cnn_means)),
                cnn_std=float(np.std(cnn_means)),
                stokes_mean=float(np.mean(stokes_f)),
                stokes_std=0.0,
                seconds=time.perf_counter() - start,
            )
        ),
        cnn=[f.tolist() for f, _, _ in results],
        degenerate=[b for _, b, _ in results],
        history=[h.test_fidelity for _, _, h in results],
        loss=[h.train_loss for _, _, h in results],
        stokes=stokes_f.tolist(),
        stokes_min_eig=min_eig.tolist(),
        state_index=data.test.state_index.tolist(),
        input_shape=list(_inputs(spec, data.test).shape[1:]),
    )


def run(spec: ExperimentSpec) -> list[ResultRow]:
    """Run (or resume) a sweep and write its CSV, SVG and manifest into ``spec.out``."""
    out = Path(spec.out)
    points_dir = out / "points"
    points_dir.mkdir(parents=True, exist_ok=True)
    workers = _workers()
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    points = []
    try:
        for value in spec.values:
            cache = points_dir / f"{spec.name}_{_point_key(spec, value)}.json"
            if cache.exists():
                point = json.loads(cache.read_text())
                logger.info("%s: resuming point %s from %s", spec.name, value, cache)
            else:
                point = run_point(spec, value, pool)
                cache.write_text(json.dumps(point))
            logger.info("%s %s -> %s", spec.name, value, point["row"])
            points.append((value, point))
    finally:
        if pool is not None:
            pool.shutdown()
    rows = [ResultRow(**p["row"]) for _, p in points]
    write_csv(rows, out / f"{spec.name}.csv", record_time=spec.record_time)
    emit_plot(rows, out / f"{spec.name}.svg", title=spec.name, write_csv_too=False)
    manifest = dict(
        spec={k: v for k, v in asdict(spec).items() if k not in ("out",)},
        input_shapes={str(v): p["input_shape"] for v, p in points},
        degenerate_predictions={str(v): p["degenerate"] for v, p in points},
    )
    (out / f"{spec.name}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    if spec.dump_samples:
        dump_samples(points, out / f"{spec.name}_samples.csv")
        dump_history(points, out / f"{spec.name}_history.csv")
    return rows


def run_fig2a(spec: ExperimentSpec) -> list[ResultRow]:
    return run(_require(spec, "fig2a"))


def run_fig2b(spec: ExperimentSpec) -> list[ResultRow]:
    return run(_require(spec, "fig2b"))


def run_fig3a(spec: ExperimentSpec) -> list[ResultRow]:
    return run(_require(spec, "fig3a"))


def run_fig3b(spec: ExperimentSpec) -> list[ResultRow]:
    return run(_require(spec, "fig3b"))


def run_noiseless(spec: ExperimentSpec) -> list[ResultRow]:
    return run(_require(spec, "noiseless"))


def _require(spec: ExperimentSpec, kind: str) -> ExperimentSpec:
    if spec.kind != kind:
        raise ValidationError(f"expected a {kind} spec, got {spec.kind}")
    return spec


# --- output ---------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def csv_text(rows, record_time: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        seconds = r.seconds if record_time else 0.0
        writer.writerow(
            [_fmt(r.swept), _fmt(r.cnn_mean), _fmt(r.cnn_std), _fmt(r.stokes_mean),
             _fmt(r.stokes_std), _fmt(round(seconds, 3))]
        )
    return buf.getvalue()


def write_csv(rows, path, record_time: bool = True) -> Path:
    path = Path(path)
    path.write_text(csv_text(rows, record_time))
    return path


def read_csv(path) -> list[ResultRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [ResultRow(**{k: float(v) for k, v in rec.items()}) for rec in reader]


def dump_samples(points, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["swept", "repetition", "sample", "state_index", "cnn_fidelity",
                    "stokes_fidelity", "stokes_min_eig"])
        for value, p in points:
            for rep, fids in enumerate(p["cnn"]):
                for k, f in enumerate(fids):
                    w.writerow([_fmt(value), rep, k, p["state_index"][k], _fmt(f),
                                _fmt(p["stokes"][k]), _fmt(p["stokes_min_eig"][k])])


def dump_history(points, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["swept", "repetition", "epoch", "train_loss", "test_fidelity"])
        for value, p in points:
            for rep, (fids, losses) in enumerate(zip(p["history"], p["loss"])):
                for epoch, (f, l) in enumerate(zip(fids, losses)):
                    w.writerow([_fmt(value), rep, epoch, _fmt(l), _fmt(f)])


def emit_plot(rows, path, title: str = "", write_csv_too: bool = True) -> Path:
    """Standalone SVG line chart (CNN and Stokes means with +-1 std bars).

    A CSV with the same rows is written next to it unless ``write_csv_too``
    is False.
    """
    rows = list(rows)
    if not rows:
        raise ValidationError("cannot plot an empty result set")
    path = Path(path)
    width, height, pad = 640, 420, 60
    xs = [r.swept for r in rows]
    lo = min(min(r.cnn_mean - r.cnn_std, r.stokes_mean - r.stokes_std) for r in rows)
    y0, y1 = max(0.0, min(lo, 1.0) - 0.05), 1.0
    x0, x1 = min(xs), max(xs)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16">{_escape(title)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 15}" text-anchor="middle" font-size="12">swept</text>',
        f'<text x="15" y="{height / 2:.1f}" font-size="12" transform="rotate(-90 15 {height / 2:.1f})" '
        f'text-anchor="middle">average fidelity</text>',
    ]
    for frac in np.linspace(0, 1, 5):
        y = y0 + frac * (y1 - y0)
        parts.append(
            f'<text x="{pad - 6}" y="{sy(y) + 4:.1f}" text-anchor="end" font-size="10">{y:.3f}</text>'
        )
    for x in xs:
        parts.append(
            f'<text x="{sx(x):.1f}" y="{height - pad + 16}" text-anchor="middle" font-size="10">{x:.4g}</text>'
        )
    for label, mean, std, colour in (
        ("CNN", "cnn_mean", "cnn_std", "#c0392b"),
        ("Stokes", "stokes_mean", "stokes_std", "#27ae60"),
    ):
        pts = " ".join(f"{sx(r.swept):.2f},{sy(getattr(r, mean)):.2f}" for r in rows)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"/>')
        for r in rows:
            m, s = getattr(r, mean), getattr(r, std)
            cx = sx(r.swept)
            parts.append(
                f'<line x1="{cx:.2f}" y1="{sy(max(y0, m - s)):.2f}" x2="{cx:.2f}" '
                f'y2="{sy(min(y1, m + s)):.2f}" stroke="{colour}"/>'
            )
            parts.append(f'<circle cx="{cx:.2f}" cy="{sy(m):.2f}" r="3" fill="{colour}"/>')
        ly = pad + (0 if label == "CNN" else 18)
        parts.append(f'<text x="{width - pad - 70}" y="{ly}" font-size="12" fill="{colour}">{label}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    if write_csv_too:
        write_csv(rows, path.with_suffix(".csv"))
    return path


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
