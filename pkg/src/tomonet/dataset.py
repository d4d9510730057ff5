"""Seeded corpora of (measurement grid -> tau16 target, reference state).

Randomness is split per state and per draw (see :mod:`tomonet.rng`):

* state ``i``, attempt ``r``: ``child_rng(master, "state", i, r)``
* training grid ``j`` of state ``i``: ``child_rng(master, "noise-train", i, j)``
* test grid ``j`` of state ``i``: ``child_rng(master, "noise-test", i, j)``

Test draws use their own tag, so the held-out grids of a state do not depend
on how many training grids are requested.

On disk a dataset is a directory holding ``manifest.json`` and
``payload.bin``.  The payload is a sequence of fixed-size little-endian
records, training samples first, then test samples::

    offset  count  type   field
    0       36     <f8    grid values, row-major
    288     1      <u8    mask bits, bit k = row-major cell k
    296     16     <f8    tau16 target
    424     32     <f8    reference state, row-major, (re, im) interleaved
    680     1      <u8    state index
    (688 bytes per record)

The manifest carries the format version, the generating config, the split
sizes and the SHA-256 of the payload.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng
from . import states, tomography
from .exceptions import (
    ChecksumMismatch,
    FormatError,
    FormatVersionMismatch,
    SingularState,
    ValidationError,
)
from .tomography import MeasurementGrid

FORMAT_VERSION = 1
MAX_STATE_RETRIES = 10

RECORD_DTYPE = np.dtype(
    [
        ("grid", "<f8", (36,)),
        ("mask", "<u8"),
        ("target", "<f8", (16,)),
        ("reference", "<f8", (32,)),
        ("state_index", "<u8"),
    ]
)
assert RECORD_DTYPE.itemsize == 688

_BITS = np.uint64(1) << np.arange(36, dtype=np.uint64)


@dataclass(frozen=True)
class DatasetConfig:
    n_states: int
    state_kind: str = "mixed"
    noisy_per_state: int = 200
    train_per_state: int = 195
    sigma: float = np.pi / 6
    keep_projectors: int = 36
    master_seed: int = 0

    def __post_init__(self):
        if self.n_states < 1:
            raise ValidationError("n_states must be >= 1")
        if self.state_kind not in ("pure", "mixed"):
            raise ValidationError(f"state_kind must be 'pure' or 'mixed', got {self.state_kind!r}")
        if not 1 <= self.train_per_state < self.noisy_per_state:
            raise ValidationError("need 1 <= train_per_state < noisy_per_state")
        if not 1 <= self.keep_projectors <= 36:
            raise ValidationError("keep_projectors must be in [1, 36]")
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValidationError("sigma must be finite and >= 0")

    @property
    def test_per_state(self) -> int:
        return self.noisy_per_state - self.train_per_state


@dataclass(frozen=True)
class Sample:
    grid: MeasurementGrid
    target: np.ndarray
    state_index: int
    reference: np.ndarray


@dataclass
class SampleSet:
    """Column-oriented block of samples."""

    grids: np.ndarray  # (n, 6, 6) float, zeros where unmeasured
    masks: np.ndarray  # (n, 6, 6) bool
    targets: np.ndarray  # (n, 16)
    references: np.ndarray  # (n, 4, 4) complex
    state_index: np.ndarray  # (n,) int64

    def __len__(self) -> int:
        return len(self.grids)

    def __getitem__(self, k: int) -> Sample:
        return Sample(
            MeasurementGrid(self.grids[k], self.masks[k]),
            self.targets[k],
            int(self.state_index[k]),
            self.references[k],
        )

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, SampleSet):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("grids", "masks", "targets", "references", "state_index")
        )

    @classmethod
    def empty(cls) -> "SampleSet":
        return cls(
            np.zeros((0, 6, 6)),
            np.zeros((0, 6, 6), dtype=bool),
            np.zeros((0, 16)),
            np.zeros((0, 4, 4), dtype=complex),
            np.zeros(0, dtype=np.int64),
        )

    @classmethod
    def concat(cls, parts) -> "SampleSet":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(
            *(
                np.concatenate([getattr(p, f) for p in parts])
                for f in ("grids", "masks", "targets", "references", "state_index")
            )
        )

    def subset(self, idx) -> "SampleSet":
        return SampleSet(
            self.grids[idx], self.masks[idx], self.targets[idx],
            self.references[idx], self.state_index[idx],
        )


@dataclass
class Dataset:
    config: dict
    train: SampleSet
    test: SampleSet
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.config == other.config
            and self.train == other.train
            and self.test == other.test
        )


def draw_state(master_seed: int, i: int, kind: str) -> tuple[np.ndarray, np.ndarray]:
    """(reference state, tau16) for state ``i``, retrying singular draws."""
    for attempt in range(MAX_STATE_RETRIES):
        rho = states.random_state(_rng.child_rng(master_seed, "state", i, attempt), kind)
        try:
            tau = states.tau_from_density(rho)
        except SingularState:
            continue
        return rho, states.pack_tau16(tau)
    raise SingularState(f"state {i}: {MAX_STATE_RETRIES} singular draws in a row")


def noisy_grids(rho, master_seed, tag, i, n, sigma, mask) -> np.ndarray:
    """``n`` noisy measurement grids of ``rho``, zeroed outside ``mask``."""
    out = np.empty((n, 6, 6))
    for j in range(n):
        grid = tomography.noisy_projector_grid(_rng.child_rng(master_seed, tag, i, j), sigma)
        out[j] = tomography.measure_values(rho, grid)
    out[:, ~mask] = 0.0
    return out


def _block(rho, tau16, values, mask, i) -> SampleSet:
    n = len(values)
    return SampleSet(
        values,
        np.broadcast_to(mask, (n, 6, 6)).copy(),
        np.tile(tau16, (n, 1)),
        np.broadcast_to(rho, (n, 4, 4)).copy(),
        np.full(n, i, dtype=np.int64),
    )


def generate(cfg: DatasetConfig, keep_mask: np.ndarray | None = None) -> Dataset:
    """Noisy-measurement corpus: ``noisy_per_state`` grids for each random state.

    ``keep_mask`` overrides the row-major prefix selection of
    ``cfg.keep_projectors`` with an explicit 6x6 boolean pattern.
    """
    mask = tomography.prefix_mask(cfg.keep_projectors) if keep_mask is None else np.asarray(keep_mask, bool)
    if mask.shape != (6, 6) or not mask.any():
        raise ValidationError("keep_mask must be a non-empty 6x6 boolean array")
    train, test = [], []
    for i in range(cfg.n_states):
        rho, tau16 = draw_state(cfg.master_seed, i, cfg.state_kind)
        tr = noisy_grids(rho, cfg.master_seed, "noise-train", i, cfg.train_per_state, cfg.sigma, mask)
        te = noisy_grids(rho, cfg.master_seed, "noise-test", i, cfg.test_per_state, cfg.sigma, mask)
        train.append(_block(rho, tau16, tr, mask, i))
        test.append(_block(rho, tau16, te, mask, i))
    meta = {"kind": "noisy"}
    if keep_mask is not None:
        meta["keep_mask"] = np.flatnonzero(mask.reshape(-1)).tolist()
    return Dataset(asdict(cfg), SampleSet.concat(train), SampleSet.concat(test), meta)


def noiseless_split(n: int, train_fraction: float = 11 / 12) -> tuple[int, int]:
    n_train = int(np.floor(n * train_fraction))
    n_train = min(max(n_train, 1), n - 1)
    return n_train, n - n_train


def generate_noiseless_random(
    n: int, seed: int, state_kind: str = "mixed", train_fraction: float = 11 / 12
) -> Dataset:
    """``n`` distinct random states with one noiseless grid each.

    The default split is the 11:1 ratio (55,000 / 5,000 for n = 60,000),
    rounded down for the training side, with at least one sample per side.
    """
    if n < 2:
        raise ValidationError("need at least 2 samples")
    n_train, n_test = noiseless_split(n, train_fraction)
    p = tomography.projector_grid()
    mask = np.ones((6, 6), dtype=bool)
    blocks = []
    for i in range(n):
        rho, tau16 = draw_state(seed, i, state_kind)
        blocks.append(_block(rho, tau16, tomography.measure_values(rho, p)[None], mask, i))
    everything = SampleSet.concat(blocks)
    config = {
        "n": n,
        "state_kind": state_kind,
        "train_fraction": train_fraction,
        "master_seed": seed,
        "sigma": 0.0,
    }
    return Dataset(
        config,
        everything.subset(slice(0, n_train)),
        everything.subset(slice(n_train, n)),
        {"kind": "noiseless"},
    )


# --- serialization ----------------------------------------------------------


def _to_records(s: SampleSet) -> np.ndarray:
    rec = np.zeros(len(s), dtype=RECORD_DTYPE)
    rec["grid"] = s.grids.reshape(len(s), 36)
    rec["mask"] = (s.masks.reshape(len(s), 36).astype(np.uint64) * _BITS).sum(axis=1, dtype=np.uint64)
    rec["target"] = s.targets
    ref = s.references.reshape(len(s), 16)
    rec["reference"] = np.stack([ref.real, ref.imag], axis=-1).reshape(len(s), 32)
    rec["state_index"] = s.state_index
    return rec


def _from_records(rec: np.ndarray) -> SampleSet:
    n = len(rec)
    masks = (rec["mask"][:, None] & _BITS) != 0
    ref = rec["reference"].reshape(n, 16, 2)
    return SampleSet(
        rec["grid"].reshape(n, 6, 6).astype(np.float64),
        masks.reshape(n, 6, 6),
        rec["target"].astype(np.float64),
        (ref[..., 0] + 1j * ref[..., 1]).reshape(n, 4, 4),
        rec["state_index"].astype(np.int64),
    )


def save(ds: Dataset, path) -> Path:
    """Write ``manifest.json`` + ``payload.bin`` into directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    payload = _to_records(ds.train).tobytes() + _to_records(ds.test).tobytes()
    manifest = {
        "format": "tomonet-dataset",
        "format_version": FORMAT_VERSION,
        "config": ds.config,
        "meta": ds.meta,
        "n_train": len(ds.train),
        "n_test": len(ds.test),
        "record_bytes": RECORD_DTYPE.itemsize,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    (path / "payload.bin").write_bytes(payload)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load(path) -> Dataset:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
        payload = (path / "payload.bin").read_bytes()
    except json.JSONDecodeError as exc:
        raise FormatError(f"unreadable manifest: {exc}") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"dataset format version {manifest.get('format_version')!r}, expected {FORMAT_VERSION}"
        )
    if hashlib.sha256(payload).hexdigest() != manifest["sha256"]:
        raise ChecksumMismatch(f"payload checksum mismatch in {path}")
    n_train, n_test = manifest["n_train"], manifest["n_test"]
    if len(payload) != (n_train + n_test) * RECORD_DTYPE.itemsize:
        raise FormatError("payload size does not match manifest counts")
    rec = np.frombuffer(payload, dtype=RECORD_DTYPE)
    return Dataset(
        manifest["config"],
        _from_records(rec[:n_train]),
        _from_records(rec[n_train:]),
        manifest.get("meta", {}),
    )
