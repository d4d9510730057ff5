"""Fast end-to-end property checks, shared by ``tomonet selftest`` and the tests.

Each check returns a :class:`CheckResult`; sample counts shrink with
``quick=True`` but tolerances never change.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cnn, states, stokes, tomography
from . import rng as _rng
from .linalg import fidelity, hermitian_eig


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _mixed_states(n: int, seed: int) -> np.ndarray:
    return np.stack([states.random_mixed_state(_rng.child_rng(seed, "check", k)) for k in range(n)])


def check_stokes_inversion(n: int = 1000, seed: int = 1) -> CheckResult:
    rho = _mixed_states(n, seed)
    grids = tomography.measure_values(rho)
    err = np.max(np.abs(stokes.stokes_reconstruct(grids) - rho))
    return CheckResult("stokes exact inversion", err < 1e-10, f"max |rho_rec - rho| = {err:.2e} over {n} states (< 1e-10)")


def check_tau_roundtrip(n: int = 1000, seed: int = 2) -> CheckResult:
    worst_f, worst_dual = 1.0, 0.0
    for rho in _mixed_states(n, seed):
        tau = states.tau_from_density(rho)
        worst_f = min(worst_f, fidelity(states.density_from_tau(tau), rho))
        worst_dual = max(worst_dual, np.max(np.abs(tau - states.tau_from_minors(rho))))
    ok = worst_f > 1 - 1e-8 and worst_dual < 1e-8
    return CheckResult(
        "tau round-trip",
        ok,
        f"min fidelity {worst_f:.12f} (> 1 - 1e-8), max |tau_chol - tau_minor| {worst_dual:.2e} (< 1e-8)",
    )


def check_physicality(n: int = 100_000, seed: int = 3) -> CheckResult:
    v = _rng.normal(_rng.make_rng(seed), (n, 16))
    rho = states.density_from_tau16(v)
    herm = np.max(np.abs(rho - np.conj(np.swapaxes(rho, -1, -2))))
    tr = np.max(np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1))
    w, _ = hermitian_eig(rho)
    ok = herm <= 1e-12 and tr <= 1e-12 and w.min() >= -1e-10
    return CheckResult(
        "physicality closure",
        ok,
        f"{n} vectors: hermiticity {herm:.1e}, trace {tr:.1e}, min eigenvalue {w.min():.1e}",
    )


def check_fidelity_identities(n: int = 500, seed: int = 4) -> CheckResult:
    a = _mixed_states(n, seed)
    b = _mixed_states(n, seed + 1)
    self_err = np.max(np.abs(fidelity(a, a) - 1))
    sym_err = np.max(np.abs(fidelity(a, b) - fidelity(b, a)))
    rng = _rng.make_rng(seed)
    overlap_err = 0.0
    for _ in range(n):
        p1 = states.haar_random_unitary(rng)[:, 0]
        p2 = states.haar_random_unitary(rng)[:, 0]
        f = fidelity(states.pure_density(p1), states.pure_density(p2))
        overlap_err = max(overlap_err, abs(f - abs(np.vdot(p1, p2)) ** 2))
    ok = self_err <= 1e-9 and sym_err <= 1e-9 and overlap_err <= 1e-8
    return CheckResult(
        "fidelity identities",
        ok,
        f"|F(r,r)-1| {self_err:.1e}, asymmetry {sym_err:.1e}, pure overlap error {overlap_err:.1e}",
    )


def gradient_check(n_per_layer: int = 40, seed: int = 5, step: float = 1e-6):
    """Central differences vs backprop on coordinates with |grad| >= 1e-7.

    Returns ``(max relative error, number of coordinates, layers covered)``.
    """
    rng = _rng.make_rng(seed)
    params = cnn.init_params(seed)
    for name, shape in cnn.LAYERS:
        if name.endswith("_b"):
            params[name][...] = 0.05 * _rng.normal(rng, shape)
    x = rng.random((2, 6, 6))
    target = 0.3 * _rng.normal(rng, (2, 16))
    masks = cnn.dropout_masks(rng, 2, 0.5)
    out, cache = cnn.forward(params, x, train=True, masks=masks)
    grads = cnn.backward(params, cache, target)

    def loss_at(values):
        p = cnn.CnnParams(values)
        return cnn.loss_mse(cnn.forward(p, x, train=True, masks=masks)[0], target)

    offset, worst, count, layers = 0, 0.0, 0, set()
    for name, shape in cnn.LAYERS:
        size = int(np.prod(shape))
        idx = offset + np.flatnonzero(np.abs(grads[offset : offset + size]) >= 1e-7)
        offset += size
        if not len(idx):
            continue
        for k in rng.choice(idx, size=min(n_per_layer, len(idx)), replace=False):
            plus, minus = params.values.copy(), params.values.copy()
            plus[k] += step
            minus[k] -= step
            fd = (loss_at(plus) - loss_at(minus)) / (2 * step)
            rel = abs(fd - grads[k]) / max(abs(fd), abs(grads[k]))
            worst = max(worst, rel)
            count += 1
        layers.add(name.split("_")[0])
    return worst, count, layers


def check_gradients(n_per_layer: int = 40) -> CheckResult:
    worst, count, layers = gradient_check(n_per_layer)
    ok = worst < 1e-4 and count >= min(200, 5 * n_per_layer) and len(layers) == 5
    return CheckResult(
        "cnn gradient check",
        ok,
        f"{count} coordinates over {len(layers)} layers, max relative error {worst:.2e} (< 1e-4)",
    )


def check_determinism(seed: int = 7) -> CheckResult:
    from .cli import main

    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for run in ("a", "b"):
            out = Path(tmp) / run
            code = main(["fig2a", "--smoke", "--seed", str(seed), "--out", str(out)])
            blobs.append((code, sorted((p.name, p.read_bytes()) for p in out.glob("*.csv"))))
    ok = blobs[0][0] == 0 and blobs[0] == blobs[1] and len(blobs[0][1]) > 0
    return CheckResult("fig2a determinism", ok, f"{len(blobs[0][1])} CSV files byte-identical across runs: {ok}")


def check_measurements() -> CheckResult:
    flat = tomography.measure_values(np.eye(4) / 4)
    flat_err = np.max(np.abs(flat - 0.25))
    bell = np.zeros(4, dtype=complex)
    bell[[0, 3]] = 1
    m = tomography.measure_values(states.pure_density(bell))
    s = stokes.stokes_params(m)
    errs = [abs(m[0, 0] - 0.5), abs(m[0, 1]), abs(s[3, 3] - 1), abs(s[1, 1] - 1), abs(s[2, 2] + 1)]
    ok = flat_err <= 1e-12 and max(errs) <= 1e-12
    return CheckResult(
        "measurement sanity",
        ok,
        f"I/4 grid error {flat_err:.1e}; Bell m00={m[0, 0]:.3f} m01={m[0, 1]:.3f} "
        f"s33={s[3, 3]:.3f} s11={s[1, 1]:.3f} s22={s[2, 2]:.3f}",
    )


def run_checks(quick: bool = False) -> list[CheckResult]:
    scale = 10 if quick else 1
    return [
        check_stokes_inversion(1000 // scale),
        check_tau_roundtrip(1000 // scale),
        check_physicality(100_000 // scale),
        check_fidelity_identities(500 // scale),
        check_gradients(40),
        check_determinism(),
        check_measurements(),
    ]
