"""
Pathwise integrator for the stochastic lattice ZK equation.

Amplitudes are stored on the full grid in FFT order, with a leading batch axis
for independent trajectories: ``a.shape == (M,) + spec.shape``. One step is the
Strang composition

    linear(dt/2) -> noise(dt/2) -> nonlinear(dt) -> noise(dt/2) -> linear(dt/2)

where the linear and noise flows are exact phase rotations and the quadratic
flow is advanced with classical RK4. The quadratic term is

    d psi_k / dt = i lam kappa wbar(k) sum_{k1 + k2 = k mod 1} psi_k1 psi_k2,

with ``psi = sqrt|wbar| a`` and ``kappa = h**d`` by default, i.e. the momentum
sum carries the lattice measure of the frequency integral.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lattice import LatticeSpec
from .noise import NoiseModel


class DynamicsError(RuntimeError):
    """Raised when a trajectory blows up or inputs are inconsistent."""


def trajectory_rng(seed: int, traj: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, trajectory id)``."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(traj)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def default_dt(spec: LatticeSpec) -> float:
    """``min(0.1/lam, 0.1/max|omega|)``."""
    wmax = float(np.max(np.abs(spec.omega)))
    cands = [0.1 / wmax] if wmax > 0 else [0.1]
    if spec.lam > 0:
        cands.append(0.1 / spec.lam)
    return min(cands)


@dataclass
class IntegratorConfig:
    """Time stepping parameters.

    Attributes
    ----------
    t_final : float
    dt : float, optional
        Upper bound on the step; defaults to :func:`default_dt`. Each
        interval between snapshots is split into equal steps not exceeding it.
    snapshot_times : list of float
        Times at which the state is recorded; ``t_final`` is always included.
    coupling_norm : float, optional
        Prefactor ``kappa`` of the momentum sum; defaults to ``h**d``.
    """

    t_final: float
    dt: float | None = None
    snapshot_times: list = field(default_factory=list)
    coupling_norm: float | None = None

    def resolved_dt(self, spec: LatticeSpec) -> float:
        dt = default_dt(spec) if self.dt is None else float(self.dt)
        if not dt > 0:
            raise DynamicsError("dt must be positive")
        return dt

    def times(self) -> list:
        ts = sorted(set(float(t) for t in self.snapshot_times) | {float(self.t_final)})
        if ts[0] < 0:
            raise DynamicsError("snapshot times must be nonnegative")
        return ts


class Stepper:
    """Precomputed phase tables and kernels for one lattice."""

    def __init__(self, spec: LatticeSpec, model: NoiseModel | None = None,
                 coupling_norm: float | None = None):
        self.spec = spec
        self.model = model
        self.axes = tuple(range(-spec.d, 0))
        self.omega = spec.omega
        wb = spec.omega_bar
        self.root = np.sqrt(np.abs(wb))
        self.signed_root = np.sign(wb) * self.root
        kappa = spec.h ** spec.d if coupling_norm is None else float(coupling_norm)
        # N**d from the unnormalised cyclic convolution folded into the prefactor
        self.prefactor = spec.lam * kappa * spec.N ** spec.d

    # -- substeps ---------------------------------------------------------
    def linear(self, a: np.ndarray, dt: float) -> np.ndarray:
        return a * np.exp(1j * self.omega * dt)

    def noise(self, a: np.ndarray, dt: float, rngs) -> np.ndarray:
        model = self.model
        if model is None or model.c_r == 0.0 or dt == 0.0:
            return a
        scale = np.sqrt(dt)
        dB = np.stack([r.standard_normal(model.n_boxes) for r in rngs]) * scale
        return a * np.exp(1j * model.phase_field(dB))

    def drift(self, a: np.ndarray) -> np.ndarray:
        """Quadratic vector field in the amplitude variable."""
        psi = self.root * a
        x = np.fft.ifftn(psi, axes=self.axes).real
        conv = np.fft.fftn(x * x, axes=self.axes)
        return (1j * self.prefactor) * self.signed_root * conv

    def nonlinear(self, a: np.ndarray, dt: float) -> np.ndarray:
        if self.prefactor == 0.0 or dt == 0.0:
            return a
        k1 = self.drift(a)
        k2 = self.drift(a + 0.5 * dt * k1)
        k3 = self.drift(a + 0.5 * dt * k2)
        k4 = self.drift(a + dt * k3)
        out = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return enforce_parity(out, self.spec)

    def step(self, a: np.ndarray, dt: float, rngs) -> np.ndarray:
        a = self.linear(a, 0.5 * dt)
        a = self.noise(a, 0.5 * dt, rngs)
        a = self.nonlinear(a, dt)
        a = self.noise(a, 0.5 * dt, rngs)
        a = self.linear(a, 0.5 * dt)
        return a


def mirror(a: np.ndarray, d: int) -> np.ndarray:
    """Array holding ``a[-k]`` at position ``k`` over the last ``d`` axes."""
    out = a
    for ax in range(a.ndim - d, a.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def enforce_parity(a: np.ndarray, spec: LatticeSpec) -> np.ndarray:
    """Project onto ``a[-k] = conj(a[k])`` and zero the inert plane."""
    out = 0.5 * (a + np.conj(mirror(a, spec.d)))
    out[..., ~spec.active_mask] = 0.0
    return out


def linear_phase_step(a: np.ndarray, dt: float, spec: LatticeSpec) -> np.ndarray:
    """Exact linear flow ``a_k -> a_k exp(i omega(k) dt)``."""
    return Stepper(spec).linear(a, dt)


def noise_phase_step(a: np.ndarray, dt: float, rngs, model: NoiseModel) -> np.ndarray:
    """Exact Stratonovich noise flow; ``rngs`` holds one generator per trajectory."""
    a = np.asarray(a)
    single = a.ndim == model.spec.d
    batch = a[None] if single else a
    if not isinstance(rngs, (list, tuple)):
        rngs = [rngs]
    out = Stepper(model.spec, model).noise(batch, dt, rngs)
    return out[0] if single else out


def nonlinear_step(a: np.ndarray, dt: float, spec: LatticeSpec,
                   coupling_norm: float | None = None) -> np.ndarray:
    """One RK4 step of the quadratic flow."""
    return Stepper(spec, None, coupling_norm).nonlinear(a, dt)


def _check_finite(a: np.ndarray, t: float, traj_ids):
    bad = ~np.all(np.isfinite(a.reshape(a.shape[0], -1)), axis=1)
    if np.any(bad):
        which = [int(traj_ids[i]) for i in np.nonzero(bad)[0]]
        raise DynamicsError(f"non-finite amplitudes at t={t:.6g} in trajectories {which}")


def run_trajectory(field0: np.ndarray, config: IntegratorConfig, spec: LatticeSpec,
                   model: NoiseModel | None, rngs, traj_ids=None) -> dict:
    """Integrate a batch of trajectories and record snapshots.

    Parameters
    ----------
    field0 : numpy.ndarray, shape ``(M,) + spec.shape`` or ``spec.shape``
    rngs : list of numpy.random.Generator
        One stream per trajectory, consumed in order.

    Returns
    -------
    dict
        Maps each snapshot time to an array with the shape of ``field0``.
    """
    a = np.asarray(field0, dtype=complex)
    single = a.ndim == spec.d
    if single:
        a = a[None]
        if not isinstance(rngs, (list, tuple)):
            rngs = [rngs]
    if a.shape[1:] != spec.shape or len(rngs) != a.shape[0]:
        raise DynamicsError("field and rng batch are inconsistent with the lattice")
    traj_ids = list(range(a.shape[0])) if traj_ids is None else list(traj_ids)
    stepper = Stepper(spec, model, config.coupling_norm)
    dt_max = config.resolved_dt(spec)
    out = {}
    t = 0.0
    for ts in config.times():
        span = ts - t
        n = int(np.ceil(span / dt_max - 1e-9)) if span > 0 else 0
        if n:
            dt = span / n
            for _ in range(n):
                a = stepper.step(a, dt, rngs)
            _check_finite(a, ts, traj_ids)
        t = ts
        out[ts] = a[0].copy() if single else a.copy()
    return out


def run_ensemble(sampler, config: IntegratorConfig, spec: LatticeSpec, model: NoiseModel | None,
                 seed: int, n_traj: int, threads: int = 1, chunk: int = 50,
                 traj_offset: int = 0) -> dict:
    """Sample initial fields and integrate ``n_traj`` independent trajectories.

    Every trajectory owns the stream ``trajectory_rng(seed, id)``: it first
    draws its initial field (if ``sampler`` is given) and then its Brownian
    increments. Results do not depend on ``threads`` or ``chunk``.

    Parameters
    ----------
    sampler : object with ``sample(rng)`` or callable ``f(traj_id) -> field``
    """
    ids = list(range(traj_offset, traj_offset + n_traj))
    chunks = [ids[i:i + chunk] for i in range(0, len(ids), chunk)]

    def work(block):
        rngs = [trajectory_rng(seed, i) for i in block]
        if hasattr(sampler, "sample"):
            a0 = np.stack([sampler.sample(r) for r in rngs])
        else:
            a0 = np.stack([np.asarray(sampler(i), dtype=complex) for i in block])
        return run_trajectory(a0, config, spec, model, rngs, traj_ids=block)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    times = config.times()
    return {t: np.concatenate([p[t] for p in parts], axis=0) for t in times}


def weight_field(spec: LatticeSpec, selector: str) -> np.ndarray:
    if selector in ("abs_k1", "|k1|"):
        w = np.abs(spec.k_grid[..., 0])
    elif selector in ("abs_wbar", "|wbar|"):
        w = np.abs(spec.omega_bar)
    elif selector in ("one", "1"):
        w = np.ones(spec.shape)
    else:
        raise ValueError(f"unknown weight {selector!r}")
    return np.where(spec.active_mask, w, 0.0)


def weighted_action(a: np.ndarray, spec: LatticeSpec, selector: str = "abs_k1") -> np.ndarray:
    """``h^d sum_k w(k) |a_k|^2 / 2`` over the frequency domain (per trajectory)."""
    w = weight_field(spec, selector)
    axes = tuple(range(-spec.d, 0))
    return spec.h ** spec.d * np.sum(w * np.abs(a) ** 2, axis=axes) / 2.0


def action_rate(a: np.ndarray, spec: LatticeSpec, coupling_norm: float | None = None) -> np.ndarray:
    """Instantaneous rate of ``weighted_action(|k1|)`` under the quadratic flow.

    Non-wrapping triads cancel exactly in this rate, so what remains is the
    contribution of triads whose momentum sum wraps around the torus.
    """
    st = Stepper(spec, None, coupling_norm)
    w = weight_field(spec, "abs_k1")
    axes = tuple(range(-spec.d, 0))
    da = st.drift(a)
    return spec.h ** spec.d * np.sum(w * np.real(np.conj(a) * da), axis=axes)


def write_snapshot_csv(path, a: np.ndarray, spec: LatticeSpec, meta: dict) -> None:
    """Write one field as ``(j_1..j_d, re, im)`` rows plus a JSON sidecar."""
    path = Path(path)
    labels = spec.j_grid.reshape(-1, spec.d)
    vals = np.asarray(a).reshape(-1)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"j{i + 1}" for i in range(spec.d)] + ["re_a", "im_a"])
        for lab, v in zip(labels, vals):
            wr.writerow([*map(int, lab), repr(float(v.real)), repr(float(v.imag))])
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
