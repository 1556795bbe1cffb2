"""
Monte-Carlo estimates of the Fourier Wigner function.

For a Wigner shift labelled by the integer vector ``m`` (``mho = 2 h m / eps``,
so ``eps mho / 2 = m h`` is a lattice vector) and a mode ``k = j h``,

    W(mho, k, t) = (eps/2)**d < a_{j-m}(t) conj(a_{j+m}(t)) >.

Grid points where ``j +- m`` leaves the lattice, or where ``k`` lies on the
inert plane, are marked invalid.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ensemble import mho_labels as _mho_labels
from .lattice import LatticeSpec, dispersion, torus_wrap


class GridMismatchError(ValueError):
    """Raised when a test function or estimate lives on a different grid."""


@dataclass
class WignerEstimate:
    """Sample mean and standard error of the Fourier Wigner function.

    Attributes
    ----------
    spec : LatticeSpec
    labels : numpy.ndarray, shape (n_mho, d)
        Integer Wigner shifts.
    mean, stderr : numpy.ndarray, shape ``(n_mho,) + spec.shape``
    valid : numpy.ndarray of bool, same shape
    n_samples : int
    t : float
    """

    spec: LatticeSpec
    labels: np.ndarray
    mean: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    valid: np.ndarray = field(repr=False)
    n_samples: int = 0
    t: float = 0.0

    @property
    def mho(self) -> np.ndarray:
        return mho_values(self.labels, self.spec)

    @property
    def weight(self) -> float:
        """Quadrature weight of one grid point in ``dmho dk``."""
        s = self.spec
        return (2.0 * s.h / s.epsilon) ** s.d * s.h ** s.d

    def index(self, m) -> int:
        hit = np.nonzero(np.all(self.labels == np.asarray(m), axis=1))[0]
        if len(hit) == 0:
            raise KeyError(f"shift {tuple(m)} not on the grid")
        return int(hit[0])


def mho_values(labels, spec: LatticeSpec) -> np.ndarray:
    return np.asarray(labels, dtype=float) * (2.0 * spec.h / spec.epsilon)


def shift_labels(spec: LatticeSpec, J: int) -> np.ndarray:
    """Integer Wigner shifts with ``|m^i| <= J``."""
    return _mho_labels(J, spec.d)


def valid_mask(spec: LatticeSpec, m) -> np.ndarray:
    j = spec.j_grid
    m = np.asarray(m, dtype=np.int64)
    ok = np.all(np.abs(j - m) <= spec.D, axis=-1) & np.all(np.abs(j + m) <= spec.D, axis=-1)
    return ok & spec.active_mask


def wigner_samples(a: np.ndarray, spec: LatticeSpec, m) -> np.ndarray:
    """Per-trajectory Wigner values for one shift; shape ``(M,) + spec.shape``."""
    axes = tuple(range(-spec.d, 0))
    m = tuple(int(x) for x in m)
    lo = np.roll(a, shift=m, axis=axes)                      # a[j - m]
    hi = np.roll(a, shift=tuple(-x for x in m), axis=axes)   # a[j + m]
    vals = (spec.epsilon / 2.0) ** spec.d * lo * np.conj(hi)
    return np.where(valid_mask(spec, m), vals, 0.0)


def estimate_wigner(snapshots: np.ndarray, spec: LatticeSpec, labels, t: float = 0.0) -> WignerEstimate:
    """Ensemble mean and standard error on the given shift grid.

    Parameters
    ----------
    snapshots : numpy.ndarray, shape ``(M,) + spec.shape``
        Amplitudes of ``M`` trajectories at time ``t``.
    labels : numpy.ndarray, shape (n_mho, d)
    """
    a = np.asarray(snapshots)
    if a.ndim == spec.d:
        a = a[None]
    M = a.shape[0]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, spec.d)
    mean = np.zeros((len(labels),) + spec.shape, dtype=complex)
    err = np.zeros((len(labels),) + spec.shape)
    valid = np.zeros((len(labels),) + spec.shape, dtype=bool)
    for i, m in enumerate(labels):
        s = wigner_samples(a, spec, m)
        mean[i] = s.mean(axis=0)
        if M > 1:
            err[i] = np.sqrt((np.abs(s - mean[i]) ** 2).sum(axis=0) / (M - 1) / M)
        valid[i] = valid_mask(spec, m)
    return WignerEstimate(spec, labels, mean, err, valid, M, t)


def exact_wigner_estimate(cov, labels, t: float = 0.0) -> WignerEstimate:
    """Wrap the covariance-exact initial Wigner function as an estimate (zero error)."""
    spec = cov.spec
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, spec.d)
    mean = np.zeros((len(labels),) + spec.shape, dtype=complex)
    valid = np.zeros(mean.shape, dtype=bool)
    j = spec.j_grid
    for i, m in enumerate(labels):
        ok = valid_mask(spec, m)
        val = (spec.epsilon / 2.0) ** spec.d * cov.pair_correlator(j - m, j + m)
        mean[i] = np.where(ok, val, 0.0)
        valid[i] = ok
    return WignerEstimate(spec, labels, mean, np.zeros(mean.shape), valid, 0, t)


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianTest:
    """Gaussian test function in ``(mho, k)``; ``k`` is periodised on the torus.

    ``G(mho, k) = exp(-|mho - mho_c|^2 / (2 s_mho^2) - |k - k_c|_T^2 / (2 s_k^2))``.
    A non-zero ``mho_c`` makes the pairing sensitive to transport phases.
    """

    k_center: tuple
    mho_center: tuple = (0.0, 0.0)
    k_width: float = 0.05
    mho_width: float = 0.5

    def __call__(self, mho, k) -> np.ndarray:
        mho = np.asarray(mho, dtype=float)
        k = np.asarray(k, dtype=float)
        d = k.shape[-1]
        kc = np.zeros(d)
        kc[: len(self.k_center)] = self.k_center
        mc = np.zeros(d)
        mc[: len(self.mho_center)] = self.mho_center
        dk = torus_wrap(k - kc)
        dm = mho - mc
        return np.exp(-0.5 * np.sum(dm * dm, axis=-1) / self.mho_width**2
                      - 0.5 * np.sum(dk * dk, axis=-1) / self.k_width**2)


def default_battery(center: Sequence[float], k_width: float = 0.05) -> list:
    """Test battery around a spectral centre: local, shifted and wide probes."""
    c = tuple(center)
    c2 = (c[0] + 0.03,) + tuple(c[1:])
    return [
        GaussianTest(c, (0.0, 0.0), k_width, 0.5),
        GaussianTest(c, (0.4, 0.0), k_width, 0.5),
        GaussianTest(c, (0.0, 0.4), k_width, 0.5),
        GaussianTest(c2, (0.3, 0.3), k_width, 0.6),
        GaussianTest(c, (0.0, 0.0), 2 * k_width, 1.0),
    ]


def sample_test_function(G: Callable, spec: LatticeSpec, labels) -> np.ndarray:
    """Evaluate ``G`` on a shift grid; shape ``(n_mho,) + spec.shape``."""
    labels = np.asarray(labels).reshape(-1, spec.d)
    mho = mho_values(labels, spec)
    k = spec.k_grid
    return np.stack([np.asarray(G(np.broadcast_to(mv, k.shape), k)) for mv in mho])


def pair_with_test_function(est: WignerEstimate, G) -> complex:
    """Quadrature of ``W * conj(G)`` over the valid grid points.

    ``G`` is either a callable ``G(mho, k)`` or an array already sampled on
    the estimate's grid.
    """
    if callable(G):
        Gs = sample_test_function(G, est.spec, est.labels)
    else:
        Gs = np.asarray(G)
        if Gs.shape != est.mean.shape:
            raise GridMismatchError(f"test function shape {Gs.shape} != grid {est.mean.shape}")
    return complex(est.weight * np.sum(np.where(est.valid, est.mean * np.conj(Gs), 0.0)))


def trajectory_pairings(snapshots: np.ndarray, spec: LatticeSpec, labels, tests) -> np.ndarray:
    """Pairing of each trajectory's Wigner function with each test.

    ``tests`` holds callables ``G(mho, k)`` or arrays already sampled on the
    shift grid (as returned by :func:`sample_test_function`).

    Returns
    -------
    numpy.ndarray of complex, shape (n_tests, M)
    """
    a = np.asarray(snapshots)
    if a.ndim == spec.d:
        a = a[None]
    labels = np.asarray(labels, dtype=np.int64).reshape(-1, spec.d)
    weight = (2.0 * spec.h / spec.epsilon) ** spec.d * spec.h ** spec.d
    axes = tuple(range(1, spec.d + 1))
    sampled = [sample_test_function(G, spec, labels) if callable(G) else np.asarray(G) for G in tests]
    per = np.zeros((len(tests), a.shape[0]), dtype=complex)
    for i, m in enumerate(labels):
        s = wigner_samples(a, spec, m)
        for t_i, g in enumerate(sampled):
            per[t_i] += weight * np.sum(s * np.conj(g[i]), axis=axes)
    return per


def mean_and_stderr(per: np.ndarray) -> tuple:
    """Row means and standard errors of per-trajectory values, shape (n, M)."""
    M = per.shape[1]
    mean = per.mean(axis=1)
    err = np.sqrt((np.abs(per - mean[:, None]) ** 2).sum(axis=1) / max(M - 1, 1) / M)
    return mean, err


def paired_ensemble(snapshots: np.ndarray, spec: LatticeSpec, labels, tests) -> tuple:
    """Per-test mean pairing and its standard error over trajectories.

    Pairing is linear in the Wigner function, so each trajectory yields one
    pairing value and the standard error accounts for correlations between
    grid points.

    Returns
    -------
    mean : numpy.ndarray of complex, shape (n_tests,)
    stderr : numpy.ndarray, shape (n_tests,)
    """
    return mean_and_stderr(trajectory_pairings(snapshots, spec, labels, tests))


def free_flow(est: WignerEstimate, t: float) -> WignerEstimate:
    """Exact linear evolution of a Wigner function over time ``t``.

    Each entry picks up the phase ``(omega(k_lo) - omega(k_hi)) t`` of its
    two modes. Box noise leaves same-box pairs untouched, and the initial
    covariance has no cross-box pairs, so this is also the noisy linear mean.
    """
    spec = est.spec
    j = spec.j_grid
    mean = np.empty_like(est.mean)
    for i, m in enumerate(est.labels):
        ph = (dispersion((j - m) * spec.h) - dispersion((j + m) * spec.h)) * t
        mean[i] = np.where(est.valid[i], est.mean[i] * np.exp(1j * ph), 0.0)
    return replace(est, mean=mean, t=est.t + t)


def continuum_pairing(W0: Callable, G: Callable, d: int, mho_max: float, n_mho: int = 81,
                      n_k: int = 256) -> complex:
    """Riemann sum of ``W0 * conj(G)`` over ``[-mho_max, mho_max]^d x T^d``."""
    mg = np.linspace(-mho_max, mho_max, n_mho)
    kg = (np.arange(n_k) + 0.5) / n_k - 0.5
    dm = mg[1] - mg[0]
    total = 0.0
    K = np.stack(np.meshgrid(*([kg] * d), indexing="ij"), axis=-1)
    for mv in np.stack(np.meshgrid(*([mg] * d), indexing="ij"), axis=-1).reshape(-1, d):
        Mv = np.broadcast_to(mv, K.shape)
        total += np.sum(W0(Mv, K) * np.conj(G(Mv, K)))
    return complex(total * dm**d / n_k**d)


@dataclass
class ConvergenceReport:
    status: str
    errors: np.ndarray
    resolutions: list
    decreasing: bool


def weak_convergence_check(estimates: Sequence[WignerEstimate], W0: Callable, tests,
                           mho_max: float = 3.0) -> ConvergenceReport:
    """Pair each estimate and the target against the battery and report the trend.

    ``errors[r]`` is the sum over tests of ``|<G, W_r> - <G, W0>|``. The trend
    is ``decreasing`` when the errors fall strictly along the sequence.
    """
    res = [(e.spec.D, e.spec.epsilon) for e in estimates]
    if len(estimates) < 3:
        return ConvergenceReport("insufficient", np.array([]), res, False)
    d = estimates[0].spec.d
    targets = [continuum_pairing(W0, G, d, mho_max) for G in tests]
    errs = []
    for e in estimates:
        errs.append(sum(abs(pair_with_test_function(e, G) - tg) for G, tg in zip(tests, targets)))
    errs = np.array(errs)
    dec = bool(np.all(np.diff(errs) < 0))
    return ConvergenceReport("decreasing" if dec else "not decreasing", errs, res, dec)


def hermitian_defect(est: WignerEstimate) -> float:
    """Largest ``|W(-mho) - conj W(mho)|`` in units of the combined standard error."""
    worst = 0.0
    for i, m in enumerate(est.labels):
        i2 = est.index(-m)
        ok = est.valid[i] & est.valid[i2]
        diff = np.abs(est.mean[i2] - np.conj(est.mean[i]))
        se = np.hypot(est.stderr[i], est.stderr[i2])
        z = np.where(ok & (se > 0), diff / np.where(se > 0, se, 1.0), 0.0)
        worst = max(worst, float(z.max()))
    return worst


def write_wigner_csv(path, est: WignerEstimate, meta: dict) -> None:
    """CSV with columns ``(m_1..m_d, j_1..j_d, re, im, stderr, n)`` plus a JSON sidecar."""
    spec = est.spec
    path = Path(path)
    labels = spec.j_grid.reshape(-1, spec.d)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow([f"mho_idx{i + 1}" for i in range(spec.d)] + [f"j{i + 1}" for i in range(spec.d)]
                    + ["re_W", "im_W", "stderr", "n"])
        for i, m in enumerate(est.labels):
            mean = est.mean[i].reshape(-1)
            err = est.stderr[i].reshape(-1)
            ok = est.valid[i].reshape(-1)
            for lab, v, e, good in zip(labels, mean, err, ok):
                if good:
                    wr.writerow([*map(int, m), *map(int, lab), repr(float(v.real)),
                                 repr(float(v.imag)), repr(float(e)), est.n_samples])
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
