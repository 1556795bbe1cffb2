"""
Gaussian initial ensembles with box-block covariance.

The covariance of the positive-half amplitudes is
``B(k, k') = eps**-d * Bbar(k/eps, k'/eps)`` for modes sharing a box and zero
across boxes. Negative-half amplitudes are conjugates, so the ensemble is a
circularly symmetric complex Gaussian on the positive half and every moment
follows from Wick's rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import product
from typing import Callable

import numpy as np

from .lattice import LatticeSpec, torus_wrap
from .noise import NoiseModel, build_noise


class CovarianceError(ValueError):
    """Raised for profiles that do not give a valid covariance."""


class UnbalancedMomentWarning(UserWarning):
    """A moment with unequal numbers of ``a`` and ``a*`` factors was requested."""


EIG_CLAMP = 1e-10


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Named covariance profile ``Bbar(x, y)`` in scaled coordinates ``x = k/eps``.

    Attributes
    ----------
    name : str
    params : dict
    bbar : callable
        ``bbar(x, y, eps)`` with ``x, y`` of shape ``(..., d)``.
    density : callable
        Limiting spectral density ``F(k)`` on the torus, shape ``(...)``.
    limit : callable or None
        Weak limit ``W0(mho, k, box_constant)`` of the Fourier Wigner
        function, when known in closed form.
    """

    name: str
    params: dict
    bbar: Callable = field(repr=False)
    density: Callable = field(repr=False)
    limit: Callable | None = field(default=None, repr=False)


def _bump_density(center, width, amplitude, support):
    center = np.asarray(center, dtype=float)

    def F(k):
        k = np.asarray(k, dtype=float)
        dk = torus_wrap(k - center)
        out = amplitude * np.exp(-0.5 * np.sum(dk * dk, axis=-1) / width**2)
        if support is not None:
            out = np.where(np.max(np.abs(dk), axis=-1) <= support, out, 0.0)
        return out

    return F


def gaussian_bump(d: int, center=(0.15,), width: float = 0.04, coherence: float = 0.5,
                  amplitude: float = 1.0, support: float | None = None) -> Profile:
    """Separable Gaussian bump with Gaussian coherence across the box.

    ``Bbar(x, y) = sqrt(F(eps x) F(eps y)) * exp(-|x - y|**2 / (2 coherence**2))``
    where ``F`` is a product of one-dimensional Gaussians of width ``width``
    centred at ``center`` (missing coordinates are zero). The square-root
    factorisation keeps every box block positive semi-definite.

    Parameters
    ----------
    d : int
    center : sequence of float
        Centre of the spectral bump on the positive half; padded with zeros.
    width : float
        Spectral width in ``k`` units.
    coherence : float
        Width of the Wigner function in the ``mho`` variable.
    amplitude : float
    support : float, optional
        Hard cutoff on the per-coordinate distance to the centre. Useful to
        keep all excited modes at low frequency.
    """
    c = np.zeros(d)
    c[: len(center)] = center
    F = _bump_density(c, width, amplitude, support)

    def bbar(x, y, eps):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        diff = x - y
        coh = np.exp(-0.5 * np.sum(diff * diff, axis=-1) / coherence**2)
        return np.sqrt(F(eps * x) * F(eps * y)) * coh

    def limit(mho, k, box_constant):
        mho = np.asarray(mho, dtype=float)
        overlap = np.prod(np.clip(1.0 - np.abs(mho) / box_constant, 0.0, None), axis=-1)
        coh = np.exp(-0.5 * np.sum(mho * mho, axis=-1) / coherence**2)
        return 2.0**-d * F(k) * coh * overlap

    params = dict(center=list(map(float, c)), width=width, coherence=coherence,
                  amplitude=amplitude, support=support)
    return Profile("gaussian_bump", params, bbar, F, limit)


def diagonal(d: int, center=(0.15,), width: float = 0.04, amplitude: float = 1.0,
             support: float | None = None) -> Profile:
    """Diagonal profile: independent modes with variance ``eps**-d F(k)``."""
    c = np.zeros(d)
    c[: len(center)] = center
    F = _bump_density(c, width, amplitude, support)

    def bbar(x, y, eps):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        eq = np.all(x == y, axis=-1)
        return np.where(eq, F(eps * x), 0.0)

    params = dict(center=list(map(float, c)), width=width, amplitude=amplitude, support=support)
    return Profile("diagonal", params, bbar, F, None)


def constant(d: int, value: float = 1.0) -> Profile:
    """Constant profile: every box block is ``value * J_m`` (rank one)."""

    def bbar(x, y, eps):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(y)[:-1])
        return np.full(shape, float(value))

    def F(k):
        return np.full(np.shape(k)[:-1], float(value))

    def limit(mho, k, box_constant):
        mho = np.asarray(mho, dtype=float)
        overlap = np.prod(np.clip(1.0 - np.abs(mho) / box_constant, 0.0, None), axis=-1)
        return 2.0**-d * F(k) * overlap

    return Profile("constant", dict(value=value), bbar, F, limit)


PROFILES = {"gaussian_bump": gaussian_bump, "diagonal": diagonal, "constant": constant}


def make_profile(name: str, d: int, **params) -> Profile:
    """Look up a profile factory by name."""
    try:
        factory = PROFILES[name]
    except KeyError:
        raise CovarianceError(f"unknown profile {name!r}; known: {sorted(PROFILES)}") from None
    return factory(d, **params)


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------

@dataclass
class CovarianceModel:
    """Block covariance of the positive-half amplitudes.

    Blocks are stored zero-padded to the largest box size ``m_max``:
    ``blocks[b, i, j]`` is ``B`` between the i-th and j-th mode of box ``b``
    (modes ordered as in ``noise.boxes[b]``).

    Attributes
    ----------
    spec, noise, profile
    blocks : numpy.ndarray, shape (n_boxes, m_max, m_max)
    eigvals : numpy.ndarray, shape (n_boxes, m_max)
        Clamped eigenvalues, descending; padding entries are zero.
    eigvecs : numpy.ndarray, shape (n_boxes, m_max, m_max)
    position : numpy.ndarray
        Slot of every storage position within its box (mirrored for the
        negative half, ``-1`` on the inert plane).
    """

    spec: LatticeSpec
    noise: NoiseModel
    profile: Profile
    blocks: np.ndarray = field(repr=False)
    eigvals: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    position: np.ndarray = field(repr=False)
    min_raw_eigval: float = 0.0

    @property
    def n_boxes(self) -> int:
        return self.blocks.shape[0]

    @property
    def m_max(self) -> int:
        return self.blocks.shape[1]

    def daleth(self) -> np.ndarray:
        """``eps**d`` times the eigenvalue attached to every storage position.

        The i-th slot of a box carries the i-th largest eigenvalue of that
        box; mirrored positions carry the same value, the inert plane zero.
        """
        ids = np.where(self.noise.box_id >= 0, self.noise.box_id, 0)
        pos = np.where(self.position >= 0, self.position, 0)
        out = self.spec.epsilon ** self.spec.d * self.eigvals[ids, pos]
        return np.where(self.noise.box_id >= 0, out, 0.0)

    def assumption_c_range(self) -> tuple[float, float]:
        dl = self.daleth()[self.spec.active_mask]
        return float(dl.min()), float(dl.max())

    def pair_correlator(self, p, q) -> np.ndarray:
        """``<a_p a*_q>`` for integer labels ``p, q`` of shape ``(..., d)``.

        Labels outside the lattice or on the inert plane give zero.
        """
        spec = self.spec
        p = np.asarray(p, dtype=np.int64)
        q = np.asarray(q, dtype=np.int64)
        p, q = np.broadcast_arrays(p, q)
        inside = np.all(np.abs(p) <= spec.D, axis=-1) & np.all(np.abs(q) <= spec.D, axis=-1)
        sp = np.sign(p[..., 0])
        sq = np.sign(q[..., 0])
        ok = inside & (sp != 0) & (sp == sq)
        # both halves negative: <a_p a*_q> = <a_{-q} a*_{-p}> = B(-p,-q) by symmetry
        pp = np.where(sp[..., None] < 0, -p, p) % spec.N
        qq = np.where(sq[..., None] < 0, -q, q) % spec.N
        ip = tuple(np.moveaxis(pp, -1, 0))
        iq = tuple(np.moveaxis(qq, -1, 0))
        bp = self.noise.box_id[ip]
        bq = self.noise.box_id[iq]
        ok &= (bp == bq) & (bp >= 0)
        bp = np.where(ok, bp, 0)
        val = self.blocks[bp, np.where(ok, self.position[ip], 0), np.where(ok, self.position[iq], 0)]
        return np.where(ok, val, 0.0)

    def pseudo_correlator(self, p, q) -> np.ndarray:
        """``<a_p a_q>``: nonzero only for opposite halves, where it equals ``<a_p a*_{-q}>``."""
        q = np.asarray(q, dtype=np.int64)
        p = np.asarray(p, dtype=np.int64)
        return np.where(np.sign(p[..., 0]) == -np.sign(q[..., 0]), self.pair_correlator(p, -q), 0.0)

    def dense_plus(self) -> tuple[np.ndarray, np.ndarray]:
        """Full covariance on the positive half (small lattices only)."""
        labels = self.spec.plus_modes()
        return labels, self.pair_correlator(labels[:, None, :], labels[None, :, :])


def build_covariance(profile: Profile, spec: LatticeSpec, noise: NoiseModel | None = None) -> CovarianceModel:
    """Assemble and diagonalise the box blocks of the covariance."""
    if noise is None:
        noise = build_noise(spec)
    eps = spec.epsilon
    sizes = noise.box_sizes()
    m_max = int(sizes.max())
    nb = noise.n_boxes
    blocks = np.zeros((nb, m_max, m_max))
    eigvals = np.zeros((nb, m_max))
    eigvecs = np.zeros((nb, m_max, m_max))
    position = np.full(spec.shape, -1, dtype=np.int64)
    worst = np.inf
    for b, labels in enumerate(noise.boxes):
        m = len(labels)
        x = labels * spec.h / eps
        blk = eps ** (-spec.d) * profile.bbar(x[:, None, :], x[None, :, :], eps)
        blk = np.asarray(blk, dtype=float)
        if not np.allclose(blk, blk.T, rtol=0, atol=1e-12 * max(1.0, np.abs(blk).max())):
            raise CovarianceError(f"profile {profile.name!r} is not symmetric on box {b}")
        blk = 0.5 * (blk + blk.T)
        w, v = np.linalg.eigh(blk)
        scale = max(1.0, float(np.abs(w).max()))
        worst = min(worst, float(w.min()) / scale)
        if w.min() < -EIG_CLAMP * scale:
            raise CovarianceError(
                f"profile {profile.name!r} gives eigenvalue {w.min():.3e} on box {b}")
        w = np.clip(w, 0.0, None)
        order = np.argsort(w)[::-1]
        blocks[b, :m, :m] = blk
        eigvals[b, :m] = w[order]
        eigvecs[b, :m, :m] = v[:, order]
        pos = tuple(np.moveaxis(labels % spec.N, -1, 0))
        position[pos] = np.arange(m)
        neg = tuple(np.moveaxis((-labels) % spec.N, -1, 0))
        position[neg] = np.arange(m)
    return CovarianceModel(spec, noise, profile, blocks, eigvals, eigvecs, position,
                           min_raw_eigval=float(worst))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

class FieldSampler:
    """Draws circular Gaussian fields ``a = sum_i q_i sqrt(iota_i) zeta_i``.

    Square-root factors are precomputed once; each call consumes one normal
    draw of length ``2 * n_boxes * m_max`` from the caller's generator.
    """

    def __init__(self, cov: CovarianceModel):
        self.cov = cov
        spec = cov.spec
        self.factor = cov.eigvecs * np.sqrt(cov.eigvals)[:, None, :]
        nb, m_max = cov.n_boxes, cov.m_max
        idx = np.zeros((nb, m_max, spec.d), dtype=np.int64)
        valid = np.zeros((nb, m_max), dtype=bool)
        for b, labels in enumerate(cov.noise.boxes):
            idx[b, : len(labels)] = labels % spec.N
            valid[b, : len(labels)] = True
        self._pos = tuple(np.moveaxis(idx[valid], -1, 0))
        self._neg = tuple(np.moveaxis((-idx[valid]) % spec.N, -1, 0))
        self._valid = valid

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One field on the full grid, conjugate-symmetric by construction."""
        cov = self.cov
        nb, m_max = cov.n_boxes, cov.m_max
        z = rng.standard_normal((2, nb, m_max))
        zeta = (z[0] + 1j * z[1]) * np.sqrt(0.5)
        amp = np.einsum("bij,bj->bi", self.factor, zeta)[self._valid]
        a = np.zeros(cov.spec.shape, dtype=complex)
        a[self._pos] = amp
        a[self._neg] = np.conj(amp)
        return a


def sample_initial(cov: CovarianceModel, rng: np.random.Generator) -> np.ndarray:
    """Draw one initial field (full grid, FFT order)."""
    return FieldSampler(cov).sample(rng)


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def permanent(M: np.ndarray) -> complex:
    """Permanent by Ryser's inclusion-exclusion formula with Gray-code updates."""
    M = np.asarray(M)
    n = M.shape[0]
    if n == 0:
        return 1.0
    total = 0.0
    row_sums = np.zeros(n, dtype=M.dtype)
    prev = 0
    for i in range(1, 2**n):
        gray = i ^ (i >> 1)
        changed = gray ^ prev
        col = changed.bit_length() - 1
        if gray & changed:
            row_sums = row_sums + M[:, col]
        else:
            row_sums = row_sums - M[:, col]
        prev = gray
        sign = -1 if bin(gray).count("1") % 2 else 1
        total += sign * np.prod(row_sums)
    return (-1) ** n * total


def gaussian_moment(cov: CovarianceModel, modes, conj) -> complex:
    """Exact moment ``<prod_i a_{k_i}^{(*)}>`` of the Gaussian ensemble.

    Parameters
    ----------
    modes : sequence of integer labels
    conj : sequence of bool
        ``True`` for a conjugated factor ``a*``.

    Returns
    -------
    complex
        Permanent of the matrix of pair correlators between the plain and
        the conjugated factors. Unbalanced products vanish and raise an
        :class:`UnbalancedMomentWarning`.
    """
    modes = np.asarray(modes, dtype=np.int64).reshape(-1, cov.spec.d)
    conj = np.asarray(conj, dtype=bool).reshape(-1)
    if len(modes) != len(conj):
        raise ValueError("modes and conj must have equal length")
    if len(modes) > 16:
        raise ValueError("at most 8 pairs supported")
    # fold onto the positive half: a_{-k} = a_k*
    half = np.sign(modes[:, 0])
    if np.any(half == 0):
        return 0.0
    folded = modes * half[:, None]
    is_star = conj ^ (half < 0)
    plain = folded[~is_star]
    star = folded[is_star]
    if len(plain) != len(star):
        warnings.warn("unbalanced moment is zero by circular symmetry", UnbalancedMomentWarning)
        return 0.0
    M = cov.pair_correlator(plain[:, None, :], star[None, :, :])
    return complex(permanent(M))


# ---------------------------------------------------------------------------
# boundedness of the initial data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssumptionCReport:
    n: int
    lhs: float
    rhs_scaled: float
    ratio: float
    proviso: float
    proviso_ok: bool
    daleth_min: float
    daleth_max: float

    @property
    def daleth_ok(self) -> bool:
        return self.daleth_min >= 0.0 and self.daleth_max <= 1.0


def assumption_c_bound(cov: CovarianceModel, c_P: float, n: int, n_mc: int = 20000,
                       rng: np.random.Generator | None = None) -> AssumptionCReport:
    """Check the moment bound on the initial data for ``n`` factors.

    ``rhs_scaled = n! c_P**-n prod_k 2 / (2 - c_P h^d eps^-d daleth(k))`` is the
    right side without the unspecified universal constant. The left side is
    ``int prod dk_j |<prod_j sqrt|wbar(k_j)| a_{k_j, s_j}>|^2`` with the
    balanced sign pattern (half plain, half conjugated); it is exact for
    ``n <= 2`` and a uniform Monte-Carlo estimate over mode tuples otherwise.
    """
    spec = cov.spec
    dl = cov.daleth()[spec.active_mask]
    proviso = c_P * spec.h ** spec.d * spec.epsilon ** (-spec.d)
    ok = proviso * max(float(dl.max()), 0.0) < 2.0 and proviso < 2.0
    with np.errstate(divide="ignore"):
        log_prod = float(np.sum(np.log(2.0) - np.log(2.0 - proviso * dl)))
    rhs = math.factorial(n) * c_P ** (-n) * math.exp(log_prod) if ok else math.inf

    if n == 0:
        lhs = 1.0
    elif n % 2:
        lhs = 0.0
    else:
        labels = spec.j_grid[spec.active_mask]
        wbar = np.abs(spec.omega_bar[spec.active_mask])
        vol = spec.h ** spec.d
        if n == 2:
            B = cov.pair_correlator(labels[:, None, :], labels[None, :, :])
            lhs = float(vol**2 * np.sum(np.outer(wbar, wbar) * B**2))
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            L = len(labels)
            acc = 0.0
            half = n // 2
            for _ in range(n_mc):
                pick = rng.integers(0, L, size=n)
                conj = [False] * half + [True] * half
                w = float(np.prod(wbar[pick]))
                if w == 0.0:
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", UnbalancedMomentWarning)
                    m = gaussian_moment(cov, labels[pick], conj)
                acc += w * abs(m) ** 2
            lhs = float(acc / n_mc * (L * vol) ** n)
    ratio = lhs / rhs if np.isfinite(rhs) and rhs > 0 else math.inf
    return AssumptionCReport(n, lhs, rhs, ratio, proviso, ok, float(dl.min()), float(dl.max()))


# ---------------------------------------------------------------------------
# exact initial Wigner function
# ---------------------------------------------------------------------------

def exact_initial_wigner(cov: CovarianceModel, mho_index, k_label) -> np.ndarray:
    """Fourier Wigner function at ``t = 0`` from the covariance.

    ``mho_index`` labels the Wigner shift ``mho = 2 h m / eps`` by its integer
    vector ``m`` (so that ``eps * mho / 2 = m h`` is an exact lattice vector);
    ``k_label`` is the integer label of ``k``. Both broadcast over leading
    axes. Points whose shifted modes leave the lattice raise ``ValueError``.
    """
    spec = cov.spec
    m = np.asarray(mho_index, dtype=np.int64)
    j = np.asarray(k_label, dtype=np.int64)
    lo = j - m
    hi = j + m
    if np.any(np.abs(lo) > spec.D) or np.any(np.abs(hi) > spec.D):
        raise ValueError("shifted modes leave the lattice")
    return (spec.epsilon / 2.0) ** spec.d * cov.pair_correlator(lo, hi)


def mho_labels(J: int, d: int) -> np.ndarray:
    """All integer Wigner shifts with ``|m^i| <= J``, shape ``((2J+1)^d, d)``."""
    r = range(-J, J + 1)
    return np.array(list(product(r, repeat=d)), dtype=np.int64)
