"""
Resonance-broadened inhomogeneous 3-wave kinetic equation.

    d f / d tau + (1/2 pi) grad omega(k) . grad_Omega f = C_ell(f)

``f(Omega, k)`` lives on a periodic Omega box of extent ``L`` (``n_omega``
points per axis) times a uniform k-grid on the torus with ``n_k`` (odd)
points per axis, stored in FFT order like the lattice. Arrays have shape
``(n_omega**d, n_k**d)``. Collision is local in Omega, transport is local in
k, and the two are combined by Strang splitting.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .lattice import TWO_PI, dispersion, dispersion_bar, grad_dispersion


class KineticError(RuntimeError):
    """Raised for invalid kinetic grids or non-finite states."""


class EmptyTableWarning(UserWarning):
    """The broadening width is below the frequency resolution of the grid."""


def broadened_delta(x, ell: float) -> np.ndarray:
    """Box kernel ``1/(2 ell)`` on ``|x| <= 2 pi ell``; total mass ``2 pi``."""
    if not ell > 0:
        raise ValueError("broadening width must be positive")
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= TWO_PI * ell, 0.5 / ell, 0.0)


@dataclass(frozen=True)
class KineticGrid:
    """Phase-space grid.

    Parameters
    ----------
    d : int
    n_k : int
        Points per k axis (odd); ``k = j / n_k`` with ``|j| <= (n_k - 1)/2``.
    n_omega : int
        Points per Omega axis; 1 gives the homogeneous equation.
    L : float
        Extent of the periodic Omega box. The dual grid has spacing ``1/L``.
    """

    d: int
    n_k: int
    n_omega: int = 1
    L: float = 1.0

    def __post_init__(self):
        if self.n_k % 2 != 1 or self.n_k < 3:
            raise KineticError("n_k must be odd and at least 3")
        if self.n_omega < 1 or not self.L > 0:
            raise KineticError("invalid Omega grid")

    @property
    def homogeneous(self) -> bool:
        return self.n_omega == 1

    @property
    def nk_total(self) -> int:
        return self.n_k ** self.d

    @property
    def nomega_total(self) -> int:
        return self.n_omega ** self.d

    @property
    def dk(self) -> float:
        return (1.0 / self.n_k) ** self.d

    @property
    def dOmega(self) -> float:
        return (self.L / self.n_omega) ** self.d

    @cached_property
    def k_labels(self) -> np.ndarray:
        j1 = np.fft.fftfreq(self.n_k, d=1.0 / self.n_k).round().astype(np.int64)
        g = np.stack(np.meshgrid(*([j1] * self.d), indexing="ij"), axis=-1)
        return g.reshape(-1, self.d)

    @cached_property
    def k(self) -> np.ndarray:
        return self.k_labels / self.n_k

    @cached_property
    def active(self) -> np.ndarray:
        return self.k_labels[:, 0] != 0

    @cached_property
    def omega(self) -> np.ndarray:
        return dispersion(self.k)

    @cached_property
    def grad_omega(self) -> np.ndarray:
        return grad_dispersion(self.k)

    @cached_property
    def omega_points(self) -> np.ndarray:
        i1 = np.fft.fftfreq(self.n_omega, d=1.0 / self.n_omega)
        g = np.stack(np.meshgrid(*([i1] * self.d), indexing="ij"), axis=-1)
        return g.reshape(-1, self.d) * (self.L / self.n_omega)

    @cached_property
    def mho_labels(self) -> np.ndarray:
        """Integer labels ``p`` of the dual grid ``mho = p / L`` (FFT order)."""
        i1 = np.fft.fftfreq(self.n_omega, d=1.0 / self.n_omega).round().astype(np.int64)
        g = np.stack(np.meshgrid(*([i1] * self.d), indexing="ij"), axis=-1)
        return g.reshape(-1, self.d)

    def k_index(self, labels) -> np.ndarray:
        """Flat k index of integer labels (wrapped mod ``n_k``)."""
        lab = np.asarray(labels, dtype=np.int64) % self.n_k
        idx = np.zeros(lab.shape[:-1], dtype=np.int64)
        for i in range(self.d):
            idx = idx * self.n_k + lab[..., i]
        return idx

    def negate_k(self) -> np.ndarray:
        """Permutation taking flat index of ``k`` to that of ``-k``."""
        return self.k_index(-self.k_labels)


@dataclass
class ResonanceTable:
    """Sparse collision weights, sorted by ``i1``.

    Each entry encodes the triad ``k1 = k2 + k3 (mod 1)`` with weight
    ``(pi / 2**(d-2)) |M(k1,k2,k3)|^2 delta_ell(w3 + w2 - w1) * dk``.
    """

    grid: KineticGrid
    ell: float
    i1: np.ndarray = field(repr=False)
    i2: np.ndarray = field(repr=False)
    i3: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    s13: np.ndarray = field(repr=False)
    s12: np.ndarray = field(repr=False)
    half: bool = False

    @property
    def nnz(self) -> int:
        return len(self.w)

    @cached_property
    def _segments(self):
        if self.nnz == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        starts = np.flatnonzero(np.r_[True, self.i1[1:] != self.i1[:-1]])
        return self.i1[starts], starts


def build_resonance_table(grid: KineticGrid, ell: float, half: bool = False) -> ResonanceTable:
    """Enumerate admitted triads on the k-grid.

    Parameters
    ----------
    half : bool
        Only keep rows with ``k1^1 > 0``. Valid for k-even data, where the
        other half follows by parity.
    """
    if not ell > 0:
        raise ValueError("broadening width must be positive")
    d = grid.d
    labels = grid.k_labels
    k = grid.k
    w = grid.omega
    wb2 = np.abs(dispersion_bar(k))
    sgn = np.sign(labels[:, 0]).astype(np.int8)
    pref = math.pi / 2 ** (d - 2) * grid.dk
    half_n = (grid.n_k - 1) // 2
    rows = np.flatnonzero(grid.active & (labels[:, 0] > 0 if half else grid.active))
    parts = {key: [] for key in ("i1", "i2", "i3", "w", "s13", "s12")}
    width = TWO_PI * ell
    cand_pos = np.flatnonzero(grid.active)
    # rows with k^1 < 0 visit partners in the mirrored order of their positive
    # twin, so parity of the collision output holds bit for bit
    cand_neg = grid.negate_k()[cand_pos]
    for r in rows:
        cand = cand_pos if labels[r, 0] > 0 else cand_neg
        lab3 = labels[r] - labels[cand]
        lab3 = (lab3 + half_n) % grid.n_k - half_n
        i3 = grid.k_index(lab3)
        res = w[i3] + w[cand] - w[r]
        keep = (np.abs(res) <= width) & (lab3[:, 0] != 0)
        if not np.any(keep):
            continue
        c2 = cand[keep]
        c3 = i3[keep]
        # |M|^2 = 4 |wbar1 wbar2 wbar3|; delta_ell = 1/(2 ell) on its support
        weight = pref * 4.0 * wb2[r] * wb2[c2] * wb2[c3] * (0.5 / ell)
        nz = weight > 0
        if not np.any(nz):
            continue
        parts["i1"].append(np.full(int(nz.sum()), r, dtype=np.int64))
        parts["i2"].append(c2[nz])
        parts["i3"].append(c3[nz])
        parts["w"].append(weight[nz])
        parts["s13"].append((sgn[r] * sgn[c3[nz]]).astype(np.int8))
        parts["s12"].append((sgn[r] * sgn[c2[nz]]).astype(np.int8))
    if not parts["w"]:
        warnings.warn("resonance table is empty; ell is below the grid's frequency resolution",
                      EmptyTableWarning)
        z = np.zeros(0, dtype=np.int64)
        return ResonanceTable(grid, ell, z, z, z, np.zeros(0), z.astype(np.int8), z.astype(np.int8), half)
    cat = {key: np.concatenate(v) for key, v in parts.items()}
    return ResonanceTable(grid, ell, cat["i1"], cat["i2"], cat["i3"], cat["w"], cat["s13"], cat["s12"], half)


def collision(f: np.ndarray, table: ResonanceTable, chunk: int = 8) -> np.ndarray:
    """Broadened collision operator applied pointwise in Omega.

    Parameters
    ----------
    f : numpy.ndarray, shape (n_k**d,) or (n_points, n_k**d)
    """
    f = np.asarray(f, dtype=float)
    single = f.ndim == 1
    F = f[None] if single else f
    out = np.zeros_like(F)
    if table.nnz == 0:
        return out[0] if single else out
    rows, starts = table._segments
    i1, i2, i3 = table.i1, table.i2, table.i3
    s13 = table.s13.astype(float)
    s12 = table.s12.astype(float)
    for lo in range(0, F.shape[0], chunk):
        blk = F[lo:lo + chunk]
        f1 = blk[:, i1]
        f2 = blk[:, i2]
        f3 = blk[:, i3]
        term = table.w * (f2 * f3 - f1 * (s13 * f2 + s12 * f3))
        out[lo:lo + chunk, rows] = np.add.reduceat(term, starts, axis=1)
    if table.half:
        neg = table.grid.negate_k()
        minus = table.grid.k_labels[:, 0] < 0
        out[:, minus] = out[:, neg[minus]]
    return out[0] if single else out


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

def _bspline3(x):
    ax = np.abs(x)
    return np.where(ax < 1.0, 2.0 / 3.0 - ax**2 + 0.5 * ax**3,
                    np.where(ax < 2.0, (2.0 - ax) ** 3 / 6.0, 0.0))


def _shift_symbol_1d(delta: np.ndarray, n: int, method: str) -> np.ndarray:
    """Fourier symbol of ``g_i = f(x_i - delta)`` on a periodic grid of ``n`` points.

    ``delta`` is in grid units, shape (nk,); result has shape (nk, n).
    """
    p = np.fft.fftfreq(n, d=1.0 / n)
    xi = TWO_PI * p / n
    if method == "spectral":
        return np.exp(-1j * np.outer(delta, xi))
    base = np.floor(delta)
    sym = np.zeros((len(delta), n), dtype=complex)
    for off in (-1, 0, 1, 2):
        m = base + off
        sym += _bspline3(m - delta)[:, None] * np.exp(-1j * np.outer(m, xi))
    prefilter = (4.0 + 2.0 * np.cos(xi)) / 6.0
    return sym / prefilter


def transport_step(f: np.ndarray, dt: float, grid: KineticGrid, method: str = "cubic") -> np.ndarray:
    """Advect ``f(Omega, k) -> f(Omega - dt grad omega(k) / 2 pi, k)``.

    ``method`` is ``"cubic"`` (periodic cubic-spline interpolation) or
    ``"spectral"`` (exact shift of the trigonometric interpolant). Both act
    as circulant operators with unit mean, so the Omega-sum of ``f`` is kept.
    The spectral shifts compose exactly only for odd ``n_omega``; with an
    even count the Nyquist mode is damped.
    """
    if grid.homogeneous or dt == 0.0:
        return f
    if method not in ("cubic", "spectral"):
        raise ValueError(f"unknown interpolation {method!r}")
    d, n = grid.d, grid.n_omega
    shift = dt * grid.grad_omega / TWO_PI
    if np.any(np.abs(shift) > grid.L):
        warnings.warn("transport shift exceeds the Omega box", RuntimeWarning)
    delta = shift / (grid.L / n)
    F = f.reshape((n,) * d + (grid.nk_total,))
    Fh = np.fft.fftn(F, axes=tuple(range(d)))
    for ax in range(d):
        sym = _shift_symbol_1d(delta[:, ax], n, method).T          # (n, nk)
        shape = [1] * d + [grid.nk_total]
        shape[ax] = n
        Fh = Fh * sym.reshape(shape)
    out = np.fft.ifftn(Fh, axes=tuple(range(d))).real
    return out.reshape(f.shape)


# ---------------------------------------------------------------------------
# state and evolution
# ---------------------------------------------------------------------------

@dataclass
class KineticState:
    grid: KineticGrid
    f: np.ndarray
    tau: float = 0.0
    ell: float = 0.02

    def copy(self) -> "KineticState":
        return replace(self, f=self.f.copy())


def evolve(state: KineticState, table: ResonanceTable, dt: float, steps: int,
           collision_scale: float = 1.0, transport: bool = True, collide: bool = True,
           method: str = "cubic", record_every: int = 0):
    """Strang splitting: half transport, RK2 collision, half transport.

    Returns the final state and, if ``record_every > 0``, a list of recorded
    states (including the initial one).
    """
    grid = state.grid
    f = state.f.copy()
    tau = state.tau
    hist = [state.copy()] if record_every else []
    move = transport and not grid.homogeneous
    for s in range(steps):
        if move:
            f = transport_step(f, 0.5 * dt, grid, method)
        if collide and collision_scale != 0.0:
            c1 = collision(f, table)
            mid = f + 0.5 * dt * collision_scale * c1
            f = f + dt * collision_scale * collision(mid, table)
        if move:
            f = transport_step(f, 0.5 * dt, grid, method)
        tau += dt
        if not np.all(np.isfinite(f)):
            raise KineticError(f"non-finite kinetic state at tau={tau:.6g}")
        if record_every and (s + 1) % record_every == 0:
            hist.append(KineticState(grid, f.copy(), tau, state.ell))
    final = KineticState(grid, f, tau, state.ell)
    return (final, hist) if record_every else final


def fourier_in_omega(state_or_f, grid: KineticGrid | None = None) -> np.ndarray:
    """``f^o(mho, k) = int dOmega f exp(-2 pi i Omega . mho)`` on the dual grid.

    Rows follow ``grid.mho_labels`` (FFT order).
    """
    if isinstance(state_or_f, KineticState):
        f, grid = state_or_f.f, state_or_f.grid
    else:
        f = np.asarray(state_or_f)
    d, n = grid.d, grid.n_omega
    F = f.reshape((n,) * d + (grid.nk_total,))
    out = np.fft.fftn(F, axes=tuple(range(d))) * grid.dOmega
    return out.reshape(grid.nomega_total, grid.nk_total)


def inverse_fourier_in_omega(fo: np.ndarray, grid: KineticGrid) -> np.ndarray:
    d, n = grid.d, grid.n_omega
    F = np.asarray(fo).reshape((n,) * d + (grid.nk_total,))
    out = np.fft.ifftn(F, axes=tuple(range(d))) / grid.dOmega
    return out.reshape(grid.nomega_total, grid.nk_total)


@dataclass
class ConservationReport:
    tau: np.ndarray
    mass: np.ndarray
    momentum: np.ndarray
    energy: np.ndarray

    def drifts(self) -> dict:
        def rel(x):
            x = np.asarray(x)
            scale = np.max(np.abs(x[0])) if np.any(x[0]) else 1.0
            return float(np.max(np.abs(x - x[0])) / scale)
        return {"mass": rel(self.mass), "momentum": rel(self.momentum), "energy": rel(self.energy)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            d = self.momentum.shape[1]
            wr.writerow(["tau", "mass"] + [f"momentum{i + 1}" for i in range(d)] + ["energy"])
            for t, m, p, e in zip(self.tau, self.mass, self.momentum, self.energy):
                wr.writerow([repr(float(t)), repr(float(m)), *map(lambda v: repr(float(v)), p), repr(float(e))])


def moments(f: np.ndarray, grid: KineticGrid) -> tuple:
    """Mass, half-signed momentum and half-signed energy of ``f``.

    Data coming from a real field are even in ``k``, which makes the plain
    first moments in ``k`` and ``omega`` vanish identically. The informative
    quantities weight each mode by ``sign(k^1)``, i.e. they integrate over the
    positive half and count the mirror half with the opposite sign:
    ``P = int sign(k^1) k f`` and ``E = int sign(k^1) omega f = int |omega| f``.
    """
    f = np.asarray(f)
    F = f if f.ndim == 2 else f[None]
    vol = grid.dk * grid.dOmega
    marg = F.sum(axis=0) * vol
    s = np.sign(grid.k_labels[:, 0]).astype(float)
    mass = float(marg.sum())
    mom = (s * marg) @ grid.k
    en = float(np.sum(s * grid.omega * marg))
    return mass, mom, en


def conservation_report(history) -> ConservationReport:
    """Track mass, momentum and energy along a list of kinetic states."""
    taus, M, P, E = [], [], [], []
    for st in history:
        m, p, e = moments(st.f, st.grid)
        taus.append(st.tau)
        M.append(m)
        P.append(p)
        E.append(e)
    return ConservationReport(np.array(taus), np.array(M), np.array(P), np.array(E))
