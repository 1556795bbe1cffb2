"""
Singular-manifold geometry, cutoff functions and dispersive oscillatory integrals.

The oscillatory functionals use the rescaled variable ``xi = 2 pi k`` on
``[-pi, pi]^d`` and the dispersion

    omega(xi) = sin(xi_1) * (sin(xi_1)**2 + ... + sin(xi_d)**2).

Every functional factorises into an outer integral over ``xi_1`` and ``d - 1``
identical inner integrals. Inner integrals are evaluated for all Fourier
indices at once by a periodic trapezoid rule (a discrete transform), which is
spectrally accurate for smooth periodic integrands. When only ``t_0`` is
nonzero the inner integrals also have a closed form in Bessel functions,

    int exp(i m x + i A sin(x)**2) dx = 2 pi exp(i A / 2) i**n J_n(-A / 2),  m = 2 n,

and vanish for odd ``m``. Both routes are kept so one can check the other.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .lattice import TWO_PI, torus_distance

SINGULAR_POINTS = np.array([0.0, 0.25, -0.25, 0.5, -0.5])


class ParameterError(ValueError):
    """Raised when cutoff parameters violate their constraints in strict mode."""


class ResolutionError(RuntimeError):
    """Raised when a quadrature does not converge under grid doubling."""


# ---------------------------------------------------------------------------
# singular manifold and cutoffs


def japanese_bracket(x) -> np.ndarray:
    """``sqrt(1 + x**2)``."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + x * x)


def singular_distance(k) -> np.ndarray:
    """Distance from ``k`` (shape ``(..., d)``) to the singular manifold.

    The manifold is the union of slabs where one coordinate lies in
    ``{0, +-1/4, +-1/2}``, so the distance is the smallest per-coordinate
    torus distance to that set.
    """
    k = np.asarray(k, dtype=float)
    per_coord = np.min(torus_distance(k[..., None], SINGULAR_POINTS), axis=-1)
    return np.min(per_coord, axis=-1)


def smoothstep_ramp(u, threshold: float) -> np.ndarray:
    """0 below ``threshold/2``, 1 above ``threshold``, ``3s^2 - 2s^3`` between."""
    s = np.clip((np.asarray(u, dtype=float) - 0.5 * threshold) / (0.5 * threshold), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _cutoff(sigma1, k1, sigma2, k2, threshold: float, part: int) -> np.ndarray:
    if part not in (0, 1):
        raise ValueError("part must be 0 or 1")
    k1 = np.asarray(k1, dtype=float)
    k2 = np.asarray(k2, dtype=float)
    a = sigma1 * k1
    b = sigma2 * k2
    psi1 = (smoothstep_ramp(singular_distance(k1), threshold)
            * smoothstep_ramp(singular_distance(k2), threshold)
            * smoothstep_ramp(singular_distance(a + b), threshold)
            * smoothstep_ramp(singular_distance(a - b), threshold))
    return psi1 if part == 1 else 1.0 - psi1


def threshold_log(eth: float, lam: float) -> float:
    """Log-scale threshold ``<ln lam>^(-eth/3)``."""
    return float(japanese_bracket(math.log(lam)) ** (-eth / 3.0))


def threshold_power(eth_prime: float, lam: float) -> float:
    """Power-law threshold ``lam^(eth'/3)``."""
    return float(lam ** (eth_prime / 3.0))


def cutoff_a(sigma1, k1, sigma2, k2, eth: float, lam: float, part: int = 1) -> np.ndarray:
    """Cutoff isolating the singular manifold at the log-scale threshold.

    Returns ``Psi_1`` (``part=1``) or ``Psi_0 = 1 - Psi_1`` (``part=0``).
    ``Psi_1`` is the product of smoothstep ramps in the distances of ``k1``,
    ``k2`` and ``sigma1 k1 +- sigma2 k2`` to the singular manifold.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    return _cutoff(sigma1, k1, sigma2, k2, threshold_log(eth, lam), part)


def cutoff_b(eth_prime: float, sigma1, k1, sigma2, k2, lam: float, part: int = 1) -> np.ndarray:
    """As :func:`cutoff_a` with the power-law threshold ``lam^(eth'/3)``."""
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    return _cutoff(sigma1, k1, sigma2, k2, threshold_power(eth_prime, lam), part)


def stopping_rule(lam: float, n0: float = 1.0) -> int:
    """Number of expansion steps ``max(1, floor(n0 |ln lam| / ln<ln lam>))``."""
    ln = math.log(lam)
    return max(1, int(math.floor(n0 * abs(ln) / math.log(float(japanese_bracket(ln))))))


@dataclass(frozen=True)
class CutoffParams:
    """Cutoff exponents and derived expansion parameters.

    The constraints ``eth1 + eth2 < 1/4``, ``eth1 > 3/d`` and
    ``eth2 > theta_r/d`` can only hold together for ``d > 4 (3 + theta_r)``.
    With ``strict=False`` violations are recorded in :meth:`violations`;
    with ``strict=True`` construction fails.
    """

    lam: float
    d: int
    eth: float = 4.0
    eth1: float = 0.2
    eth2: float = 0.04
    theta_r: float = 0.2
    n0: float = 1.0
    wp: float = 1.0
    strict: bool = False

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ParameterError("lam must lie in (0, 1)")
        if self.eth <= 0 or self.eth1 <= 0 or self.eth2 <= 0:
            raise ParameterError("cutoff exponents must be positive")
        if self.strict and self.violations():
            raise ParameterError("; ".join(self.violations()))

    def violations(self) -> list:
        out = []
        if not self.eth1 + self.eth2 < 0.25:
            out.append(f"eth1 + eth2 = {self.eth1 + self.eth2:g} is not below 1/4")
        if not self.eth1 > 3.0 / self.d:
            out.append(f"eth1 = {self.eth1:g} is not above 3/d = {3.0 / self.d:g}")
        if not self.eth2 > self.theta_r / self.d:
            out.append(f"eth2 = {self.eth2:g} is not above theta_r/d = {self.theta_r / self.d:g}")
        return out

    @staticmethod
    def feasible(d: int, theta_r: float = 0.2) -> bool:
        """Whether any exponents satisfy all three constraints in dimension ``d``."""
        return (3.0 + theta_r) / d < 0.25

    @property
    def n_big(self) -> int:
        return stopping_rule(self.lam, self.n0)

    @property
    def threshold_a(self) -> float:
        return threshold_log(self.eth, self.lam)

    @property
    def threshold_b1(self) -> float:
        return threshold_power(self.eth1, self.lam)

    @property
    def threshold_b2(self) -> float:
        return threshold_power(self.eth2, self.lam)

    @property
    def varsigma_prime(self) -> float:
        return self.lam ** 2 * self.n_big ** self.wp

    def varsigma(self) -> np.ndarray:
        """Soft time-integration vector: 0 below ``floor(N/4)``, ``varsigma'`` after."""
        n = np.arange(self.n_big + 1)
        return np.where(n < self.n_big // 4, 0.0, self.varsigma_prime)


# ---------------------------------------------------------------------------
# oscillatory integrals


def _pow2_at_least(n: float) -> int:
    return 1 << max(4, int(math.ceil(math.log2(max(n, 16)))))


def _nodes(M: int) -> np.ndarray:
    return -np.pi + TWO_PI * np.arange(M) / M


def _signed_index(m, M: int) -> np.ndarray:
    m = np.asarray(m, dtype=np.int64)
    if np.any(np.abs(m) >= M // 2):
        raise ResolutionError(f"Fourier index beyond the grid Nyquist index {M // 2}")
    return m % M


def _periodic_transform(g: np.ndarray, M: int, axis: int = -1) -> np.ndarray:
    """``int exp(i m x) g(x) dx`` over ``[-pi, pi)`` for every ``m`` in FFT order."""
    out = TWO_PI * np.fft.ifft(g, axis=axis)
    sign = np.where(np.fft.fftfreq(M, 1.0 / M).astype(np.int64) % 2 == 0, 1.0, -1.0)
    shape = [1] * out.ndim
    shape[axis] = M
    return out * sign.reshape(shape)


def _phase_bandwidth(t, d: int) -> float:
    return float(np.sum(np.abs(t))) * (d + 2)


def inner_integrals(xi1: np.ndarray, t, V, W, j: int, M: int) -> np.ndarray:
    """Inner integral over ``xi_j`` for every node ``xi1`` and every index.

    Returns an array of shape ``(len(xi1), M)`` with Fourier indices in FFT
    order.
    """
    t0, t1, t2 = t
    x = _nodes(M)[None, :]
    s0 = np.sin(xi1)[:, None]
    s1 = np.sin(xi1 + V[0])[:, None]
    s2 = np.sin(xi1 + W[0])[:, None]
    phase = (t0 * s0 * np.sin(x) ** 2 + t1 * s1 * np.sin(x + V[j]) ** 2
             + t2 * s2 * np.sin(x + W[j]) ** 2)
    return _periodic_transform(np.exp(1j * phase), M, axis=1)


def bessel_inner(xi1, t0: float, m) -> np.ndarray:
    """Closed-form inner integral ``int exp(i m x + i t0 sin(xi1) sin(x)^2) dx``.

    Broadcasts ``xi1`` against ``m``; odd ``m`` give zero.
    """
    xi1 = np.asarray(xi1, dtype=float)
    m = np.asarray(m, dtype=np.int64)
    A = t0 * np.sin(xi1)
    n = m // 2
    val = TWO_PI * np.exp(0.5j * A) * (1j ** (n % 4)) * special.jv(n, -0.5 * A)
    return np.where(m % 2 == 0, val, 0.0)


def _outer_weight(xi1, t, V, W, kernel=None) -> np.ndarray:
    t0, t1, t2 = t
    ph = t0 * np.sin(xi1) ** 3 + t1 * np.sin(xi1 + V[0]) ** 3 + t2 * np.sin(xi1 + W[0]) ** 3
    h = np.exp(1j * ph)
    if kernel is not None:
        h = h * kernel(xi1)
    return h


def _as_vectors(d, V, W):
    V = np.zeros(d) if V is None else np.asarray(V, dtype=float)
    W = np.zeros(d) if W is None else np.asarray(W, dtype=float)
    if V.shape != (d,) or W.shape != (d,):
        raise ValueError("V and W must be d-vectors")
    return V, W


@dataclass
class FunctionalTable:
    """Values of an oscillatory functional on a box of Fourier indices.

    Attributes
    ----------
    values : numpy.ndarray
        Shape ``(2R+1,)*d``; entry ``values[m + R]`` is the functional at ``m``.
    radius : int
    resolution : tuple of int
        Outer and inner grid sizes.
    doubling_change : float
        Largest change of any entry when both grids are doubled (``nan`` if
        not checked).
    """

    values: np.ndarray
    radius: int
    resolution: tuple
    doubling_change: float = float("nan")

    def at(self, m) -> complex:
        idx = tuple(int(x) + self.radius for x in m)
        return complex(self.values[idx])


def _table(d, t, V, W, R, M1, M, kernel=None, max_entries=5e7) -> np.ndarray:
    if M1 * (2 * R + 1) ** (d - 1) > max_entries:
        raise MemoryError("functional table too large; lower the radius or the dimension")
    xi1 = _nodes(M1)
    h = _outer_weight(xi1, t, V, W, kernel)
    picks = np.arange(-R, R + 1)
    inner = [inner_integrals(xi1, t, V, W, j, M)[:, _signed_index(picks, M)] for j in range(1, d)]
    G = h.reshape((M1,) + (1,) * (d - 1))
    for j, I in enumerate(inner):
        shape = [M1] + [1] * (d - 1)
        shape[j + 1] = 2 * R + 1
        G = G * I.reshape(shape)
    F = _periodic_transform(G, M1, axis=0)
    F = F[_signed_index(picks, M1)]
    return F


def default_resolution(t, d: int, radius: int) -> tuple:
    """Outer and inner grid sizes resolving phase bandwidth plus index radius."""
    bw = _phase_bandwidth(t, d)
    M1 = _pow2_at_least(2.0 * (bw + radius) + 64)
    M = _pow2_at_least(2.0 * (float(np.sum(np.abs(t))) + radius) + 64)
    return M1, M


def oscillatory_table(t0: float, t1: float = 0.0, t2: float = 0.0, V=None, W=None, d: int = 2,
                      radius: int | None = None, resolution: tuple | None = None,
                      check: bool = True, tol: float = 1e-8, kernel=None) -> FunctionalTable:
    """Tabulate the dispersive functional for all ``|m_i| <= radius``.

    ``kernel`` is an optional weight in ``xi_1``. With ``check`` the grids are
    doubled and the largest change, relative to ``(2 pi)^d``, must stay below
    ``tol``; otherwise :class:`ResolutionError` is raised.
    """
    t = (float(t0), float(t1), float(t2))
    V, W = _as_vectors(d, V, W)
    if radius is None:
        radius = int(math.ceil(_phase_bandwidth(t, d))) + 24
    M1, M = resolution if resolution is not None else default_resolution(t, d, radius)
    F = _table(d, t, V, W, radius, M1, M, kernel)
    change = float("nan")
    if check:
        F2 = _table(d, t, V, W, radius, 2 * M1, 2 * M, kernel)
        change = float(np.max(np.abs(F2 - F))) / TWO_PI ** d
        if not change < tol:
            raise ResolutionError(f"grid doubling changed the functional by {change:.3e}")
    return FunctionalTable(values=F, radius=radius, resolution=(M1, M), doubling_change=change)


def oscillatory_F(m, t0: float, t1: float = 0.0, t2: float = 0.0, V=None, W=None,
                  resolution: tuple | None = None, check: bool = True) -> complex:
    """Single value of the dispersive functional at the integer index ``m``."""
    m = np.asarray(m, dtype=np.int64)
    d = m.size
    R = int(np.max(np.abs(m))) if d else 0
    tab = oscillatory_table(t0, t1, t2, V, W, d=d, radius=R, resolution=resolution, check=check)
    return tab.at(m)


def brute_force_F(m, t0: float, t1: float = 0.0, t2: float = 0.0, V=None, W=None,
                  n: int = 256) -> complex:
    """Direct tensor-product trapezoid sum, ``O(n^d)``; a reference for small cases."""
    m = np.asarray(m, dtype=float)
    d = m.size
    V, W = _as_vectors(d, V, W)
    x = _nodes(n)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    xi = np.stack(grids, axis=-1)

    def omega(z):
        s = np.sin(z)
        return s[..., 0] * np.sum(s * s, axis=-1)

    ph = xi @ m + t0 * omega(xi) + t1 * omega(xi + V) + t2 * omega(xi + W)
    return complex(np.sum(np.exp(1j * ph)) * (TWO_PI / n) ** d)


def xi1_cutoff(params: CutoffParams, power: float | None = None):
    """Cutoff in ``xi_1`` alone: ramp of the distance of ``xi_1 / 2 pi`` to the singular set."""
    power = params.n_big if power is None else power
    theta = params.threshold_a

    def weight(xi1):
        k = np.asarray(xi1, dtype=float) / TWO_PI
        dist = np.min(torus_distance(k[..., None], SINGULAR_POINTS), axis=-1)
        return smoothstep_ramp(dist, theta) ** power

    return weight


def sin_power_kernel(n: float):
    def weight(xi1):
        return np.abs(np.sin(xi1)) ** n

    return weight


def _bessel_functional(m, t0: float, weight) -> complex:
    m = np.asarray(m, dtype=np.int64)
    d = m.size
    inner_bw = abs(t0) * (d + 1)
    # cutoff weights are only piecewise smooth, so keep a generous floor
    M1 = _pow2_at_least(2.0 * (inner_bw + abs(int(m[0]))) + 8192)
    xi1 = _nodes(M1)
    g = np.exp(1j * t0 * np.sin(xi1) ** 3) * weight(xi1)
    for mj in m[1:]:
        g = g * bessel_inner(xi1, t0, int(mj))
    F = _periodic_transform(g, M1)
    return complex(F[_signed_index(m[0], M1)])


def oscillatory_F_cut(m, t0: float, params: CutoffParams, N: float | None = None,
                      kernel: str = "one") -> complex:
    """Dispersive functional with the ``xi_1`` cutoff raised to ``N`` and kernel 1 or ``|sin xi_1|``."""
    cut = xi1_cutoff(params, N)
    if kernel == "one":
        weight = cut
    elif kernel == "abs_sin":
        weight = lambda x: cut(x) * np.abs(np.sin(x))  # noqa: E731
    else:
        raise ValueError("kernel must be 'one' or 'abs_sin'")
    return _bessel_functional(m, t0, weight)


def kernel_admissible(n: int, d: int) -> bool:
    """Whether the decay exponent of the ``|sin xi_1|^n`` functional applies (``2n + 5 < d``)."""
    return 2 * n + 5 < d


def oscillatory_F_ker(m, t0: float, n: int) -> complex:
    """Dispersive functional with kernel ``|sin xi_1|^n`` and ``t_1 = t_2 = 0``."""
    return _bessel_functional(m, t0, sin_power_kernel(n))


# ---------------------------------------------------------------------------
# norms


def lp_norm(values, p: float) -> float:
    """``(sum |v|^p)^(1/p)`` over all entries."""
    a = np.abs(np.asarray(values))
    if np.isinf(p):
        return float(np.max(a)) if a.size else 0.0
    return float(np.sum(a ** p) ** (1.0 / p))


def truncated_lp(table: FunctionalTable, p: float, radius: int | None = None) -> float:
    """l^p norm of a table restricted to ``|m_i| <= radius``."""
    R = table.radius if radius is None else radius
    if R > table.radius:
        raise ValueError("radius exceeds the table")
    lo, hi = table.radius - R, table.radius + R + 1
    sub = table.values[(slice(lo, hi),) * table.values.ndim]
    return lp_norm(sub, p)


def l2_tail(table: FunctionalTable, total_mass: float) -> float:
    """Missing l^2 mass ``total_mass - sum |F|^2`` of the truncated table."""
    return float(total_mass - np.sum(np.abs(table.values) ** 2))


def orthonormal_coefficients(values, d: int) -> np.ndarray:
    """Coefficients in the orthonormal Fourier basis ``exp(i m xi) / (2 pi)^(d/2)``."""
    return np.asarray(values) / TWO_PI ** (d / 2.0)


def _bessel_index_max(t0: float, d: int) -> int:
    z = 0.5 * abs(t0)
    return int(math.ceil(z + 12.0 * z ** (1.0 / 3.0) + 25))


def _bessel_tables(xi1: np.ndarray, t0: float, n_max: int) -> np.ndarray:
    """``I(xi1, 2n)`` for ``n = 0..n_max``, shape ``(n_max + 1, len(xi1))``."""
    n = np.arange(n_max + 1)[:, None]
    return bessel_inner(xi1[None, :], t0, 2 * n)


@dataclass
class NormResult:
    t0: float
    p: float
    norm: float
    resolution: int
    n_max: int


def separable_lp_norm(t0: float, d: int, weight, p: float = 4.0, resolution: int | None = None,
                      n_max: int | None = None) -> NormResult:
    """l^p norm over ``Z^d`` of a functional with an ``xi_1`` weight and ``t_1 = t_2 = 0``.

    Uses the Bessel form of the inner integrals: only even inner indices
    contribute, ``I(x, -m) = I(x, m)`` and the inner coordinates are
    interchangeable, so the sum runs over sorted tuples of nonnegative inner
    indices with multiplicities. Intended for ``d <= 3``.
    """
    if d < 1 or d > 3:
        raise ValueError("separable_lp_norm handles d <= 3; use quartic_l4_norm for larger d")
    if n_max is None:
        n_max = _bessel_index_max(t0, d)
    if resolution is None:
        resolution = _pow2_at_least(2.0 * abs(t0) * (d + 0.5) + 2048)
    M1 = resolution
    xi1 = _nodes(M1)
    h = np.exp(1j * t0 * np.sin(xi1) ** 3) * weight(xi1)
    mult = np.where(np.arange(n_max + 1) == 0, 1.0, 2.0)
    total = 0.0
    if d == 1:
        total = np.sum(np.abs(_periodic_transform(h, M1)) ** p)
    elif d == 2:
        I = _bessel_tables(xi1, t0, n_max)
        F = _periodic_transform(h[None, :] * I, M1, axis=1)
        total = float(np.sum(mult * np.sum(np.abs(F) ** p, axis=1)))
    else:
        I = _bessel_tables(xi1, t0, n_max)
        hI = h[None, :] * I
        for a in range(n_max + 1):
            F = _periodic_transform(hI[a][None, :] * I[a:], M1, axis=1)
            s = np.sum(np.abs(F) ** p, axis=1)
            w = mult[a] * mult[a:] * np.where(np.arange(a, n_max + 1) == a, 1.0, 2.0)
            total += float(np.sum(w * s))
    return NormResult(t0=t0, p=p, norm=float(total ** (1.0 / p)), resolution=M1, n_max=n_max)


def quartic_l4_norm(t0: float, d: int, weight, resolution: int | None = None,
                    n_max: int | None = None) -> NormResult:
    """l^4 norm over ``Z^d`` of a functional with an ``xi_1`` weight and ``t_1 = t_2 = 0``.

    Expands ``sum_m |F|^4`` on the periodic ``xi_1`` grid as a sum over node
    quadruples with ``x1 + x2 = x3 + x4``; the inner index sums then factor
    into ``Q(x1, x2, x3, x4)^(d-1)`` with
    ``Q = sum_m I(x1,m) I(x2,m) conj(I(x3,m) I(x4,m))``. Cost is
    ``O(M^3 n_max)`` so this suits moderate ``t0`` in any dimension.
    """
    if n_max is None:
        n_max = _bessel_index_max(t0, d)
    if resolution is None:
        resolution = _pow2_at_least(2.0 * abs(t0) * (d + 1.2) + 64)
    M = resolution
    xi1 = _nodes(M)
    h = np.exp(1j * t0 * np.sin(xi1) ** 3) * weight(xi1)
    I = _bessel_tables(xi1, t0, n_max).T
    mult = np.where(np.arange(n_max + 1) == 0, 1.0, 2.0)
    x = np.arange(M)
    total = 0.0 + 0.0j
    for s in range(M):
        y = (s - x) % M
        P = I[x] * I[y]
        p = h[x] * h[y]
        Q = (P * mult) @ P.conj().T
        total += p @ (Q ** (d - 1)) @ p.conj()
    total = total.real * TWO_PI ** 4 / M ** 3
    return NormResult(t0=t0, p=4.0, norm=float(max(total, 0.0) ** 0.25), resolution=M, n_max=n_max)


@dataclass
class DecayFit:
    """Least-squares fit of ``log norm`` against ``log t0``."""

    t0: np.ndarray
    norms: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float
    target: float
    slack: float

    @property
    def passed(self) -> bool:
        return self.slope <= self.target + self.slack

    def confidence_interval(self, level: float = 0.95) -> tuple:
        dof = max(len(self.t0) - 2, 1)
        q = stats.t.ppf(0.5 + 0.5 * level, dof)
        return (self.slope - q * self.slope_stderr, self.slope + q * self.slope_stderr)


def fit_decay(t0s, norms, target: float, slack: float = 0.05) -> DecayFit:
    """Fit a power law to norms; ``target`` is the exponent the slope must not exceed."""
    t0s = np.asarray(t0s, dtype=float)
    norms = np.asarray(norms, dtype=float)
    res = stats.linregress(np.log(t0s), np.log(norms))
    return DecayFit(t0=t0s, norms=norms, slope=float(res.slope), intercept=float(res.intercept),
                    slope_stderr=float(res.stderr), target=target, slack=slack)


def cut_l4_exponent(d: int) -> float:
    return -(d - 1) / 8.0


def ker_l4_exponent(n: int) -> float:
    return -(2.0 * n / 7.0 + 13.0 / 30.0)


def write_norm_csv(path, rows, meta: dict | None = None) -> None:
    """Write ``(t0, p, norm)`` rows; metadata goes in leading comment lines."""
    with open(path, "w", newline="") as fh:
        for key, val in (meta or {}).items():
            fh.write(f"# {key}: {val}\n")
        w = csv.writer(fh)
        w.writerow(["t0", "p", "norm"])
        for r in rows:
            w.writerow([repr(float(r.t0)), repr(float(r.p)), repr(float(r.norm))])


def angle_roots(a: float, b: float, c: float) -> np.ndarray:
    """Real roots of ``a x^2 + b x + c``, for locating stationary directions numerically."""
    r = np.roots([a, b, c]) if a != 0 else (np.array([-c / b]) if b != 0 else np.array([]))
    r = np.asarray(r)
    return np.sort(r[np.abs(np.imag(r)) < 1e-12].real)
