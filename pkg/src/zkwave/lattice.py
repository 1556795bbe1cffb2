"""
Frequency lattice, dispersion relation, interaction kernel and box tiling.

Modes are labelled by integer vectors ``j`` with ``|j^i| <= D``; the
wavevector is ``k = j*h`` with ``h = 1/(2D+1)``. Full-grid arrays are stored
in FFT order along every axis (index ``i`` holds ``j = i`` for ``i <= D`` and
``j = i - N`` otherwise, ``N = 2D+1``), so that the quadratic nonlinearity is a
plain cyclic convolution. The plane ``j^1 = 0`` is part of storage but not of
the model's frequency domain; amplitudes there are kept at zero.

Pointwise functions take wavevectors with the spatial index on the last axis,
``k.shape == (..., d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi


class LatticeError(ValueError):
    """Raised for inconsistent lattice parameters or invalid modes."""


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice geometry and physical constants.

    Parameters
    ----------
    d : int
        Spatial dimension, at least 2.
    D : int
        Lattice half-size; each axis carries ``2D+1`` modes.
    lam : float
        Nonlinearity strength, ``0 <= lam < 1``. ``lam = 0`` is allowed for
        linear runs, in which case ``epsilon`` must be supplied explicitly
        through ``eps_override``.
    box_constant : float
        Box edge in units of epsilon.
    frak_c_r : float
        Noise prefactor; the noise strength is ``frak_c_r * lam**theta_r``.
    theta_r : float
        Noise exponent in ``(0, 1]``.
    eps_override : float, optional
        Use this epsilon instead of ``lam**2``. Only meant for ``lam = 0``
        runs that still need a box tiling and covariance scale.
    c_r_override : float, optional
        Use this noise strength directly (e.g. ``lam = 0`` damping studies).
    """

    d: int
    D: int
    lam: float
    box_constant: float = 1.0
    frak_c_r: float = 1.0
    theta_r: float = 0.2
    eps_override: float | None = None
    c_r_override: float | None = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise LatticeError(f"d must be an integer >= 2, got {self.d}")
        if int(self.D) != self.D or self.D < 1:
            raise LatticeError(f"D must be an integer >= 1, got {self.D}")
        if not 0.0 <= self.lam < 1.0:
            raise LatticeError(f"lambda must lie in [0, 1), got {self.lam}")
        if self.lam == 0.0 and self.eps_override is None:
            raise LatticeError("lambda = 0 needs eps_override for the box scale")
        if self.eps_override is not None and not self.eps_override > 0:
            raise LatticeError("eps_override must be positive")
        if not self.box_constant > 0:
            raise LatticeError("box_constant must be positive")
        if not 0.0 < self.theta_r <= 1.0:
            raise LatticeError(f"theta_r must lie in (0, 1], got {self.theta_r}")
        if self.frak_c_r < 0 or (self.c_r_override is not None and self.c_r_override < 0):
            raise LatticeError("noise strength must be nonnegative")

    @property
    def N(self) -> int:
        return 2 * self.D + 1

    @property
    def h(self) -> float:
        return 1.0 / (2 * self.D + 1)

    @property
    def epsilon(self) -> float:
        if self.eps_override is not None:
            return float(self.eps_override)
        return self.lam * self.lam

    @property
    def box_size(self) -> float:
        return self.box_constant * self.epsilon

    @property
    def c_r(self) -> float:
        if self.c_r_override is not None:
            return float(self.c_r_override)
        return self.frak_c_r * self.lam ** self.theta_r

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @cached_property
    def index_1d(self) -> np.ndarray:
        """Signed integer label ``j`` of each FFT-ordered position."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).round().astype(np.int64)

    @cached_property
    def j_grid(self) -> np.ndarray:
        """Integer labels on the full grid, shape ``(N,)*d + (d,)``."""
        axes = np.meshgrid(*([self.index_1d] * self.d), indexing="ij")
        return np.stack(axes, axis=-1)

    @cached_property
    def k_grid(self) -> np.ndarray:
        """Wavevectors ``j*h`` on the full grid, shape ``(N,)*d + (d,)``."""
        return self.j_grid * self.h

    @cached_property
    def plus_mask(self) -> np.ndarray:
        return self.j_grid[..., 0] > 0

    @cached_property
    def minus_mask(self) -> np.ndarray:
        return self.j_grid[..., 0] < 0

    @cached_property
    def active_mask(self) -> np.ndarray:
        """Modes of the frequency domain (first coordinate nonzero)."""
        return self.j_grid[..., 0] != 0

    @cached_property
    def omega(self) -> np.ndarray:
        return dispersion(self.k_grid)

    @cached_property
    def omega_bar(self) -> np.ndarray:
        return dispersion_bar(self.k_grid)

    def index_of(self, j) -> tuple[int, ...]:
        """Storage index of the mode with integer label ``j``."""
        j = tuple(int(x) for x in j)
        if len(j) != self.d or any(abs(x) > self.D for x in j):
            raise LatticeError(f"mode {j} outside the lattice")
        return tuple(x % self.N for x in j)

    def plus_modes(self) -> np.ndarray:
        """Integer labels of all modes with ``j^1 > 0``, shape ``(n, d)``, sorted."""
        labels = self.j_grid[self.plus_mask]
        order = np.lexsort(labels.T[::-1])
        return labels[order]

    def negate_index(self, idx: np.ndarray) -> np.ndarray:
        """Storage indices of ``-k`` for storage indices ``idx`` (last axis d)."""
        return (-np.asarray(idx)) % self.N


def is_mode(j, D: int) -> bool:
    """True if ``j`` labels a point of the frequency domain (``j^1 != 0``)."""
    j = np.asarray(j)
    return bool(j[0] != 0 and np.all(np.abs(j) <= D))


def dispersion(k) -> np.ndarray:
    """Lattice ZK dispersion ``sin(2 pi k^1) * sum_i sin^2(2 pi k^i)``.

    Parameters
    ----------
    k : array_like, shape (..., d)

    Returns
    -------
    numpy.ndarray, shape (...)
    """
    k = np.asarray(k, dtype=float)
    s = np.sin(TWO_PI * k)
    return s[..., 0] * np.sum(s * s, axis=-1)


def dispersion_bar(k) -> np.ndarray:
    """Reduced dispersion ``sin(2 pi k^1)`` entering the interaction kernel."""
    k = np.asarray(k, dtype=float)
    return np.sin(TWO_PI * k[..., 0])


def grad_dispersion(k) -> np.ndarray:
    """Analytic gradient of :func:`dispersion` with respect to ``k``.

    Returns an array of the same shape as ``k``.
    """
    k = np.asarray(k, dtype=float)
    s = np.sin(TWO_PI * k)
    c = np.cos(TWO_PI * k)
    s1 = s[..., 0]
    total = np.sum(s * s, axis=-1)
    # d/dk^i sin^2(2 pi k^i) = 2 pi sin(4 pi k^i) = 4 pi s c
    g = s1[..., None] * (2.0 * TWO_PI * s * c)
    g[..., 0] += TWO_PI * c[..., 0] * total
    return g


def interaction_kernel(k, k1, k2) -> np.ndarray:
    """Kernel ``2 sign(k^1) sqrt(|wbar(k) wbar(k1) wbar(k2)|)``."""
    k = np.asarray(k, dtype=float)
    f = np.abs(np.stack(np.broadcast_arrays(dispersion_bar(k), dispersion_bar(k1),
                                            dispersion_bar(k2)), axis=-1))
    # sorted factors make the product independent of argument order
    f = np.sort(f, axis=-1)
    prod = f[..., 0] * f[..., 1] * f[..., 2]
    return 2.0 * np.sign(k[..., 0]) * np.sqrt(prod)


def torus_wrap(x) -> np.ndarray:
    """Representative of ``x`` modulo 1 in ``[-1/2, 1/2)``."""
    x = np.asarray(x, dtype=float)
    return x - np.floor(x + 0.5)


def torus_distance(x, y=0.0) -> np.ndarray:
    """Per-coordinate distance on the unit circle."""
    return np.abs(torus_wrap(np.asarray(x, dtype=float) - y))


def box_index(k, box_size: float) -> np.ndarray:
    """Integer box label ``floor(k^i / box_size)`` for each coordinate."""
    k = np.asarray(k, dtype=float)
    # the small guard keeps lattice points that sit exactly on a box edge
    # from flipping boxes through rounding of j*h/box_size
    return np.floor(k / box_size + 1e-12).astype(np.int64)


def same_box(k, kp, box_size: float) -> np.ndarray:
    """Box-overlap matrix entry for two modes of the positive half."""
    return np.all(box_index(k, box_size) == box_index(kp, box_size), axis=-1)
