"""
Box-structured phase noise.

Modes of the positive half lattice are grouped into boxes of edge
``box_constant * epsilon``. The coupling matrix is the block square root of the
all-ones box matrix, ``J_m / sqrt(m)``, so every box is driven by a single
effective standard Brownian motion and the noise only rotates phases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeSpec, box_index, same_box


class NoiseError(ValueError):
    """Raised for malformed noise inputs."""


@dataclass(frozen=True)
class MultiIndexCharge:
    """Net phase charge carried by a monomial in every box.

    Attributes
    ----------
    charges : numpy.ndarray of int
        One integer per box, ordered as ``NoiseModel.boxes``.
    """

    charges: np.ndarray

    def is_paired(self) -> bool:
        return not np.any(self.charges)


@dataclass
class NoiseModel:
    """Box tiling of the positive half lattice and its noise couplings.

    Attributes
    ----------
    spec : LatticeSpec
    boxes : list of numpy.ndarray
        Integer mode labels of each box, shape ``(m, d)``.
    box_id : numpy.ndarray
        Box number of every storage position. Modes of the negative half get
        the box of their mirror; the inert plane gets ``-1``.
    coupling : numpy.ndarray
        ``1/sqrt(m)`` per box.
    """

    spec: LatticeSpec
    boxes: list = field(repr=False)
    box_id: np.ndarray = field(repr=False)
    coupling: np.ndarray = field(repr=False)

    @property
    def n_boxes(self) -> int:
        return len(self.boxes)

    @property
    def c_r(self) -> float:
        return self.spec.c_r

    def box_sizes(self) -> np.ndarray:
        return np.array([len(b) for b in self.boxes], dtype=np.int64)

    def coupling_matrix(self) -> np.ndarray:
        """Dense coupling on the positive half, rows and columns in ``plus_modes`` order.

        Only meant for small lattices (tests and validation).
        """
        labels = self.spec.plus_modes()
        ids = self.box_id[tuple(np.moveaxis(labels % self.spec.N, -1, 0))]
        g = (ids[:, None] == ids[None, :]).astype(float)
        return g * self.coupling[ids][:, None]

    def coupling_tilde(self, j, l) -> float:
        """Sign extension of the coupling to arbitrary halves of the lattice."""
        j = np.asarray(j)
        l = np.asarray(l)
        sj = 1 if j[0] > 0 else -1
        sl = 1 if l[0] > 0 else -1
        g = self._coupling_plus(sj * j, sl * l)
        return float(sj * sl * g)

    def _coupling_plus(self, j, l) -> float:
        bj = self.box_id[self.spec.index_of(j)]
        bl = self.box_id[self.spec.index_of(l)]
        return float(self.coupling[bj]) if bj == bl else 0.0

    def phase_field(self, dB: np.ndarray) -> np.ndarray:
        """Phase increments on the full grid for box increments ``dB``.

        ``dB`` has shape ``(..., n_boxes)``; the result has shape
        ``(...,) + spec.shape``. Positive-half modes rotate by
        ``+sqrt(2 c_r) dB``, their mirrors by the opposite angle.
        """
        dB = np.asarray(dB, dtype=float)
        amp = np.sqrt(2.0 * self.c_r)
        ids = np.where(self.box_id >= 0, self.box_id, 0)
        sign = np.sign(self.spec.j_grid[..., 0]).astype(float)
        return amp * sign * dB[..., ids]

    def charges(self, V1, V2) -> MultiIndexCharge:
        """Box charges of the monomial ``a^V1 (a*)^V2``.

        ``V1`` and ``V2`` are integer arrays on the full grid (storage order)
        counting how often each mode appears.
        """
        V1 = np.asarray(V1, dtype=np.int64)
        V2 = np.asarray(V2, dtype=np.int64)
        if V1.shape != self.spec.shape or V2.shape != self.spec.shape:
            raise NoiseError("multi-indices must live on the full grid")
        neg = _mirror(V1)
        neg2 = _mirror(V2)
        q = V1 - neg + neg2 - V2
        plus = self.spec.plus_mask
        out = np.bincount(self.box_id[plus], weights=q[plus], minlength=self.n_boxes)
        return MultiIndexCharge(np.rint(out).astype(np.int64))


def _mirror(V: np.ndarray) -> np.ndarray:
    """Array ``W`` with ``W[k] = V[-k]`` in FFT storage order."""
    out = V
    for ax in range(V.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def build_noise(spec: LatticeSpec) -> NoiseModel:
    """Tile the positive half lattice into boxes and attach couplings."""
    labels = spec.plus_modes()
    keys = box_index(labels * spec.h, spec.box_size)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    boxes = [labels[inverse == b] for b in range(len(uniq))]
    if any(len(b) == 0 for b in boxes):
        raise NoiseError("empty box in tiling")

    box_id = np.full(spec.shape, -1, dtype=np.int64)
    pos = tuple(np.moveaxis(labels % spec.N, -1, 0))
    box_id[pos] = inverse
    neg = tuple(np.moveaxis((-labels) % spec.N, -1, 0))
    box_id[neg] = inverse

    sizes = np.array([len(b) for b in boxes], dtype=float)
    coupling = 1.0 / np.sqrt(sizes)
    # diagonal of g g^T is m * (1/sqrt m)^2 per box; off-box products vanish
    if np.max(np.abs(sizes * coupling**2 - 1.0)) > 1e-12:
        raise NoiseError("coupling does not reproduce the box matrix")
    return NoiseModel(spec=spec, boxes=boxes, box_id=box_id, coupling=coupling)


def noise_coefficient(charges: MultiIndexCharge | np.ndarray) -> float:
    """Generator eigenvalue ``-2 * sum_boxes charge**2``."""
    q = charges.charges if isinstance(charges, MultiIndexCharge) else np.asarray(charges)
    q = np.asarray(q, dtype=np.int64)
    return float(-2 * int(np.sum(q * q)))


def generator_action(V1, V2, model: NoiseModel) -> float:
    """Eigenvalue of the noise generator on ``a^V1 (a*)^V2``.

    Computed from the polar form: with ``a_k = |a_k| exp(i phi_k)`` for ``k``
    in the positive half, the monomial depends on ``phi_k`` through
    ``exp(i n_k phi_k)``; the generator is the quadratic form
    ``2 sum E(k,k') d^2/dphi_k dphi_k'`` with ``E`` the box-overlap matrix.
    This path uses pairwise box comparisons and never forms box charges.
    """
    spec = model.spec
    V1 = np.asarray(V1, dtype=np.int64)
    V2 = np.asarray(V2, dtype=np.int64)
    winding = {}
    for V, s in ((V1, 1), (V2, -1)):
        for idx in zip(*np.nonzero(V)):
            j = spec.j_grid[idx]
            if j[0] == 0:
                continue
            half = 1 if j[0] > 0 else -1
            key = tuple(int(x) for x in half * j)
            winding[key] = winding.get(key, 0) + s * half * int(V[idx])
    keys = [k for k, n in winding.items() if n != 0]
    if not keys:
        return 0.0
    kv = np.array(keys, dtype=float) * spec.h
    n = np.array([winding[k] for k in keys], dtype=np.int64)
    E = same_box(kv[:, None, :], kv[None, :, :], spec.box_size)
    total = int(np.sum(E * np.outer(n, n)))
    return float(-2 * total)


def phase_regulator(kplus, kminus, model: NoiseModel) -> float:
    """Damping exponent of a product of ``a`` over ``kplus`` and ``a*`` over ``kminus``.

    Each momentum is mapped to the positive half ``U k`` with ``U = sign(k^1)``;
    repeated momenta are allowed.
    """
    spec = model.spec

    def fold(ks):
        ks = np.asarray(list(ks), dtype=np.int64).reshape(-1, spec.d)
        if np.any(ks[:, 0] == 0):
            raise NoiseError("momenta must have nonzero first coordinate")
        u = np.sign(ks[:, 0])
        return (ks * u[:, None]) * spec.h, u.astype(np.int64)

    kp, up = fold(kplus)
    km, um = fold(kminus)

    def block(a, ua, b, ub):
        if len(a) == 0 or len(b) == 0:
            return 0
        E = same_box(a[:, None, :], b[None, :, :], spec.box_size)
        return int(np.sum(E * np.outer(ua, ub)))

    return float(-2 * (block(kp, up, kp, up) + block(km, um, km, um) - 2 * block(kp, up, km, um)))


def random_monomial(model: NoiseModel, rng: np.random.Generator, n_modes: int = 5,
                    paired: bool = False) -> tuple:
    """Random multi-indices ``(V1, V2)`` on the frequency domain.

    Each side picks up to ``n_modes`` active modes with multiplicity 1 or 2.
    With ``paired`` the conjugate side repeats the plain side, so every box
    charge vanishes.
    """
    spec = model.spec
    act = np.argwhere(spec.active_mask)
    out = []
    for _ in range(1 if paired else 2):
        V = np.zeros(spec.shape, dtype=np.int64)
        pick = act[rng.integers(0, len(act), rng.integers(0, n_modes + 1))]
        for p in pick:
            V[tuple(p)] += rng.integers(1, 3)
        out.append(V)
    if paired:
        out.append(out[0].copy())
    return out[0], out[1]
