import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zkwave.lattice import (LatticeError, LatticeSpec, box_index, dispersion, dispersion_bar,
                            grad_dispersion, interaction_kernel, same_box, torus_distance, torus_wrap)

coord = st.floats(-0.5, 0.5, allow_nan=False)


def test_spec_derived_quantities():
    spec = LatticeSpec(d=2, D=6, lam=0.3, frak_c_r=2.0, theta_r=0.5)
    assert spec.N == 13
    assert spec.h == 1.0 / 13
    assert spec.epsilon == 0.3 * 0.3
    assert spec.c_r == 2.0 * 0.3 ** 0.5
    assert spec.shape == (13, 13)


@pytest.mark.parametrize("kwargs", [dict(d=1, D=3, lam=0.2), dict(d=2, D=0, lam=0.2),
                                    dict(d=2, D=3, lam=1.0), dict(d=2, D=3, lam=0.0),
                                    dict(d=2, D=3, lam=0.2, theta_r=0.0)])
def test_spec_rejects_invalid(kwargs):
    with pytest.raises(LatticeError):
        LatticeSpec(**kwargs)


def test_halves_partition_the_frequency_domain():
    spec = LatticeSpec(d=2, D=4, lam=0.3)
    assert not np.any(spec.plus_mask & spec.minus_mask)
    assert np.array_equal(spec.plus_mask | spec.minus_mask, spec.active_mask)
    plus = spec.plus_modes()
    neg = -plus
    idx = tuple(np.moveaxis(neg % spec.N, -1, 0))
    assert np.all(spec.minus_mask[idx])
    assert len(plus) == spec.D * spec.N


def test_index_roundtrip():
    spec = LatticeSpec(d=3, D=3, lam=0.3)
    for j in [(1, -2, 3), (-3, 0, 1), (2, 2, -2)]:
        assert tuple(spec.j_grid[spec.index_of(j)]) == j
    with pytest.raises(LatticeError):
        spec.index_of((4, 0, 0))


def test_dispersion_examples():
    assert dispersion(np.zeros(2)) == 0.0
    assert dispersion(np.array([0.25, 0.0])) == pytest.approx(1.0, abs=1e-15)
    k = np.array([1 / 3, 1 / 5])
    assert dispersion(-k) == pytest.approx(-dispersion(k), abs=1e-15)


def test_dispersion_bar_examples():
    assert dispersion_bar(np.array([0.0, 0.3])) == 0.0
    assert dispersion_bar(np.array([0.25, 0.1])) == pytest.approx(1.0, abs=1e-15)


def test_gradient_matches_finite_differences():
    k = np.array([0.13, 0.21])
    g = grad_dispersion(k)
    step = 1e-5
    fd = np.array([(dispersion(k + step * e) - dispersion(k - step * e)) / (2 * step) for e in np.eye(2)])
    assert np.allclose(g, fd, rtol=1e-6, atol=0)
    assert np.all(grad_dispersion(np.zeros(2)) == 0)
    assert grad_dispersion(np.array([0.3, 0.0]))[1] == 0.0


def test_interaction_kernel_examples():
    q = np.array([0.25, 0.0])
    assert interaction_kernel(q, q, q) == pytest.approx(2.0)
    assert interaction_kernel(q, np.array([0.0, 0.2]), q) == 0.0
    k = np.array([0.1, 0.3])
    assert interaction_kernel(-k, q, k) == pytest.approx(-interaction_kernel(k, q, k))


def test_box_index_examples():
    assert tuple(box_index(np.array([0.05, 0.31]), 0.1)) == (0, 3)
    assert not same_box(np.array([0.05, 0.2]), np.array([0.15, 0.2]), 0.1)
    assert same_box(np.array([0.05, 0.2]), np.array([0.05, 0.2]), 0.1)


def test_grid_parity_exact():
    spec = LatticeSpec(d=2, D=8, lam=0.3)
    neg = spec.negate_index(np.moveaxis(np.indices(spec.shape), 0, -1))
    w_neg = spec.omega[tuple(np.moveaxis(neg, -1, 0))]
    assert np.max(np.abs(w_neg + spec.omega)) < 1e-15
    wb_neg = spec.omega_bar[tuple(np.moveaxis(neg, -1, 0))]
    assert np.max(np.abs(wb_neg + spec.omega_bar)) < 1e-15


def test_box_matrix_is_block_of_ones():
    spec = LatticeSpec(d=2, D=5, lam=0.45)
    k = spec.plus_modes() * spec.h
    E = same_box(k[:, None], k[None, :], spec.box_size).astype(float)
    assert np.array_equal(E, E.T)
    assert np.min(np.linalg.eigvalsh(E)) > -1e-12
    # transitivity: each row equals the rows of all its box mates
    for i in range(len(k)):
        mates = np.nonzero(E[i])[0]
        assert np.all(E[mates] == E[i])


@settings(max_examples=200, deadline=None)
@given(st.lists(coord, min_size=6, max_size=6))
def test_kernel_modulus_permutation_symmetric(x):
    k, k1, k2 = np.array(x[:2]), np.array(x[2:4]), np.array(x[4:])
    a = abs(interaction_kernel(k, k1, k2))
    assert a == abs(interaction_kernel(k1, k2, k))
    assert a == abs(interaction_kernel(k2, k, k1))


def test_kernel_permutation_symmetry_many_triples():
    rng = np.random.default_rng(3)
    k, k1, k2 = (rng.uniform(-0.5, 0.5, (10_000, 2)) for _ in range(3))
    a = np.abs(interaction_kernel(k, k1, k2))
    for perm in [(k1, k, k2), (k2, k1, k), (k1, k2, k)]:
        assert np.array_equal(a, np.abs(interaction_kernel(*perm)))


@settings(max_examples=200, deadline=None)
@given(st.floats(-10, 10, allow_nan=False))
def test_torus_wrap_range(x):
    w = torus_wrap(x)
    assert -0.5 <= w < 0.5
    assert abs((x - w) - round(x - w)) < 1e-9
    assert torus_distance(x) == abs(w)


@settings(max_examples=200, deadline=None)
@given(coord, coord)
def test_dispersion_odd(a, b):
    k = np.array([a, b])
    assert dispersion(-k) == -dispersion(k)
