from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherepack.errors import EmptyDomain
from spherepack.geometry import SampleSet
from spherepack.loss import evaluate_gradients, evaluate_losses, signed_distance
from spherepack.model import Sphere, SphereSet, WeightConfig, preset
from spherepack.testkit import finite_difference_gradient, kink_margin, reference_terms, reference_total

ALL_ONES = WeightConfig(1, 1, 1, 1, 1, 1)


def _set(*spheres):
    return SphereSet(tuple(Sphere(c, r) for c, r in spheres))


def _ball_samples(n=4000, seed=0):
    """Exact samples of the unit ball: no tessellation involved."""
    rng = np.random.default_rng(seed)
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    interior = d * rng.random(n)[:, None] ** (1 / 3)
    s = rng.standard_normal((n, 3))
    s /= np.linalg.norm(s, axis=1, keepdims=True)
    return SampleSet(interior, s, s.copy())


def _random_config(seed, n_pts=60):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    samples = SampleSet(rng.random((n_pts, 3)), rng.random((n_pts, 3)),
                        _unit(rng.standard_normal((n_pts, 3))))
    spheres = SphereSet.from_arrays(rng.random((n, 3)), rng.uniform(0.05, 0.4, n))
    w = WeightConfig(*(10.0 ** rng.uniform(-2, 3, 6)))
    return samples, spheres, w


def _unit(v):
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_signed_distance_examples():
    assert signed_distance((0, 0, 0), Sphere((0, 0, 0), 1)) == -1
    assert signed_distance((2, 0, 0), Sphere((0, 0, 0), 1)) == 1
    assert signed_distance((0.3, 0.4, 0), Sphere((0, 0, 0), 0.5)) == pytest.approx(0, abs=1e-15)


def test_exact_cover_case():
    lb = evaluate_losses(_ball_samples(), _set(((0, 0, 0), 1.0)), ALL_ONES)
    assert lb.cover == 0.0
    assert lb.bound <= 1e-3 and lb.surf <= 1e-3


def test_overlap_example():
    samples = _ball_samples(10)
    lb = evaluate_losses(samples, _set(((0, 0, 0), 0.6), ((1, 0, 0), 0.6)), ALL_ONES)
    assert lb.overlap == pytest.approx(0.2, abs=1e-15)


def test_contain_example():
    samples = _ball_samples(10)
    lb = evaluate_losses(samples, _set(((0.1, 0, 0), 0.2), ((0, 0, 0), 0.8)), ALL_ONES)
    assert lb.contain == pytest.approx(0.125, abs=1e-15)


def test_sqem_example():
    samples = SampleSet([[0, 0, 0]], [[1, 0, 0]], [[1, 0, 0]])
    lb = evaluate_losses(samples, _set(((0, 0, 0), 0.8)), ALL_ONES)
    assert lb.sqem == pytest.approx(0.04, abs=1e-15)


def test_sqem_closest_switch():
    # q is nearer the big sphere's surface but nearer the small sphere's center
    samples = SampleSet([[0, 0, 0]], [[1, 0, 0]], [[1, 0, 0]])
    spheres = _set(((0, 0, 0), 0.95), ((1.3, 0, 0), 0.01))
    by_surface = evaluate_losses(samples, spheres, ALL_ONES)
    by_center = evaluate_losses(samples, spheres, ALL_ONES, sqem_center_closest=True)
    assert by_surface.sqem == pytest.approx(0.05 ** 2)
    assert by_center.sqem == pytest.approx((-0.3 - 0.01) ** 2)


def test_coverage_gradient_example():
    samples = SampleSet([[0.9, 0, 0]], [[1, 0, 0]], [[1, 0, 0]])
    _, g = evaluate_gradients(samples, _set(((0, 0, 0), 0.5)), WeightConfig(w_c=1.0))
    assert g.d_radius[0] == pytest.approx(-1.0)
    assert np.allclose(g.d_center[0], [-1.0, 0.0, 0.0])


def test_inactive_hinges_give_zero_gradient():
    interior = np.array([[0.2, 0.2, 0.2], [0.7, 0.7, 0.7]])
    surface = np.array([[0.0, 0.5, 0.5], [1.0, 0.5, 0.5]])
    samples = SampleSet(interior, surface, [[-1, 0, 0], [1, 0, 0]])
    spheres = _set(((0.25, 0.25, 0.25), 0.15), ((0.75, 0.75, 0.75), 0.15))
    lb, g = evaluate_gradients(samples, spheres, WeightConfig(w_c=1, w_o=1, w_b=1, w_t=1))
    assert lb.total == 0.0
    assert not np.any(g.flat())


def test_single_sphere_pairwise_terms_vanish(cube_samples):
    lb = evaluate_losses(cube_samples, _set(((0.5, 0.5, 0.5), 0.3)), ALL_ONES)
    assert lb.overlap == 0.0 and lb.contain == 0.0


def test_empty_domain():
    empty = SampleSet(np.zeros((0, 3)), [[1, 0, 0]], [[1, 0, 0]])
    with pytest.raises(EmptyDomain):
        evaluate_losses(empty, _set(((0, 0, 0), 1)), ALL_ONES)


@pytest.mark.parametrize("seed", range(10))
def test_matches_reference_terms(seed):
    samples, spheres, w = _random_config(seed, n_pts=200)
    lb = evaluate_losses(samples, spheres, w)
    ref = [float(x) for x in reference_terms(samples, spheres.centers, spheres.radii)]
    assert np.allclose(lb.components(), ref, rtol=1e-12, atol=1e-15)
    assert lb.total == pytest.approx(float(reference_total(samples, spheres.centers, spheres.radii, w)),
                                     rel=1e-12)


def test_total_is_weighted_sum(cube_samples):
    spheres = SphereSet.from_arrays(np.random.default_rng(0).random((6, 3)), np.full(6, 0.2))
    w = preset("B")
    lb = evaluate_losses(cube_samples, spheres, w)
    expected = sum(a * b for a, b in zip(w.as_dict().values(), lb.components()))
    assert lb.total == pytest.approx(expected, rel=1e-12)
    doubled = evaluate_losses(cube_samples, spheres, w.scaled(2.0))
    assert doubled.components() == lb.components()
    assert doubled.total == pytest.approx(2 * lb.total, rel=1e-12)


def test_rigid_invariance(cube_samples):
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    t = np.array([2.0, -1.0, 0.5])
    spheres = SphereSet.from_arrays(rng.random((5, 3)), rng.uniform(0.1, 0.3, 5))
    moved_samples = SampleSet(cube_samples.interior_points @ q.T + t,
                              cube_samples.surface_points @ q.T + t,
                              cube_samples.surface_normals @ q.T)
    moved = SphereSet.from_arrays(spheres.centers @ q.T + t, spheres.radii)
    a = evaluate_losses(cube_samples, spheres, ALL_ONES)
    b = evaluate_losses(moved_samples, moved, ALL_ONES)
    assert np.allclose(a.components(), b.components(), rtol=1e-9, atol=1e-14)


def test_random_n5_seed11_matches_finite_differences():
    rng = np.random.default_rng(11)
    for _ in range(200):
        samples = SampleSet(rng.random((40, 3)), rng.random((40, 3)), _unit(rng.standard_normal((40, 3))))
        spheres = SphereSet.from_arrays(rng.random((5, 3)), rng.uniform(0.05, 0.4, 5))
        h = 1e-5 * np.sqrt(3)
        if kink_margin(samples, spheres) > 4 * h:
            break
    _, g = evaluate_gradients(samples, spheres, ALL_ONES)
    fd = finite_difference_gradient(samples, spheres, ALL_ONES, h).flat()
    a = g.flat()
    mask = np.abs(a) > 1e-8
    assert np.all(np.abs(a[mask] - fd[mask]) <= 1e-4 * np.abs(a[mask]))


def test_coverage_only_fd_is_exact():
    samples = SampleSet([[0.9, 0, 0]], [[1, 0, 0]], [[1, 0, 0]])
    spheres = _set(((0, 0, 0), 0.5))
    fd = finite_difference_gradient(samples, spheres, WeightConfig(w_c=1.0), 1e-4)
    assert np.allclose(fd.flat(), [-1, 0, 0, -1], atol=1e-6)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), grow=st.floats(1e-3, 0.5))
def test_cover_monotone_in_radius(seed, grow):
    samples, spheres, _ = _random_config(seed)
    k = seed % len(spheres)
    radii = spheres.radii.copy()
    radii[k] += grow
    bigger = SphereSet.from_arrays(spheres.centers, radii)
    a = evaluate_losses(samples, spheres, ALL_ONES)
    b = evaluate_losses(samples, bigger, ALL_ONES)
    assert b.cover <= a.cover
    assert min(b.components()) >= 0.0
