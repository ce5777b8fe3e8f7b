import numpy as np
import pytest

from granlab.circles import CircleSpec, circle_hierarchy, generate_circles, redundancy_of
from granlab.exceptions import ConfigError, DataError


class TestSpecValidation:
    def test_rho_bound_enforced(self):
        CircleSpec(k=8, rho=0.75)  # 1 - 2/8 exactly
        with pytest.raises(ConfigError) as err:
            CircleSpec(k=8, rho=0.76)
        assert "0.75" in str(err.value)

    def test_k_must_be_even(self):
        with pytest.raises(ConfigError):
            CircleSpec(k=5)
        with pytest.raises(ConfigError):
            CircleSpec(k=0)

    def test_default_jitter_scales_with_spacing(self):
        assert CircleSpec(k=8).jitter == pytest.approx(0.02 * 0.25)
        assert CircleSpec(k=8, radial_jitter=0.0).jitter == 0.0


class TestGeometry:
    def test_radii_uniformly_spaced(self):
        data = generate_circles(CircleSpec(k=4, n_points=400, rho=0.0, radial_jitter=0.0, seed=1))
        norms = np.linalg.norm(data.features, axis=1)
        for j in range(4):
            members = norms[data.circle_index == j]
            assert np.abs(members - 2.0 * (j + 1) / 4.0).max() < 1e-12

    def test_jitter_bounds_radius(self):
        spec = CircleSpec(k=4, n_points=4000, rho=0.0, radial_jitter=0.05, seed=2)
        data = generate_circles(spec)
        norms = np.linalg.norm(data.features, axis=1)
        for j in range(4):
            members = norms[data.circle_index == j]
            assert np.abs(members - 2.0 * (j + 1) / 4.0).max() <= 0.05 + 1e-12

    def test_point_allocation_remainder_to_innermost(self):
        data = generate_circles(CircleSpec(k=4, n_points=10, rho=0.0, seed=0))
        counts = np.bincount(data.circle_index, minlength=4)
        assert counts.tolist() == [3, 3, 2, 2]

    def test_deterministic(self):
        spec = CircleSpec(k=8, n_points=2000, rho=0.3, seed=42)
        a = generate_circles(spec)
        b = generate_circles(spec)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.fine_labels, b.fine_labels)


class TestLabels:
    def test_pure_circles_at_zero_redundancy(self):
        data = generate_circles(CircleSpec(k=4, n_points=4000, rho=0.0, seed=3))
        labels = data.labels_index()
        for j in range(4):
            members = labels[data.circle_index == j]
            assert set(members.tolist()) == {j}
        assert redundancy_of(data) == 0.0

    def test_coarse_labels_constant_and_alternating(self):
        for rho in (0.0, 0.3, 0.75):
            data = generate_circles(CircleSpec(k=8, n_points=8000, rho=rho, seed=4))
            coarse = data.coarse_labels()
            per_circle = []
            for j in range(8):
                values = set(coarse[data.circle_index == j].tolist())
                assert len(values) == 1, f"circle {j} mixes coarse labels at rho={rho}"
                per_circle.append(values.pop())
            assert per_circle == [1.0, 0.0] * 4

    def test_minority_subclasses_share_parity(self):
        data = generate_circles(CircleSpec(k=8, n_points=16000, rho=0.75, seed=5))
        labels = data.labels_index()
        for j in range(8):
            members = set(labels[data.circle_index == j].tolist())
            assert members == {c for c in range(8) if c % 2 == j % 2}

    def test_hierarchy_odd_circles_in_c0(self):
        h = circle_hierarchy(8)
        assert h.c0 == (0, 2, 4, 6)  # circles 1, 3, 5, 7
        assert h.c1 == (1, 3, 5, 7)

    def test_dominant_and_minority_fractions(self):
        # 80000 points over 8 circles: dominant 0.70 +- 0.01, minorities 0.10 +- 0.01
        data = generate_circles(CircleSpec(k=8, n_points=80000, rho=0.3, seed=6))
        labels = data.labels_index()
        for j in range(8):
            members = labels[data.circle_index == j]
            counts = np.bincount(members, minlength=8) / members.size
            assert counts[j] == pytest.approx(0.70, abs=0.01)
            minorities = [counts[c] for c in range(8) if c % 2 == j % 2 and c != j]
            for fraction in minorities:
                assert fraction == pytest.approx(0.10, abs=0.01)


class TestRedundancyMeasure:
    def test_round_trip_on_grid(self):
        for k in (4, 8):
            per_circle = 2000
            for rho in (0.0, 0.3, 1.0 - 2.0 / k):
                spec = CircleSpec(k=k, n_points=k * per_circle, rho=rho, seed=7)
                measured = redundancy_of(generate_circles(spec))
                assert abs(measured - rho) <= 3.0 / np.sqrt(per_circle)

    def test_spec_examples(self):
        data = generate_circles(CircleSpec(k=8, n_points=80000, rho=0.75, seed=8))
        assert redundancy_of(data) == pytest.approx(0.75, abs=0.01)
        data = generate_circles(CircleSpec(k=8, n_points=80000, rho=0.3, seed=9))
        assert redundancy_of(data) == pytest.approx(0.30, abs=0.01)

    def test_requires_circle_metadata(self):
        data = generate_circles(CircleSpec(k=4, n_points=100, seed=0))
        data.circle_index = None
        with pytest.raises(DataError):
            redundancy_of(data)


def test_sector_offset_rotates_dominant_sector():
    base = CircleSpec(k=4, n_points=40000, rho=0.5, radial_jitter=0.0, seed=10)
    rotated = CircleSpec(k=4, n_points=40000, rho=0.5, radial_jitter=0.0, seed=10,
                         sector_offset_per_circle=1.0)
    a = generate_circles(base)
    b = generate_circles(rotated)
    # same geometry, different sector labels
    assert np.array_equal(a.features, b.features)
    assert not np.array_equal(a.fine_labels, b.fine_labels)
    assert redundancy_of(b) == pytest.approx(0.5, abs=0.02)


def test_spec_echo_in_meta():
    spec = CircleSpec(k=4, n_points=100, rho=0.25, seed=3)
    data = generate_circles(spec)
    assert data.meta["circle_spec"]["rho"] == 0.25
