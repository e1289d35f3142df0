import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbmcmimo.cellfree import (
    LayoutError,
    build_layout,
    cost_hata_db,
    fractional_power_control,
    noise_power,
    wrap_distances,
    write_layout_csv,
)


def test_nine_ap_grid(rng):
    layout = build_layout(9, 4, 4, 2.0, rng)
    xs = np.unique(np.round(layout.ap_positions[:, 0], 12))
    np.testing.assert_allclose(xs, [1 / 3, 1.0, 5 / 3])
    np.testing.assert_allclose(np.diff(xs), 2 / 3)
    assert layout.num_antennas == 36 and layout.beta.shape == (36, 4)
    # antennas of one AP share the link gain
    np.testing.assert_array_equal(layout.beta[0], layout.beta[3])


def test_users_keep_min_distance(rng):
    layout = build_layout(16, 1, 50, 2.0, rng)
    assert layout.distances.min() >= 0.010


def test_non_square_ap_count(rng):
    with pytest.raises(LayoutError):
        build_layout(8, 4, 4, 2.0, rng)


def test_wrap_shorter_across_boundary():
    a, b = np.array([[0.05, 1.0]]), np.array([[1.95, 1.0]])
    assert wrap_distances(a, b, 2.0)[0, 0] == pytest.approx(0.1)
    assert np.hypot(*(a - b)[0]) == pytest.approx(1.9)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=4, max_size=4))
def test_wrap_distance_properties(c):
    a, b = np.array([c[:2]]), np.array([c[2:]])
    d = wrap_distances(a, b, 2.0)[0, 0]
    assert d <= np.hypot(*(a - b)[0]) + 1e-12
    assert d <= np.sqrt(2) + 1e-12
    assert d == pytest.approx(wrap_distances(b, a, 2.0)[0, 0])


def test_cost_hata_reference():
    assert cost_hata_db(1.0) == -135.0
    assert 10 ** (cost_hata_db(1.0) / 10) == pytest.approx(10**-13.5, rel=1e-12)
    assert cost_hata_db(10.0, 8.0) == pytest.approx(-178.0)


def test_noise_power_reference():
    assert noise_power(290, 1.3e-23, 20e6, 9) == pytest.approx(5.99e-13, rel=1e-3)
    assert noise_power(290, 1.3e-23, 20e6, 0) == 290 * 1.3e-23 * 20e6
    assert noise_power(bandwidth=40e6) == pytest.approx(2 * noise_power(bandwidth=20e6), rel=1e-15)


def test_power_control_examples():
    beta = np.array([[1e-13, 4e-13]])
    np.testing.assert_array_equal(fractional_power_control(beta, 0.0).mu, [0.2, 0.2])
    pc = fractional_power_control(beta, 0.5, 0.2)
    assert pc.mu[0] / pc.mu[1] == pytest.approx(2.0, rel=1e-12)
    assert pc.mu.max() == pytest.approx(0.2)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(1e-16, 1e-8), min_size=2, max_size=6),
    st.floats(0, 1),
    st.floats(1e-3, 1e3),
)
def test_power_control_scale_invariance(sums, nu, c):
    sums = np.array(sums)
    a = fractional_power_control(sums, nu).mu
    b = fractional_power_control(c * sums, nu).mu
    np.testing.assert_allclose(a, b, rtol=1e-9)
    assert np.all(a <= 0.2 * (1 + 1e-12))


def test_power_control_validation():
    with pytest.raises(ValueError):
        fractional_power_control(np.ones(2), 1.5)
    with pytest.raises(ValueError):
        fractional_power_control(np.zeros(2), 0.5)


def test_layout_csv(tmp_path, rng):
    layout = build_layout(4, 2, 3, 2.0, rng)
    path = tmp_path / "layout.csv"
    write_layout_csv(path, layout, fractional_power_control(layout.beta))
    lines = path.read_text().splitlines()
    assert lines[0].startswith("kind,index")
    assert len(lines) == 1 + 4 + 3 + 12
