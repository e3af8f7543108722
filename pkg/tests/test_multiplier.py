import numpy as np
import pytest

from hypercross import multiplier as mu

# frozen finite-difference scan value for the bump transition shape; the scan
# rechecks it against the pinned step h = 2**-16 * support_radius.
# A symbolic-derivative scan of the same shape gives 409.6524.
BUMP_SMOOTHNESS_BASELINE = 409.676


def test_bump_values_eps_1():
    m = mu.make_bump_profile(1.0)
    assert m(0.5) == 1.0
    assert m(2.5) == 0.0


def test_bump_values_eps_eighth():
    m = mu.make_bump_profile(2.0**-3)
    t = np.linspace(-0.125, 0.125, 101)
    assert np.all(m(t) == 1.0)
    t = np.array([0.25, 0.3, -0.25, 5.0])
    assert np.all(m(t) == 0.0)


@pytest.mark.parametrize("i", range(7))
def test_bump_sandwich_scan(i):
    eps = 2.0**-i
    m = mu.make_bump_profile(eps)
    t = np.linspace(-4 * eps, 4 * eps, 100_001)
    vals = m(t)
    lower = (np.abs(t) < eps).astype(float)
    upper = (np.abs(t) < 2 * eps).astype(float)
    assert np.all(vals >= lower)
    assert np.all(vals <= upper)
    assert np.abs(vals - m(-t)).max() == 0.0  # even


def test_bump_rejects_non_dyadic_eps():
    for eps in (0.3, 1.5, -0.5, 0.0, float("nan")):
        with pytest.raises(ValueError):
            mu.make_bump_profile(eps)


def test_smoothness_constant_zero_profile():
    zero = mu.make_custom_profile(lambda t: np.zeros_like(t), support_radius=1.0)
    assert mu.smoothness_constant(zero) == 0.0


def test_smoothness_constant_order_zero_term_is_one():
    m = mu.make_bump_profile(0.25)
    scan = np.linspace(-1.0, 1.0, 100_001)
    assert np.abs(m(scan)).max() == 1.0
    assert mu.smoothness_constant(m) >= 1.0


def test_smoothness_constant_regression_and_dilation_invariance():
    a_half = mu.smoothness_constant(mu.make_bump_profile(0.5))
    assert a_half == pytest.approx(BUMP_SMOOTHNESS_BASELINE, rel=1e-3)
    a_eighth = mu.smoothness_constant(mu.make_bump_profile(0.125))
    assert a_eighth == pytest.approx(a_half, rel=1e-6)


def test_smoothness_constant_reflection_invariance():
    base = mu.make_bump_profile(0.5)
    reflected = mu.make_custom_profile(lambda t: base(-t), support_radius=base.support_radius)
    assert mu.smoothness_constant(reflected) == pytest.approx(
        mu.smoothness_constant(base), rel=1e-9
    )


def test_layer_reconstruction_bump_one():
    m = mu.make_bump_profile(1.0)
    layers = mu.layer_decomposition(m, 4)
    t = np.linspace(-2.5, 2.5, 20_001)
    recon = sum(layer(t) for layer in layers)
    assert np.abs(recon - m(t)).max() <= 1e-10


def test_layer_reconstruction_small_bump():
    m = mu.make_bump_profile(2.0**-3)
    layers = mu.layer_decomposition(m, 6)
    t = np.linspace(-1.0, 1.0, 20_001)
    recon = sum(layer(t) for layer in layers)
    assert np.abs(recon - m(t)).max() <= 1e-10


def test_first_layer_equals_profile_on_flat_region():
    # non-increasing profile with m(1/2) = 1: the first cap does not bite
    m = mu.make_plateau_profile(0.6, 1.2)
    layers = mu.layer_decomposition(m, 3)
    t = np.linspace(0.0, 0.5, 2001)
    assert np.abs(layers[0](t) - m(t)).max() == 0.0


def test_layer_sups_bounded_by_profile_at_knots():
    # the capping construction forces sup|m_i| <= m(2**-i); verified by scan
    for eps in (1.0, 0.5, 2.0**-3):
        m = mu.make_bump_profile(eps)
        t = np.linspace(-2.5, 2.5, 40_001)
        for i, layer in enumerate(mu.layer_decomposition(m, 6), start=1):
            sup = np.abs(layer(t)).max()
            assert sup <= float(m(2.0**-i)) + 1e-12


def test_layer_knot_metadata():
    layers = mu.layer_decomposition(mu.make_bump_profile(1.0), 3)
    for i, layer in enumerate(layers, start=1):
        meta = dict(layer.meta)
        assert meta["knot"] == 2.0**-i
        assert meta["window"] == 2.0 ** (-i - 4)


def test_layer_rejects_increasing_profile():
    rising = mu.make_custom_profile(lambda t: np.clip(np.abs(t), 0, 1), support_radius=2.0)
    with pytest.raises(ValueError):
        mu.layer_decomposition(rising, 3)


def test_hyperbolic_symbol_compact_support_far_out():
    m = mu.make_bump_profile(1.0)
    sym = mu.hyperbolic_symbol(16.0, 1.0, m, 4)  # 16 |xi eta| > 2 off the axes
    from hypercross.grid import frequency_grids

    xi, eta = frequency_grids(4)
    off_axes = (xi != 0) & (eta != 0)
    assert np.abs(sym.values[off_axes]).max() == 0.0


def test_hyperbolic_symbol_beta_zero_depends_on_xi_only():
    m = mu.make_bump_profile(0.5)
    sym = mu.hyperbolic_symbol(0.3, 0.0, m, 4)
    assert np.abs(np.diff(sym.values, axis=1)).max() == 0.0
    from hypercross.grid import frequencies

    xi = frequencies(4)
    assert np.abs(sym.values[:, 0] - m(0.3 * np.abs(xi))).max() == 0.0


def test_hyperbolic_symbol_direct_values():
    m = mu.make_bump_profile(1.0)
    sym = mu.hyperbolic_symbol(1.0, 1.0, m, 4)
    n = 16
    assert sym.values[1, 1] == m(1.0)
    assert sym.values[2, 3] == m(6.0) == 0.0
    assert np.abs(sym.values).max() <= 1.0


def test_hyperbolic_symbol_negative_beta_zero_row():
    m = mu.make_bump_profile(1.0)
    sym = mu.hyperbolic_symbol(1.0, -1.0, m, 4)
    assert np.abs(sym.values[:, 0]).max() == 0.0  # eta = 0 convention


def test_hyperbolic_symbol_rejects_bad_lambda():
    m = mu.make_bump_profile(1.0)
    for lam in (0.0, -1.0, float("inf"), float("nan")):
        with pytest.raises(ValueError):
            mu.hyperbolic_symbol(lam, 1.0, m, 4)


def test_pi_beta_masks():
    from hypercross.grid import frequencies

    eta = frequencies(4)
    pos = mu.pi_beta_mask(1.0, 4)
    assert np.array_equal(pos.values[0, :], (np.abs(eta) <= 1).astype(float))
    neg = mu.pi_beta_mask(-1.0, 4)
    assert np.array_equal(neg.values[0, :], (np.abs(eta) >= 1).astype(float))
    assert neg.values[0, 0] == 0.0
    all_ones = mu.pi_beta_mask(0.0, 4)
    assert np.all(all_ones.values == 1.0)


def test_flat_radius():
    assert mu.flat_radius(mu.make_bump_profile(0.25)) == 0.25
    wide = mu.make_custom_profile(lambda t: np.where(np.abs(t) <= 3.0, 1.0, 0.0), 3.0)
    assert mu.flat_radius(wide) == 3.0


def test_symbol_export_real_part(tmp_path):
    from hypercross.grid import read_hxf1

    sym = mu.hyperbolic_symbol(0.5, 1.0, mu.make_bump_profile(1.0), 4)
    path = tmp_path / "sym.hxf1"
    mu.write_symbol_hxf1(path, sym)
    n_log2, arr = read_hxf1(path)
    assert n_log2 == 4
    assert np.array_equal(arr.real, sym.values)
    assert np.abs(arr.imag).max() == 0.0
