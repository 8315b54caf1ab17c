import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bubblestab import extension as ex, presets
from bubblestab.config import BubbleConfig
from bubblestab.geometry import FrameField

CFG = BubbleConfig(K=8)
K = CFG.K


def real_field(raw):
    return FrameField.from_modes(K, {k: (complex(raw[k, 0], raw[k, 1]), complex(raw[k, 2], raw[k, 3]))
                                     for k in range(1, K + 1)} | {0: (raw[0, 0], raw[0, 2])})


fields = arrays(np.float64, (K + 1, 4), elements=st.floats(-0.02, 0.02)).map(real_field)


def disk_min_det(k: int, a: float) -> float:
    """Minimum Jacobian of the disk extension of a normal mode ``a cos(k theta)``, unit radius.

    The displacement is ``(a/2)(z^{k+1} + zbar^{k-1})`` in complex form, so
    ``det = |1 + (a/2)(k+1) z^k|^2 - |(a/2)(k-1) zbar^{k-2}|^2``, smallest on the circle at ``z^k = -1``.
    """
    return (1 - a * (k + 1) / 2) ** 2 - (a * (k - 1) / 2) ** 2


def test_zero_displacement():
    E = ex.harmonic_extend(FrameField.zeros(K), CFG)
    for side in ("inner", "outer"):
        d, g = E.grid(side)
        assert np.abs(d).max() == 0 and np.abs(g).max() == 0
    assert ex.min_det(E) == 1.0


def test_translation_extends_as_constant_inside():
    Z = presets.translation(0.1, -0.05, K)
    E = ex.harmonic_extend(Z, CFG)
    d, g = E.grid("inner")
    assert np.allclose(d, [0.1, -0.05], atol=1e-15)
    assert np.abs(g).max() < 1e-15
    assert ex.boundary_errors(E, Z)["wall"] < 1e-15


@pytest.mark.parametrize("m", [0, 1, 2, 5, -3])
def test_annulus_profile_coefficients(m):
    Rs, Ro = 0.8, 2.0
    a, b = ex._annulus_coeffs(m, Rs, Ro)
    prof = (lambda r: a + b * np.log(r)) if m == 0 else (lambda r: a * r ** abs(m) + b * r ** -abs(m))
    assert prof(Rs) == pytest.approx(1.0, abs=1e-14)
    assert prof(Ro) == pytest.approx(0.0, abs=1e-14)


def test_annulus_mode_two_exact():
    a, b = ex._annulus_coeffs(2, 1.0, 2.0)
    assert a == pytest.approx(-1 / 15, abs=1e-15) and b == pytest.approx(16 / 15, abs=1e-15)


@settings(max_examples=25, deadline=None)
@given(fields)
def test_boundary_data_reproduced(Z):
    E = ex.harmonic_extend(Z, CFG)
    errs = ex.boundary_errors(E, Z)
    assert max(errs.values()) < 1e-14
    assert ex.harmonicity_residual(E) < 1e-12
    assert ex.maximum_principle(E)


@settings(max_examples=15, deadline=None)
@given(fields, fields, st.floats(-3, 3))
def test_extension_is_linear(Z1, Z2, c):
    E = lambda Z: ex.harmonic_extend(Z, CFG).grid("outer")[0]
    assert np.allclose(E(Z1 + c * Z2), E(Z1) + c * E(Z2), atol=1e-14)


def test_gradient_matches_finite_differences():
    Z = presets.ellipse(0.05, K) + presets.mode(3, 0.02, 0.01, K)
    E = ex.harmonic_extend(Z, CFG)
    h = 1e-6
    for side, r0 in (("inner", 0.6), ("outer", 1.4)):
        th = np.array([0.3, 2.1])
        x, y = r0 * np.cos(th), r0 * np.sin(th)
        _, g = E.evaluate([r0], th, side)
        for j in range(2):
            vals = []
            for sgn in (1, -1):
                rr = np.hypot(x + sgn * h * (j == 0), y + sgn * h * (j == 1))
                tt = np.arctan2(y + sgn * h * (j == 1), x + sgn * h * (j == 0))
                vals.append(np.stack([E.evaluate([r], [t], side)[0][0, 0] for r, t in zip(rr, tt)]))
            fd = (vals[0] - vals[1]) / (2 * h)
            assert np.allclose(g[0, :, :, j], fd, atol=1e-8)


def test_polar_deformation_matches_pointwise_evaluation():
    Z = presets.ellipse(0.04, K) + presets.mode(5, 0.01, -0.02, K)
    E = ex.harmonic_extend(Z, CFG, M=48)
    for side, r in (("inner", np.linspace(0.1, 1.0, 7)), ("outer", np.linspace(1.0, 2.0, 7))):
        disp, Fp = ex.polar_deformation(E, r, 48, side)
        d, g = E.evaluate(r, E.theta, side)
        n = np.stack([np.cos(E.theta), np.sin(E.theta)], -1)
        t = np.stack([-np.sin(E.theta), np.cos(E.theta)], -1)
        Q = np.stack([n, t], -1)                    # columns e_r, e_theta
        polar = np.einsum("mji,rmjk,mkl->mril", Q, g, Q) + np.eye(2)
        assert np.allclose(disp, np.swapaxes(d, 0, 1), atol=1e-15)
        assert np.allclose(Fp, polar, atol=1e-14)


@pytest.mark.parametrize("k", [2, 3, 8])
def test_disk_jacobian_closed_form(k):
    a = 0.05
    E = ex.harmonic_extend(presets.mode(k, a, 0.0, K), CFG, M=1024, n_r=65)
    assert E.jacobian_det("inner").min() == pytest.approx(disk_min_det(k, a), abs=1e-12)


def test_single_mode_amplitude_keeps_det_above_half():
    dense = dict(M=1024, n_r=65)
    for k in range(1, 9):
        for an, at in ((0.05, 0.0), (0.0, 0.05)):
            assert ex.min_det(ex.harmonic_extend(presets.mode(k, an, at, K), CFG, **dense)) >= 0.5


def test_folding_threshold_brackets_sign_change():
    unit = presets.mode(3, 1.0, 0.0, K)
    thr = ex.folding_threshold(unit, CFG, tol=1e-9)
    # the disk bound vanishes at 1 - 2a = a, i.e. a = 1/3, but the annulus folds first
    assert thr < 1 / 3
    assert ex.min_det(ex.harmonic_extend(unit * (0.999 * thr), CFG)) > 0
    assert ex.min_det(ex.harmonic_extend(unit * (1.001 * thr), CFG)) < 0


def test_inverse_jacobian_and_folding_refusal():
    Z = presets.mode(3, 0.05, 0.02, K)
    E = ex.harmonic_extend(Z, CFG)
    for side in ("inner", "outer"):
        info = ex.inverse_jacobian(E, side)
        F = E.grid(side)[1] + np.eye(2)
        assert np.allclose(info["inverse"] @ F, np.eye(2), atol=1e-13)
        assert info["bound_holds"]
    with pytest.raises(ex.FoldingError) as exc:
        ex.inverse_jacobian(ex.harmonic_extend(Z * 10, CFG), "inner")
    assert exc.value.min_det < ex.DET_THRESHOLD


def test_annulus_circles_stay_nested():
    assert ex.winding_check(ex.harmonic_extend(presets.ellipse(0.1, K), CFG))
    assert not ex.winding_check(ex.harmonic_extend(presets.mode(6, 0.6, 0.0, K), CFG))
