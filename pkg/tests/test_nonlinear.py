import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bubblestab import extension as ex, modal_control as mc, nonlinear as nl, presets, steklov
from bubblestab.config import BubbleConfig
from bubblestab.geometry import FrameField, enclosed_area, sobolev_norm

CFG = BubbleConfig(K=8, N_r=32, T=3.0, dt=0.05)


@pytest.fixture(scope="module")
def setup():
    P = steklov.assemble(CFG)
    spec = mc.mode_spectrum(P, CFG)
    law = mc.build_feedback(P, spec, 2 * mc.slowest_nonzero_rate(spec), CFG)
    return P, law, nl.Layout.from_config(CFG)


def still_flow(layout, pressure=0.0):
    K, N = layout.K, layout.N
    flow = {s: nl.SideFlow(np.zeros((K + 1, N + 1), complex), np.zeros((K + 1, N + 1), complex),
                           np.zeros((K + 1, N), complex)) for s in ("inner", "outer")}
    for f in flow.values():
        f.p[0] = pressure
    return flow


# --- pointwise algebra --------------------------------------------------------------------

@given(arrays(np.float64, (5, 2, 2), elements=st.floats(-3, 3)))
def test_cofactor_is_det_times_inverse_transpose(A):
    C = nl.cofactor(A)
    det = A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    assert np.allclose(np.swapaxes(C, -1, -2) @ A, det[:, None, None] * np.eye(2), atol=1e-12)


def test_transformed_stress_trivial_cases():
    rng = np.random.default_rng(0)
    gu = rng.normal(size=(4, 2, 2))
    p = rng.normal(size=4)
    I = np.broadcast_to(np.eye(2), gu.shape)
    plain = 0.3 * (gu + np.swapaxes(gu, -1, -2)) - p[:, None, None] * np.eye(2)
    assert np.allclose(nl.transformed_stress(gu, p, I, 0.3), plain)
    F = I + 0.1 * rng.normal(size=gu.shape)
    assert np.allclose(nl.transformed_stress(np.zeros_like(gu), p, F, 0.3), -p[:, None, None] * np.eye(2))


def test_transformed_stress_equals_physical_stress_pulled_back():
    # u~(y) = v(X~(y)) and p~(y) = q(X~(y)) must give sigma~ = sigma(v, q) at X~(y)
    Z = presets.ellipse(0.05, 8) + presets.mode(3, 0.02, 0.01, 8)
    E = ex.harmonic_extend(Z, CFG)
    nu = 0.7

    def v(x, y):
        return np.stack([np.sin(x) * np.cos(y) + x * y, x**2 - np.cos(x * y)], -1)

    def grad_v(x, y):
        G = np.empty(x.shape + (2, 2))
        G[..., 0, 0], G[..., 0, 1] = np.cos(x) * np.cos(y) + y, -np.sin(x) * np.sin(y) + x
        G[..., 1, 0], G[..., 1, 1] = 2 * x + y * np.sin(x * y), x * np.sin(x * y)
        return G

    def mapped(Y, side):
        r, t = np.hypot(Y[..., 0], Y[..., 1]), np.arctan2(Y[..., 1], Y[..., 0])
        d = np.array([E.evaluate([ri], [ti], side)[0][0, 0] for ri, ti in zip(r.ravel(), t.ravel())])
        return Y + d.reshape(Y.shape)

    h = 1e-5
    for side, r in (("inner", np.array([0.3, 0.7])), ("outer", np.array([1.2, 1.7]))):
        th = np.array([0.4, 2.0, 4.0])
        d, g = E.evaluate(r, th, side)
        R, TH = np.meshgrid(r, th, indexing="ij")
        Y = np.stack([R * np.cos(TH), R * np.sin(TH)], -1)
        X = Y + d
        grad_u = np.empty(g.shape)
        for j in range(2):
            step = np.zeros(2)
            step[j] = h
            Xp, Xm = mapped(Y + step, side), mapped(Y - step, side)
            grad_u[..., :, j] = (v(Xp[..., 0], Xp[..., 1]) - v(Xm[..., 0], Xm[..., 1])) / (2 * h)
        q = np.exp(X[..., 0]) * X[..., 1]
        got = nl.transformed_stress(grad_u, q, g + np.eye(2), nu)
        Gv = grad_v(X[..., 0], X[..., 1])
        ref = nu * (Gv + np.swapaxes(Gv, -1, -2)) - q[..., None, None] * np.eye(2)
        assert np.abs(got - ref).max() < 1e-8


# --- right-hand sides ----------------------------------------------------------------------

def test_steady_state_has_no_forcing(setup):
    _, _, layout = setup
    rhs = nl.assemble_rhs(FrameField.zeros(CFG.K), 0.0, still_flow(layout), layout, 0.1)
    for a in (rhs.F_inner, rhs.F_outer, rhs.H_inner, rhs.H_outer, rhs.G):
        assert np.abs(a).max() < 1e-15
    assert rhs.min_det == 1.0


def test_reference_geometry_gives_no_forcing_for_any_flow(setup):
    _, _, layout = setup
    rng = np.random.default_rng(2)
    flow = still_flow(layout)
    for f in flow.values():
        f.u_r[...] = rng.normal(size=f.u_r.shape)
        f.u_t[...] = rng.normal(size=f.u_t.shape)
        f.p[...] = rng.normal(size=f.p.shape)
    rhs = nl.assemble_rhs(FrameField.zeros(CFG.K), 0.0, flow, layout, 0.1)
    assert max(np.abs(a).max() for a in (rhs.F_inner, rhs.F_outer, rhs.H_inner, rhs.H_outer, rhs.G)) < 1e-13


def test_translated_circle_at_rest(setup):
    _, _, layout = setup
    rhs = nl.assemble_rhs(presets.translation(0.05, -0.02, CFG.K), 0.0, still_flow(layout), layout, 0.1)
    assert max(np.abs(a).max() for a in (rhs.F_inner, rhs.F_outer, rhs.H_inner, rhs.H_outer)) == 0
    assert np.abs(rhs.G).max() < 1e-14


def test_uniform_pressure_drops_out(setup):
    # Piola: div of the cofactor vanishes, so a constant pressure only leaves discretization error
    Z = presets.ellipse(0.05, 8) + presets.mode(3, 0.02, 0.01, 8)
    base = None
    errs = []
    for N in (32, 64):
        layout = nl.Layout.from_config(CFG.with_(N_r=N))
        rhs = nl.assemble_rhs(Z, 0.0, still_flow(layout, 1.0), layout, 0.1)
        ref = nl.assemble_rhs(Z, 0.0, still_flow(layout, 0.0), layout, 0.1)
        assert np.allclose(rhs.G, ref.G, atol=1e-13)
        errs.append(max(np.abs(rhs.F_inner).max(), np.abs(rhs.F_outer).max()))
        base = ref
    assert np.abs(base.H_inner).max() == 0
    assert errs[0] / errs[1] > 3.5


@pytest.mark.parametrize("shape", ["ellipse", "mixed"])
def test_quadratic_scaling(setup, shape):
    P, law, layout = setup
    norms = []
    for a in (1e-3, 2e-3):
        Z = presets.ellipse(a, CFG.K)
        if shape == "mixed":
            Z = Z + presets.mode(4, a, -0.5 * a, CFG.K) + presets.mode(1, 0.3 * a, 0.0, CFG.K)
        Z = nl.area_preserving(Z, CFG.R_s)
        norms.append(nl.nonlinearity_at_start(Z, P, law, CFG, layout).norm(layout))
    assert np.log2(norms[1] / norms[0]) == pytest.approx(2.0, abs=0.2)


def test_geometric_remainder_is_quadratic(setup):
    _, _, layout = setup
    Z = presets.ellipse(1.0, CFG.K) + presets.mode(3, 0.4, 0.2, CFG.K)
    r1 = np.abs(nl.geometric_remainder(Z * 1e-3, layout)).max()
    r2 = np.abs(nl.geometric_remainder(Z * 2e-3, layout)).max()
    assert np.log2(r2 / r1) == pytest.approx(2.0, abs=0.05)


def test_refusals(setup):
    P, law, layout = setup
    with pytest.raises(nl.WallContactError):
        nl.assemble_rhs(presets.translation(0.95, 0.0, CFG.K), 0.0, still_flow(layout), layout, 0.1)
    unit = presets.mode(3, 1.0, 0.0, CFG.K)
    thr = ex.folding_threshold(unit, CFG)
    with pytest.raises(ex.FoldingError):
        nl.assemble_rhs(unit * (1.05 * thr), 0.0, still_flow(layout), layout, 0.1)
    with pytest.raises(nl.SmallnessError):
        nl.stabilize_nonlinear(presets.ellipse(0.2, CFG.K), law, P, CFG)
    with pytest.raises(ValueError):
        nl.Layout.from_config(CFG, M=10)


# --- volume and Picard iteration -------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.floats(-0.05, 0.05), st.floats(-0.05, 0.05), st.integers(2, 6))
def test_area_preserving_initial_data(a, b, k):
    Z = presets.ellipse(a, CFG.K) + presets.mode(k, b, 0.5 * b, CFG.K)
    Zc = nl.area_preserving(Z, CFG.R_s)
    assert enclosed_area(Zc, 64, CFG.R_s) == pytest.approx(np.pi * CFG.R_s**2, rel=1e-13)
    assert np.array_equal(np.delete(Zc.coeffs, CFG.K, 0), np.delete(Z.coeffs, CFG.K, 0))


def test_identity_is_a_fixed_point(setup):
    P, law, _ = setup
    traj, rep = nl.stabilize_nonlinear(FrameField.zeros(CFG.K), law, P, CFG)
    assert rep.converged and rep.iterations == 1
    assert np.abs(traj.states).max() < 1e-15


def test_small_mode_two_contracts(setup):
    P, law, _ = setup
    X0 = presets.mode(2, 1e-3, 5e-4, CFG.K)
    traj, rep = nl.stabilize_nonlinear(X0, law, P, CFG, tol=1e-12)
    assert rep.converged
    assert all(r < 1 for r in rep.ratios)
    assert all(b < a for a, b in zip(rep.differences, rep.differences[1:]))
    assert rep.area_drift < 1e-9
    assert rep.min_det > 0.9
    assert rep.physical_control_l2.shape == traj.times.shape


def test_picard_step_reproduces_steady_state(setup):
    P, law, layout = setup
    Z0 = FrameField.zeros(CFG.K)
    forcing = nl.NodalForcing.zeros(CFG.n_steps, layout)
    traj = nl.evolve_with(Z0, P, law, CFG, forcing)
    out, forcing2, info = nl.picard_step(traj, forcing, Z0, P, law, layout)
    assert np.abs(out.states).max() < 1e-15
    assert np.abs(forcing2.G).max() < 1e-15 and np.abs(forcing2.lift).max() < 1e-15
    assert info["min_det"] == 1.0


def test_translation_converges_and_decays(setup):
    # the closed loop turns a pure translation into a decaying shape change, so the
    # quotient norm does not stay at round-off; the raw norm still decays at the target rate
    P, law, _ = setup
    cfg = CFG.with_(T=10.0)
    traj, rep = nl.stabilize_nonlinear(presets.translation(2e-3, 0.0, CFG.K), law, P, cfg, tol=1e-12)
    assert rep.converged
    assert rep.decay_rate >= 0.9 * law.lam
    assert rep.area_drift < 1e-9


def test_energy_audit_of_nonlinear_run_is_second_order(setup):
    P, law, _ = setup
    X0 = presets.ellipse(2e-3, CFG.K)
    res = []
    for dt in (0.1, 0.05):
        traj, rep = nl.stabilize_nonlinear(X0, law, P, CFG.with_(dt=dt, T=2.0), tol=1e-12)
        assert rep.converged
        res.append(np.abs(traj.diagnostics["energy_residual"]).max())
    assert 3.0 <= res[0] / res[1] <= 5.0


def test_report_text_lists_the_run(setup):
    P, law, _ = setup
    _, rep = nl.stabilize_nonlinear(presets.ellipse(1e-3, CFG.K), law, P, CFG.with_(T=1.0))
    text = rep.as_text()
    for key in ("converged: True", "contraction_ratios:", "C_hat:", "ball_radius:", "relative_area_drift:"):
        assert key in text
    assert rep.C_hat >= 1.0
    full = sobolev_norm(nl.area_preserving(presets.ellipse(1e-3, CFG.K), CFG.R_s), 2.0, CFG.R_s)
    assert rep.ball_radius == pytest.approx(2 * rep.C_hat * full, abs=1e-12)
    assert rep.initial_norm <= full
