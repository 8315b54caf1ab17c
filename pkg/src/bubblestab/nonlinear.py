"""Nonlinear interface problem on the fixed reference domains and its Picard closed loop.

The unknowns live on the reference disk and annulus through the harmonic extension
``X~ = Id + Z~``.  Written in the shifted variables, the flow satisfies the linear
two-phase Stokes problem with right-hand sides

* ``F = div(T)`` with ``T = s~(u, p) cof(grad X~) - s(u, p)`` (momentum),
* ``H = div((I - cof(grad X~))^T u)`` (continuity),
* ``G = [T e_r] + e^{lam t} (R(Z) - D Z)`` (interface),

where ``s~`` is the stress pulled back through the extension and ``R(Z)`` the exact
curvature-force remainder with its first-order part ``D Z`` removed.  Fields are stored
per Fourier mode on the staggered radial grids of the finite-difference Stokes solver:
velocities at integer nodes, pressures and ``T``, ``H`` at half nodes, ``F`` at interior
integer nodes.  Products are formed on an angular grid of ``M`` nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import BubbleConfig
from .evolve import SimTrajectory, _step_maps, decay_fit, simulate_linear
from .extension import DET_THRESHOLD, FoldingError, harmonic_extend, polar_deformation
from .geometry import (FrameField, analyze, curvature_force_remainder, curve_samples, enclosed_area,
                       frame_decompose, frame_reconstruct, laplace_beltrami_block, deformed_metric, remainder_linear_block,
                       sobolev_norm)
from .modal_control import FeedbackLaw
from .steklov import SteklovOperator
from .stokes_mode import RadialGrid, fd_operator

WALL_MARGIN = 0.05


class WallContactError(RuntimeError):
    pass


class BallExitError(RuntimeError):
    pass


class SmallnessError(ValueError):
    pass


@dataclass(frozen=True)
class Layout:
    """Discretization shared by all nonlinear evaluations."""
    cfg: BubbleConfig
    K: int
    N: int
    M: int
    inner: RadialGrid
    outer: RadialGrid

    @classmethod
    def from_config(cls, cfg: BubbleConfig, K: int | None = None, N: int | None = None,
                    M: int | None = None) -> "Layout":
        K = cfg.K if K is None else K
        N = cfg.N_r if N is None else N
        if M is None:
            M = 3 * (K + 2)
            M += M % 2
        if M < 2 * K + 4:
            raise ValueError(f"{M} angular nodes are too few for K={K}")
        return cls(cfg, K, N, M, RadialGrid.inner(cfg.R_s, N), RadialGrid.outer(cfg.R_s, cfg.R_out, N))

    def grid(self, side: str) -> RadialGrid:
        return self.inner if side == "inner" else self.outer


@dataclass
class SideFlow:
    """Mode coefficients (k = 0..K) of one subdomain's flow: velocities at nodes, pressure at half nodes."""
    u_r: np.ndarray   # (K+1, N+1)
    u_t: np.ndarray
    p: np.ndarray     # (K+1, N)


@dataclass
class RightHandSides:
    F_inner: np.ndarray   # (K+1, N+1, 2), zero at the end nodes
    F_outer: np.ndarray
    H_inner: np.ndarray   # (K+1, N)
    H_outer: np.ndarray
    G: np.ndarray         # (2K+1, 2) frame coefficients, modes -K..K
    min_det: float
    wall_gap: float

    def norm(self, layout: Layout) -> float:
        """Discrete L2 norm of (F, G, H) over both subdomains and the interface."""
        tot = 0.0
        for side, F, H in (("inner", self.F_inner, self.H_inner), ("outer", self.F_outer, self.H_outer)):
            g = layout.grid(side)
            w = np.ones(self.F_inner.shape[0]) * 2.0
            w[0] = 1.0  # modes k and -k both count
            tot += 2 * np.pi * g.h * np.sum(w[:, None] * g.r[None, :] * np.sum(np.abs(F) ** 2, axis=-1))
            tot += 2 * np.pi * g.h * np.sum(w[:, None] * g.r_half[None, :] * np.abs(H) ** 2)
        tot += 2 * np.pi * layout.cfg.R_s * np.sum(np.abs(self.G) ** 2)
        return float(np.sqrt(tot))


def cofactor(A: np.ndarray) -> np.ndarray:
    """Cofactor matrix of 2x2 blocks (linear in A)."""
    C = np.empty_like(A)
    C[..., 0, 0] = A[..., 1, 1]
    C[..., 0, 1] = -A[..., 1, 0]
    C[..., 1, 0] = -A[..., 0, 1]
    C[..., 1, 1] = A[..., 0, 0]
    return C


def transformed_stress(grad_u: np.ndarray, p: np.ndarray, F: np.ndarray, nu: float) -> np.ndarray:
    """``nu (grad_u F^-1 + (grad_u F^-1)^T) - p I`` pointwise; ``F`` is the deformation gradient."""
    B = grad_u @ np.linalg.inv(F)
    return nu * (B + np.swapaxes(B, -1, -2)) - p[..., None, None] * np.eye(2)


def _rings(c: np.ndarray, M: int) -> np.ndarray:
    spec = np.zeros((M // 2 + 1,) + c.shape[1:], dtype=complex)
    spec[: c.shape[0]] = c * M
    return np.fft.irfft(spec, n=M, axis=0)


def _modes(v: np.ndarray, K: int) -> np.ndarray:
    return np.fft.rfft(v, axis=0)[: K + 1] / v.shape[0]


def _full(c: np.ndarray) -> np.ndarray:
    """Modes 0..K -> -K..K using the reality condition."""
    return np.concatenate([np.conj(c[:0:-1]), c], axis=0)


def _grad_half(fl: SideFlow, g: RadialGrid, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar velocity gradient (modes, N, 2, 2) and pressure at half nodes."""
    ur, ut = fl.u_r, fl.u_t
    rh = g.r_half[None, :]
    urh, uth = 0.5 * (ur[:, 1:] + ur[:, :-1]), 0.5 * (ut[:, 1:] + ut[:, :-1])
    G = np.empty(ur[:, 1:].shape + (2, 2), dtype=complex)
    G[..., 0, 0] = (ur[:, 1:] - ur[:, :-1]) / g.h
    G[..., 1, 0] = (ut[:, 1:] - ut[:, :-1]) / g.h
    G[..., 0, 1] = (1j * k * urh - uth) / rh
    G[..., 1, 1] = (1j * k * uth + urh) / rh
    return G, fl.p


def _grad_interface(fl: SideFlow, g: RadialGrid, k: np.ndarray, inner: bool):
    """One-sided second-order velocity gradient and extrapolated pressure at the interface node."""
    ur, ut, p = fl.u_r, fl.u_t, fl.p
    if inner:
        d = lambda u: (3 * u[:, -1] - 4 * u[:, -2] + u[:, -3]) / (2 * g.h)
        u0r, u0t, r, pe = ur[:, -1], ut[:, -1], g.r[-1], 1.5 * p[:, -1] - 0.5 * p[:, -2]
    else:
        d = lambda u: (-3 * u[:, 0] + 4 * u[:, 1] - u[:, 2]) / (2 * g.h)
        u0r, u0t, r, pe = ur[:, 0], ut[:, 0], g.r[0], 1.5 * p[:, 0] - 0.5 * p[:, 1]
    kk = k[:, 0]
    G = np.empty((len(kk), 2, 2), dtype=complex)
    G[:, 0, 0], G[:, 1, 0] = d(ur), d(ut)
    G[:, 0, 1] = (1j * kk * u0r - u0t) / r
    G[:, 1, 1] = (1j * kk * u0t + u0r) / r
    return G, pe


def geometric_remainder(Z: FrameField, layout: Layout) -> np.ndarray:
    """Frame coefficients of the curvature-force remainder minus its first-order part."""
    cfg = layout.cfg
    R = frame_decompose(curvature_force_remainder(Z, layout.M, cfg.R_s, cfg.mu), Z.K).coeffs
    D = np.stack([remainder_linear_block(int(k), cfg.R_s, cfg.mu) for k in Z.modes])
    return R - np.einsum("kij,kj->ki", D, Z.coeffs)


def assemble_rhs(Z_hat: FrameField, t: float, flow: dict, layout: Layout, lam: float,
                 det_threshold: float = DET_THRESHOLD) -> RightHandSides:
    """Right-hand sides for one time sample.

    ``flow`` maps ``"inner"``/``"outer"`` to :class:`SideFlow` in shifted variables; the
    geometry uses the physical displacement ``e^{-lam t} Z_hat``.
    """
    cfg, K, M = layout.cfg, layout.K, layout.M
    Zp = Z_hat.resized(K) * np.exp(-lam * t)
    X = curve_samples(Zp, M, cfg.R_s)
    gap = float(cfg.R_out - np.hypot(X[:, 0], X[:, 1]).max())
    if gap < WALL_MARGIN * cfg.R_out:
        raise WallContactError(f"interface within {gap:.3g} of the wall at t={t:.4g}")
    E = harmonic_extend(Zp, cfg)
    k = np.arange(K + 1)[:, None]
    out, traction, dets = {}, {}, []
    for side in ("inner", "outer"):
        g, fl = layout.grid(side), flow[side]
        _, F_half = polar_deformation(E, g.r_half, M, side)
        _, F_node = polar_deformation(E, g.r, M, side)
        for Fd in (F_half, F_node):
            dets.append(float(np.min(Fd[..., 0, 0] * Fd[..., 1, 1] - Fd[..., 0, 1] * Fd[..., 1, 0])))
        if min(dets) < det_threshold:
            raise FoldingError(min(dets), det_threshold)

        # stress correction at half nodes
        Gu, p = _grad_half(fl, g, k)
        Gu, p = _rings(Gu, M), _rings(p, M)
        sig = cfg.nu * (Gu + np.swapaxes(Gu, -1, -2)) - p[..., None, None] * np.eye(2)
        T = transformed_stress(Gu, p, F_half, cfg.nu) @ cofactor(F_half) - sig
        T = _modes(T, K)
        Tn = 0.5 * (T[:, 1:] + T[:, :-1])
        dT = (T[:, 1:] - T[:, :-1]) / g.h
        r = g.r[1:-1][None, :]
        F = np.zeros((K + 1, g.N + 1, 2), dtype=complex)
        F[:, 1:-1, 0] = dT[..., 0, 0] + (1j * k * Tn[..., 0, 1] + Tn[..., 0, 0] - Tn[..., 1, 1]) / r
        F[:, 1:-1, 1] = dT[..., 1, 0] + (1j * k * Tn[..., 1, 1] + Tn[..., 0, 1] + Tn[..., 1, 0]) / r

        # continuity defect at half nodes
        u = _rings(np.stack([fl.u_r, fl.u_t], axis=-1), M)
        w = np.einsum("...ji,...j->...i", np.eye(2) - cofactor(F_node), u)
        w = _modes(w, K)
        H = ((g.r[1:] * w[:, 1:, 0] - g.r[:-1] * w[:, :-1, 0]) / g.h
             + 0.5j * k * (w[:, 1:, 1] + w[:, :-1, 1])) / g.r_half[None, :]
        out[side] = (F, H)

        # interface traction of the correction
        Gi, pi = _grad_interface(fl, g, k, inner=(side == "inner"))
        Gi, pi = _rings(Gi, M), _rings(pi, M)
        Fi = F_node[:, -1] if side == "inner" else F_node[:, 0]
        Ti = transformed_stress(Gi, pi, Fi, cfg.nu) @ cofactor(Fi) - (
            cfg.nu * (Gi + np.swapaxes(Gi, -1, -2)) - pi[..., None, None] * np.eye(2))
        traction[side] = analyze(Ti[..., :, 0], K)
    G = traction["outer"] - traction["inner"] + np.exp(lam * t) * geometric_remainder(Zp, layout)
    return RightHandSides(out["inner"][0], out["outer"][0], out["inner"][1], out["outer"][1], G,
                          min(dets), gap)


# ---------------------------------------------------------------------------
# batched Stokes solves over a whole trajectory


@dataclass
class NodalForcing:
    """Nonlinear data at every time node (index 0..n), in shifted variables."""
    F_inner: np.ndarray   # (n+1, K+1, N+1, 2)
    F_outer: np.ndarray
    H_inner: np.ndarray   # (n+1, K+1, N)
    H_outer: np.ndarray
    G: np.ndarray         # (n+1, 2K+1, 2)
    lift: np.ndarray      # (n+1, 2K+1, 2) traction jumps of the lifting solves
    flux: np.ndarray      # (n+1,) mode-0 normal interface velocity

    @classmethod
    def zeros(cls, n: int, layout: Layout) -> "NodalForcing":
        K, N = layout.K, layout.N
        z = lambda *s: np.zeros(s, dtype=complex)
        return cls(z(n + 1, K + 1, N + 1, 2), z(n + 1, K + 1, N + 1, 2), z(n + 1, K + 1, N),
                   z(n + 1, K + 1, N), z(n + 1, 2 * K + 1, 2), z(n + 1, 2 * K + 1, 2), np.zeros(n + 1))

    def velocity(self, K: int) -> np.ndarray:
        V = np.zeros(self.G.shape, dtype=complex)
        V[:, K, 0] = self.flux
        return V


def compatible_flux(H_inner_mode0: np.ndarray, layout: Layout) -> np.ndarray:
    """Mode-0 normal interface velocity balancing the net continuity defect in the disk."""
    g = layout.inner
    return np.real(np.sum(g.r_half * g.h * H_inner_mode0, axis=-1)) / layout.cfg.R_s


def flow_fields(traj: SimTrajectory, rates: np.ndarray, nl: NodalForcing, P: SteklovOperator,
                law: FeedbackLaw, layout: Layout) -> list[dict]:
    """Dirichlet Stokes solves with interface data ``rates - lam Z`` at every node.

    The mode-0 pressure offset between the phases is fixed by the normal traction balance.
    """
    cfg, K, N = layout.cfg, layout.K, layout.N
    n1 = traj.states.shape[0]
    data = rates - traj.lam * traj.states
    Z = traj.states
    L = np.stack([laplace_beltrami_block(kk, cfg.R_s) for kk in range(-K, K + 1)])
    G_total = cfg.mu * np.einsum("kij,nkj->nki", L, Z) + traj.controls + nl.G
    sides = {s: SideFlow(np.zeros((n1, K + 1, N + 1), complex), np.zeros((n1, K + 1, N + 1), complex),
                         np.zeros((n1, K + 1, N), complex)) for s in ("inner", "outer")}
    for kk in range(K + 1):
        op = fd_operator(kk, cfg.R_s, cfg.R_out, cfg.nu, N, True)
        b = op.rhs_batch(n1, dirichlet=data[:, K + kk], force_inner=nl.F_inner[:, kk], force_outer=nl.F_outer[:, kk],
                         div_inner=nl.H_inner[:, kk], div_outer=nl.H_outer[:, kk])
        x = op.solve_batch(b)
        if kk == 0:
            jump = op.traction_batch(x, False)[:, 0] - op.traction_batch(x, True)[:, 0]
            x[op.si.p] += (-G_total[:, K, 0] - jump)[None, :]
        for name, s in (("inner", op.si), ("outer", op.so)):
            sides[name].u_r[:, kk] = x[s.ur].T
            sides[name].u_t[:, kk] = x[s.ut].T
            sides[name].p[:, kk] = x[s.p].T
    return [{name: SideFlow(f.u_r[i], f.u_t[i], f.p[i]) for name, f in sides.items()} for i in range(n1)]


def lifting(nl: NodalForcing, layout: Layout) -> None:
    """Fill ``nl.lift`` and ``nl.flux`` from the forced solves with homogeneous interface data."""
    cfg, K, N = layout.cfg, layout.K, layout.N
    n1 = nl.G.shape[0]
    nl.flux = compatible_flux(nl.H_inner[:, 0], layout)
    for kk in range(K + 1):
        op = fd_operator(kk, cfg.R_s, cfg.R_out, cfg.nu, N, True)
        d = np.zeros((n1, 2), dtype=complex)
        if kk == 0:
            d[:, 0] = nl.flux
        b = op.rhs_batch(n1, dirichlet=d, force_inner=nl.F_inner[:, kk], force_outer=nl.F_outer[:, kk],
                         div_inner=nl.H_inner[:, kk], div_outer=nl.H_outer[:, kk])
        x = op.solve_batch(b)
        jump = op.traction_batch(x, False) - op.traction_batch(x, True)
        nl.lift[:, K + kk] = jump
        if kk:
            nl.lift[:, K - kk] = np.conj(jump)


def nodal_rates(traj: SimTrajectory, nl: NodalForcing) -> np.ndarray:
    Z = traj.states
    out = np.einsum("kij,nkj->nki", traj.generator, Z)
    out += np.einsum("kij,nkj->nki", traj.steklov, nl.G + nl.lift)
    return out + nl.velocity(traj.K)


def _step_average(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x[1:] + x[:-1])


def evolve_with(Z0: FrameField, P: SteklovOperator, law: FeedbackLaw, cfg: BubbleConfig,
                nl: NodalForcing) -> SimTrajectory:
    return simulate_linear(Z0, P, cfg, law, shifted=True, G_ext=_step_average(nl.G),
                           lifted=_step_average(nl.lift), velocity_forcing=_step_average(nl.velocity(P.K)),
                           allow_volume=True)


def picard_step(traj: SimTrajectory, nl_prev: NodalForcing, Z0: FrameField, P: SteklovOperator,
                law: FeedbackLaw, layout: Layout) -> tuple[SimTrajectory, NodalForcing, dict]:
    """One application of the fixed-point map: flow from the input trajectory, nonlinear data,
    lifting solves, then the stabilized linear evolution."""
    cfg = layout.cfg
    rates = nodal_rates(traj, nl_prev)
    flows = flow_fields(traj, rates, nl_prev, P, law, layout)
    nl = NodalForcing.zeros(len(traj.times) - 1, layout)
    dets, gaps = [], []
    for i, t in enumerate(traj.times):
        rhs = assemble_rhs(traj.state(i), float(t), flows[i], layout, traj.lam)
        nl.F_inner[i], nl.F_outer[i] = rhs.F_inner, rhs.F_outer
        nl.H_inner[i], nl.H_outer[i] = rhs.H_inner, rhs.H_outer
        nl.G[i] = rhs.G
        dets.append(rhs.min_det)
        gaps.append(rhs.wall_gap)
    lifting(nl, layout)
    out = evolve_with(Z0, P, law, cfg, nl)
    return out, nl, {"min_det": min(dets), "wall_gap": min(gaps)}


def linear_solution_constant(traj: SimTrajectory) -> float:
    """Largest gain of the closed-loop mode propagators over the horizon (same for any Sobolev weight).

    The volume direction is left out: it carries no dynamics of its own and only grows in the
    shifted variable when area is not conserved.
    """
    E, _ = _step_maps(traj.generator, traj.dt)
    Pk = np.broadcast_to(np.eye(2, dtype=complex), E.shape).copy()
    K = traj.K
    best = 1.0
    for _ in range(len(traj.times) - 1):
        Pk = np.einsum("kij,kjl->kil", E, Pk)
        Pk0 = Pk[K].copy()
        Pk[K, :, 0] = 0.0
        best = max(best, float(np.linalg.norm(Pk, 2, axis=(1, 2)).max()))
        Pk[K] = Pk0
    return best


def area_preserving(Z: FrameField, R_s: float, M: int | None = None) -> FrameField:
    """Adjust the mode-0 normal coefficient so the enclosed area equals ``pi R_s^2`` exactly."""
    M = M or 4 * (Z.K + 2)
    base = Z.coeffs.copy()
    base[Z.K, 0] = 0.0

    def area(d):
        c = base.copy()
        c[Z.K, 0] = d
        return enclosed_area(FrameField(c), M, R_s)

    # area is exactly quadratic in a uniform normal offset
    a0, ap, am = area(0.0), area(1e-3), area(-1e-3)
    qa = (ap + am - 2 * a0) / 2e-6
    qb = (ap - am) / 2e-3
    qc = a0 - np.pi * R_s**2
    disc = np.sqrt(qb * qb - 4 * qa * qc)
    d = (-qb + disc) / (2 * qa) if qb > 0 else (-qb - disc) / (2 * qa)
    base[Z.K, 0] = d
    return FrameField(base)


@dataclass
class NonlinearReport:
    converged: bool
    iterations: int
    differences: list
    ratios: list
    C_hat: float
    ball_radius: float
    initial_norm: float
    decay_rate: float = float("nan")
    area_drift: float = float("nan")
    min_det: float = float("nan")
    wall_gap: float = float("nan")
    physical_control_l2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    message: str = ""

    def as_text(self) -> str:
        lines = [
            f"converged: {self.converged}",
            f"iterations: {self.iterations}",
            "differences: " + " ".join("%.3e" % d for d in self.differences),
            "contraction_ratios: " + " ".join("%.4f" % r for r in self.ratios),
            f"C_hat: {self.C_hat:.6g}",
            f"ball_radius: {self.ball_radius:.6g}",
            f"initial_quotient_h2: {self.initial_norm:.6g}",
            f"decay_rate: {self.decay_rate:.6g}",
            f"relative_area_drift: {self.area_drift:.3e}",
            f"min_det: {self.min_det:.6g}",
            f"min_wall_gap: {self.wall_gap:.6g}",
        ]
        if self.message:
            lines.append(f"message: {self.message}")
        return "\n".join(lines) + "\n"


def physical_control(traj: SimTrajectory, R_s: float, M: int) -> np.ndarray:
    """L2 norm over the deformed interface of the applied control, per time sample.

    The reference-coordinate control ``K Z`` is rescaled by ``R_s / |dX/dtheta|`` (the inverse
    metric factor) and measured with the deformed arclength.
    """
    phys = traj.physical_states()
    w = np.exp(-traj.lam * traj.times) if traj.shifted else np.ones_like(traj.times)
    out = []
    for Z, g in zip(phys, traj.controls * w[:, None, None]):
        Zf = FrameField(Z)
        metric, inv_sqrt = deformed_metric(Zf, M, R_s)
        gv = frame_reconstruct(FrameField(g), M) * (R_s * inv_sqrt)[:, None]
        ds = np.sqrt(metric) * 2 * np.pi / M
        out.append(np.sqrt(np.sum(np.sum(gv**2, axis=1) * ds)))
    return np.array(out)


def stabilize_nonlinear(X0: FrameField, law: FeedbackLaw, P: SteklovOperator, cfg: BubbleConfig,
                        tol: float = 1e-8, max_iter: int = 30, smallness: float = 0.1,
                        layout: Layout | None = None,
                        preserve_area: bool = True) -> tuple[SimTrajectory, NonlinearReport]:
    """Picard iteration for the closed-loop nonlinear problem starting from ``X0 = Id + Z0``."""
    layout = layout or Layout.from_config(cfg, K=P.K)
    Z0 = X0.resized(P.K)
    if preserve_area:
        Z0 = area_preserving(Z0, cfg.R_s)
    norm0 = sobolev_norm(Z0, 2.0, cfg.R_s, quotient=True)
    if norm0 > smallness:
        raise SmallnessError(f"initial quotient H2 norm {norm0:.3g} exceeds the smallness threshold {smallness}")
    n = cfg.n_steps
    nl = NodalForcing.zeros(n, layout)
    traj = evolve_with(Z0, P, law, cfg, nl)
    C_hat = linear_solution_constant(traj)
    # C_hat bounds the full propagator, and the feedback does not keep rigid motions rigid,
    # so the ball lives in the full norm even though smallness is judged modulo rigid motions
    radius = 2.0 * C_hat * sobolev_norm(Z0, 2.0, cfg.R_s) + 1e-12
    diffs, ratios = [], []
    report = NonlinearReport(False, 0, diffs, ratios, C_hat, radius, norm0)
    dets, gaps = [], []
    for it in range(1, max_iter + 1):
        sup = _shifted_sup(traj, cfg.R_s)
        if sup > radius:
            raise BallExitError(f"iterate {it - 1} left the ball: sup norm {sup:.3g} > radius {radius:.3g}")
        new, nl, info = picard_step(traj, nl, Z0, P, law, layout)
        dets.append(info["min_det"])
        gaps.append(info["wall_gap"])
        d = float(np.abs(new.states - traj.states).max())
        if diffs and diffs[-1] > 0:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        traj = new
        report.iterations = it
        if d <= tol:
            report.converged = True
            break
    else:
        report.message = "no convergence within the iteration limit; see contraction ratios"
    areas = np.array([enclosed_area(FrameField(c), layout.M, cfg.R_s) for c in traj.physical_states()])
    report.area_drift = float(np.abs(areas - areas[0]).max() / areas[0])
    report.min_det = min(dets) if dets else 1.0
    report.wall_gap = min(gaps) if gaps else cfg.R_out - cfg.R_s
    try:
        report.decay_rate = decay_fit(traj, "raw")
    except ValueError:
        report.decay_rate = float("nan")
    report.physical_control_l2 = physical_control(traj, cfg.R_s, layout.M)
    return traj, report


def _shifted_sup(traj: SimTrajectory, R_s: float) -> float:
    return max(sobolev_norm(FrameField(c), 2.0, R_s) for c in traj.states)


def nonlinearity_at_start(Z_hat: FrameField, P: SteklovOperator, law: FeedbackLaw, cfg: BubbleConfig,
                          layout: Layout | None = None) -> RightHandSides:
    """(F, G, H) at t = 0 for the flow driven by the homogeneous closed loop from ``Z_hat``."""
    layout = layout or Layout.from_config(cfg, K=P.K)
    traj = simulate_linear(Z_hat.resized(P.K), P, cfg, law, shifted=True, allow_volume=True, T=cfg.dt)
    nl = NodalForcing.zeros(1, layout)
    flows = flow_fields(traj, nodal_rates(traj, nl), nl, P, law, layout)
    return assemble_rhs(traj.state(0), 0.0, flows[0], layout, traj.lam)
