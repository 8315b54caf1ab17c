"""Exact per-mode time stepping of the linear interface dynamics, energy audits and decay fits.

Each Fourier mode evolves independently under a constant 2x2 generator, so one step is
``Z <- E Z + Phi f`` with ``E = exp(dt M)`` and ``Phi = int_0^dt exp(s M) ds``; the forcing
``f`` is held constant over the step.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .config import BubbleConfig
from .geometry import FrameField, laplace_beltrami_block, rigid_project, sobolev_norm, gradient_norm_sq
from .modal_control import FeedbackLaw
from .steklov import SteklovOperator


class VolumeModeError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite state at step {step}")


class UndefinedRateError(ValueError):
    pass


def _laplacian_blocks(K: int, R_s: float) -> np.ndarray:
    return np.stack([laplace_beltrami_block(k, R_s) for k in range(-K, K + 1)])


def _step_maps(M: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """``exp(dt M)`` and ``int_0^dt exp(sM) ds`` for each 2x2 block, via one 4x4 exponential."""
    E = np.empty_like(M)
    Phi = np.empty_like(M)
    aug = np.zeros((4, 4), dtype=complex)
    aug[:2, 2:] = np.eye(2)
    for i, m in enumerate(M):
        aug[:2, :2] = m
        X = sla.expm(dt * aug)
        E[i], Phi[i] = X[:2, :2], X[:2, 2:]
    return E, Phi


def _as_series(x, n: int, K: int) -> np.ndarray | None:
    """Normalize forcing input to an ``(n, 2K+1, 2)`` array (None stays None)."""
    if x is None:
        return None
    if isinstance(x, FrameField):
        return np.broadcast_to(x.resized(K).coeffs, (n, 2 * K + 1, 2)).copy()
    arr = np.asarray(x, dtype=complex)
    if arr.ndim == 2:
        arr = np.broadcast_to(arr, (n,) + arr.shape)
    if arr.shape != (n, 2 * K + 1, 2):
        raise ValueError(f"forcing must have shape ({n}, {2 * K + 1}, 2), got {arr.shape}")
    return arr


@dataclass
class SimTrajectory:
    times: np.ndarray
    states: np.ndarray               # (n+1, 2K+1, 2)
    forcing: np.ndarray              # (n, 2K+1, 2) traction jumps per step, same variables as states
    velocity_forcing: np.ndarray     # (n, 2K+1, 2) additive interface velocity per step
    gains: np.ndarray                # (2K+1, 2, 2) feedback blocks (zeros for open loop)
    generator: np.ndarray            # (2K+1, 2, 2) blocks of the evolution matrix actually used
    steklov: np.ndarray              # (2K+1, 2, 2)
    shifted: bool
    lam: float
    R_s: float
    mu: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return (self.states.shape[1] - 1) // 2

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def state(self, j: int) -> FrameField:
        return FrameField(self.states[j])

    @property
    def controls(self) -> np.ndarray:
        return np.einsum("kij,nkj->nki", self.gains, self.states)

    def physical_states(self) -> np.ndarray:
        if not self.shifted:
            return self.states
        return self.states * np.exp(-self.lam * self.times)[:, None, None]

    def rates(self) -> np.ndarray:
        """Time derivative of the stored variable at ``times[:-1]`` (right limits of the forcing)."""
        Z = self.states[:-1]
        out = np.einsum("kij,nkj->nki", self.generator, Z)
        out += np.einsum("kij,nkj->nki", self.steklov, self.forcing)
        return out + self.velocity_forcing


def simulate_linear(Z0: FrameField, P: SteklovOperator, cfg: BubbleConfig,
                    law: FeedbackLaw | None = None, *, shifted: bool | None = None,
                    G_ext=None, lifted=None, velocity_forcing=None,
                    allow_volume: bool = False, dt: float | None = None,
                    T: float | None = None) -> SimTrajectory:
    """Advance ``Z' = (A + P K [+ lam I]) Z + P (G_ext + lifted) + velocity_forcing``.

    With a feedback law the run is in the shifted variable ``e^{lam t} Z`` unless
    ``shifted=False``; open-loop runs default to physical variables. Forcing arguments
    are a FrameField (constant) or an ``(n_steps, 2K+1, 2)`` array (piecewise constant).
    """
    dt = cfg.dt if dt is None else dt
    T = cfg.T if T is None else T
    n = max(1, int(round(T / dt)))
    K = P.K
    if shifted is None:
        shifted = law is not None
    lam = law.lam if law is not None else cfg.lam
    Z = Z0.resized(K).coeffs.astype(complex)
    if not allow_volume and abs(Z[K, 0]) > 1e-14 * max(1.0, np.abs(Z).max()):
        raise VolumeModeError("initial state has a mode-0 normal component; project it out first")

    Pb = P.full_blocks()
    gains = law.full_blocks() if law is not None else np.zeros_like(Pb)
    if law is not None and law.K != K:
        raise ValueError(f"feedback law has K={law.K}, operator has K={K}")
    M = cfg.mu * np.einsum("kij,kjl->kil", Pb, _laplacian_blocks(K, P.R_s))
    M = M + np.einsum("kij,kjl->kil", Pb, gains)
    if shifted:
        M = M + lam * np.eye(2)
    E, Phi = _step_maps(M, dt)

    G = np.zeros((n, 2 * K + 1, 2), dtype=complex)
    for extra in (G_ext, lifted):
        s = _as_series(extra, n, K)
        if s is not None:
            G += s
    V = _as_series(velocity_forcing, n, K)
    if V is None:
        V = np.zeros_like(G)
    drive = np.einsum("kij,nkj->nki", Pb, G) + V

    states = np.empty((n + 1, 2 * K + 1, 2), dtype=complex)
    states[0] = Z
    for j in range(n):
        Z = np.einsum("kij,kj->ki", E, Z) + np.einsum("kij,kj->ki", Phi, drive[j])
        if not np.all(np.isfinite(Z)):
            raise DivergenceError(j + 1)
        states[j + 1] = Z
    times = dt * np.arange(n + 1)
    traj = SimTrajectory(times, states, G, V, gains, M, Pb, shifted, lam, P.R_s, cfg.mu)
    traj.diagnostics = _diagnostics(traj)
    return traj


def _diagnostics(traj: SimTrajectory) -> dict:
    phys = traj.physical_states()
    R = traj.R_s
    fields_ = [FrameField(c) for c in phys]
    return {
        "quotient_h2": np.array([sobolev_norm(f, 2.0, R, quotient=True) for f in fields_]),
        "raw_h2": np.array([sobolev_norm(f, 2.0, R) for f in fields_]),
        "grad_sq": np.array([gradient_norm_sq(f, R) for f in fields_]),
        "control_l2": np.array([sobolev_norm(FrameField(c), 0.0, R) for c in traj.controls]),
        "energy_residual": energy_audit(traj),
    }


def _pairing(R_s: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Real arclength pairing per time sample; arrays shaped (n, 2K+1, 2)."""
    return 2 * np.pi * R_s * np.real(np.sum(np.conj(a) * b, axis=(1, 2)))


def energy_audit(traj: SimTrajectory) -> np.ndarray:
    """Per-step imbalance of the energy identity in physical variables.

    ``(mu/2) d/dt |grad Z|^2 + <G, P G> - <g, P G> = -mu <Delta Z, c>`` where ``G = mu Delta Z + g``
    is the traction jump, ``g`` the applied (feedback plus external) jump and ``c`` an additive
    interface velocity. Everything is evaluated at step midpoints, so the residual is O(dt^2).
    """
    w = np.exp(-traj.lam * traj.times) if traj.shifted else np.ones_like(traj.times)
    Z = traj.states * w[:, None, None]
    tm = 0.5 * (traj.times[1:] + traj.times[:-1])
    wm = np.exp(-traj.lam * tm) if traj.shifted else np.ones_like(tm)
    Zm = 0.5 * (Z[1:] + Z[:-1])
    L = _laplacian_blocks(traj.K, traj.R_s)
    grad = np.array([gradient_norm_sq(FrameField(z), traj.R_s) for z in Z])
    g = np.einsum("kij,nkj->nki", traj.gains, Zm) + traj.forcing * wm[:, None, None]
    LZ = np.einsum("kij,nkj->nki", L, Zm)
    Gm = traj.mu * LZ + g
    u = np.einsum("kij,nkj->nki", traj.steklov, Gm)
    c = traj.velocity_forcing * wm[:, None, None]
    return (0.5 * traj.mu * np.diff(grad) / traj.dt + _pairing(traj.R_s, Gm, u) - _pairing(traj.R_s, g, u)
            + traj.mu * _pairing(traj.R_s, LZ, c))


def physical_norm(traj: SimTrajectory, norm: str = "raw", s: float = 2.0) -> np.ndarray:
    if norm not in ("raw", "quotient"):
        raise ValueError("norm must be 'raw' or 'quotient'")
    return np.array([sobolev_norm(FrameField(c), s, traj.R_s, quotient=(norm == "quotient"))
                     for c in traj.physical_states()])


def decay_fit(traj: SimTrajectory, norm: str = "raw", floor: float = 1e-12) -> float:
    """Least-squares exponential decay rate of the physical norm (positive means decaying)."""
    y = physical_norm(traj, norm)
    if len(y) < 10:
        raise UndefinedRateError(f"need at least 10 samples, got {len(y)}")
    if y[0] == 0.0:
        raise UndefinedRateError("zero initial norm")
    keep = y > floor
    if keep.sum() < 2:
        raise UndefinedRateError("norm below the floor at almost every sample")
    slope = np.polyfit(traj.times[keep], np.log(y[keep]), 1)[0]
    return float(-slope)


def weighted_solution_norm(traj: SimTrajectory) -> float:
    """Discrete ``L2(0,T; H^{5/2}) cap H^1(0,T; H^{3/2})`` norm of the shifted quotient state."""
    w = np.exp(traj.lam * traj.times) if not traj.shifted else np.ones_like(traj.times)
    Zh = traj.states * w[:, None, None]
    q = [rigid_project(FrameField(c)) for c in Zh]
    a = np.array([sobolev_norm(f, 2.5, traj.R_s) ** 2 for f in q])
    b = np.array([sobolev_norm(f, 1.5, traj.R_s) ** 2 for f in q])
    dq = np.diff(np.stack([f.coeffs for f in q]), axis=0) / traj.dt
    c = np.array([sobolev_norm(FrameField(d), 1.5, traj.R_s) ** 2 for d in dq])
    integral = np.trapezoid(a + b, traj.times) + np.sum(c) * traj.dt
    return float(np.sqrt(integral))


def csv_text(traj: SimTrajectory, fingerprint: str, modes=None) -> str:
    modes = range(traj.K + 1) if modes is None else modes
    modes = list(modes)
    phys = traj.physical_states()
    d = traj.diagnostics
    buf = io.StringIO()
    variable = "shifted" if traj.shifted else "physical"
    buf.write(f"# bubblestab trajectory fingerprint={fingerprint} variable={variable} lam={traj.lam!r}\n")
    cols = ["t"] + [f"amp_k{k}" for k in modes] + ["quotient_h2", "energy_residual", "control_l2"]
    buf.write(",".join(cols) + "\n")
    K = traj.K
    res = np.concatenate([d["energy_residual"], [np.nan]])
    for j, t in enumerate(traj.times):
        amps = [np.linalg.norm(phys[j, K + k]) for k in modes]
        row = [t] + amps + [d["quotient_h2"][j], res[j], d["control_l2"][j]]
        buf.write(",".join("%.16e" % v for v in row) + "\n")
    return buf.getvalue()


def write_csv(traj: SimTrajectory, path: Path, fingerprint: str, modes=None) -> None:
    Path(path).write_text(csv_text(traj, fingerprint, modes))
