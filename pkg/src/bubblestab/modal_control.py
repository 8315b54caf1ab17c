"""Per-mode generator, spectrum, unstable-mode selection, Riccati synthesis and feedback."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import cache
from .config import BubbleConfig, fingerprint
from .geometry import laplace_beltrami_block
from .steklov import SteklovOperator

LAW_KIND = "feedback-law"


class StructureError(RuntimeError):
    pass


class ResolventCollisionError(ValueError):
    pass


class StabilizabilityError(RuntimeError):
    def __init__(self, message: str, k: int | None = None):
        self.k = k
        super().__init__(message if k is None else f"mode {k}: {message}")


def generator_block(k: int, P: SteklovOperator, cfg: BubbleConfig) -> np.ndarray:
    return cfg.mu * P.block(k) @ laplace_beltrami_block(k, cfg.R_s)


@dataclass(frozen=True)
class ModeEigen:
    k: int
    values: np.ndarray       # real, descending
    right: np.ndarray        # columns are eigenvectors
    left: np.ndarray         # columns w_j with w_j^H v_i = delta_ij
    tags: tuple              # per eigenvalue: "volume", "rotation", "translation" or ""


@dataclass(frozen=True)
class ModalSpectrum:
    modes: tuple
    lam_tol: float = 1e-8

    def mode(self, k: int) -> ModeEigen:
        return self.modes[k]

    def all_values(self) -> np.ndarray:
        return np.concatenate([m.values for m in self.modes])


def _tag(k: int, v: np.ndarray) -> str:
    v = v / np.linalg.norm(v)
    if k == 0:
        return "volume" if abs(v[0]) > abs(v[1]) else "rotation"
    if k == 1 and abs(np.vdot(np.array([1, 1j]) / np.sqrt(2), v)) > 1 - 1e-6:
        return "translation"
    return ""


def mode_spectrum(P: SteklovOperator, cfg: BubbleConfig, imag_tol: float = 1e-8) -> ModalSpectrum:
    modes = []
    for k in range(P.K + 1):
        A = generator_block(k, P, cfg)
        if k == 0:
            # block is diagonal: volume (normal) and rotation (tangential)
            w = np.array([A[0, 0], A[1, 1]])
            V = np.eye(2, dtype=complex)
        else:
            w, V = np.linalg.eig(A)
        if np.abs(w.imag).max() > imag_tol:
            raise StructureError(f"mode {k}: non-real eigenvalue {w} (generator should have real spectrum)")
        w = w.real
        order = np.argsort(-w, kind="stable")
        w, V = w[order], V[:, order]
        V = V / np.linalg.norm(V, axis=0)
        W = np.linalg.inv(V).conj().T
        modes.append(ModeEigen(k, w, V, W, tuple(_tag(k, V[:, j]) for j in range(2))))
    return ModalSpectrum(tuple(modes))


@dataclass(frozen=True)
class UnstableDirection:
    k: int
    index: int
    value: float
    tag: str


def unstable_set(spec: ModalSpectrum, lam: float, include_rotation: bool = True,
                 collision_tol: float = 1e-9) -> list[UnstableDirection]:
    out = []
    for m in spec.modes:
        for j, (val, tag) in enumerate(zip(m.values, m.tags)):
            if tag == "volume":
                continue
            if abs(val + lam) < collision_tol:
                raise ResolventCollisionError(
                    f"lambda={lam} coincides with eigenvalue {val} of mode {m.k}; pick another decay rate")
            if val > -lam:
                if tag == "rotation" and not include_rotation:
                    continue
                out.append(UnstableDirection(m.k, j, float(val), tag))
    return out


def controllability_check(A_u: np.ndarray, B_u: np.ndarray, tol: float = 1e-10) -> dict:
    A_u = np.atleast_2d(A_u)
    B_u = np.atleast_2d(B_u)
    n = A_u.shape[0]
    blocks = [B_u]
    for _ in range(1, n):
        blocks.append(A_u @ blocks[-1])
    C = np.hstack(blocks)
    s = np.linalg.svd(C, compute_uv=False) if C.size else np.zeros(0)
    scale = max(1.0, float(s.max(initial=0.0)))
    rank = int(np.sum(s > tol * scale))
    return {"rank": rank, "dim": n, "controllable": rank == n,
            "sigma_min": float(s.min(initial=0.0)) if len(s) else 0.0}


def are_residual(Pi: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    R = Pi @ A + A.conj().T @ Pi - Pi @ B @ B.conj().T @ Pi + np.eye(A.shape[0])
    return float(np.abs(R).max())


def solve_are(A_u: np.ndarray, B_u: np.ndarray, lam: float = 0.0, tol: float = 1e-9) -> np.ndarray:
    """Stabilizing solution of ``Pi A + A^H Pi - Pi B B^H Pi + I = 0`` with ``A = A_u + lam I``.

    Uses the stable invariant subspace of the Hamiltonian matrix (ordered complex Schur form).
    """
    A = np.atleast_2d(np.asarray(A_u, dtype=complex)) + lam * np.eye(np.atleast_2d(A_u).shape[0])
    B = np.atleast_2d(np.asarray(B_u, dtype=complex))
    n = A.shape[0]
    # stabilizability (PBH) on the closed right half plane
    for s in np.linalg.eigvals(A):
        if s.real >= 0:
            M = np.hstack([A - s * np.eye(n), B])
            if np.linalg.matrix_rank(M, tol=1e-10 * max(1.0, np.abs(M).max())) < n:
                raise StabilizabilityError(f"eigenvalue {s:.6g} of the shifted block is not controllable")
    BB = B @ B.conj().T
    H = np.block([[A, -BB], [-np.eye(n), -A.conj().T]])
    T, U, sdim = sla.schur(H, output="complex", sort="lhp")
    if sdim != n:
        raise StabilizabilityError(f"Hamiltonian has {sdim} stable eigenvalues, expected {n}")
    U11, U21 = U[:n, :n], U[n:, :n]
    Pi = np.linalg.solve(U11.T, U21.T).T
    Pi = 0.5 * (Pi + Pi.conj().T)
    res = are_residual(Pi, A, B)
    if res > tol * max(1.0, np.abs(Pi).max() ** 2 * np.abs(BB).max()):
        raise StabilizabilityError(f"Riccati residual {res:.3e} above tolerance")
    return Pi


@dataclass(frozen=True)
class FeedbackLaw:
    lam: float
    include_rotation: bool
    unstable: tuple                 # UnstableDirection entries
    Pi_blocks: np.ndarray           # (K+1, 2, 2) full-space Hermitian blocks
    K_blocks: np.ndarray            # (K+1, 2, 2)
    closed_loop_margin: float
    riccati_residuals: dict = field(default_factory=dict)
    operator_fingerprint: str = ""

    @property
    def K(self) -> int:
        return self.K_blocks.shape[0] - 1

    def block(self, k: int) -> np.ndarray:
        b = self.K_blocks[abs(k)]
        return b if k >= 0 else np.conj(b)

    def full_blocks(self) -> np.ndarray:
        return np.concatenate([np.conj(self.K_blocks[:0:-1]), self.K_blocks], axis=0)

    @property
    def params(self) -> dict:
        return {"lam": self.lam, "include_rotation": self.include_rotation,
                "operator": self.operator_fingerprint}

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.params)


def zero_law(P: SteklovOperator, lam: float = 0.0) -> FeedbackLaw:
    z = np.zeros((P.K + 1, 2, 2), dtype=complex)
    return FeedbackLaw(lam, True, (), z, z.copy(), float("nan"), {}, P.fingerprint)


def closed_loop_block(k: int, P: SteklovOperator, law: FeedbackLaw, cfg: BubbleConfig) -> np.ndarray:
    return generator_block(k, P, cfg) + P.block(k) @ law.block(k)


def closed_loop_rates(k: int, P: SteklovOperator, law: FeedbackLaw, cfg: BubbleConfig,
                      include_rotation: bool = True) -> np.ndarray:
    """Real parts of closed-loop eigenvalues, leaving out the volume direction at k=0."""
    M = closed_loop_block(k, P, law, cfg)
    if k == 0:
        # the normal row vanishes, so the block is lower triangular
        return np.array([M[1, 1].real]) if include_rotation else np.zeros(0)
    return np.linalg.eigvals(M).real


def build_feedback(P: SteklovOperator, spec: ModalSpectrum, lam: float, cfg: BubbleConfig,
                   include_rotation: bool = True) -> FeedbackLaw:
    directions = unstable_set(spec, lam, include_rotation)
    Kmax = P.K
    Pi_blocks = np.zeros((Kmax + 1, 2, 2), dtype=complex)
    K_blocks = np.zeros((Kmax + 1, 2, 2), dtype=complex)
    residuals = {}
    for k in sorted({d.k for d in directions}):
        m = spec.mode(k)
        idx = [d.index for d in directions if d.k == k]
        V_u, W_u = m.right[:, idx], m.left[:, idx]
        A_u = W_u.conj().T @ generator_block(k, P, cfg) @ V_u
        B_u = W_u.conj().T @ P.block(k)
        report = controllability_check(A_u + lam * np.eye(len(idx)), B_u)
        if not report["controllable"]:
            raise StabilizabilityError(f"rank {report['rank']} < {report['dim']}", k)
        Pi_u = solve_are(A_u, B_u, lam)
        residuals[k] = are_residual(Pi_u, A_u + lam * np.eye(len(idx)), B_u)
        Pi_blocks[k] = W_u @ Pi_u @ W_u.conj().T
        K_blocks[k] = -B_u.conj().T @ Pi_u @ W_u.conj().T
    law = FeedbackLaw(lam, include_rotation, tuple(directions), Pi_blocks, K_blocks, float("nan"),
                      residuals, P.fingerprint)
    margin = max(closed_loop_rates(k, P, law, cfg, include_rotation).max(initial=-np.inf)
                 for k in range(Kmax + 1)) + lam
    return FeedbackLaw(lam, include_rotation, tuple(directions), Pi_blocks, K_blocks, float(margin),
                       residuals, P.fingerprint)


def slowest_nonzero_rate(spec: ModalSpectrum, tol: float = 1e-10) -> float:
    vals = [-v for m in spec.modes for v, t in zip(m.values, m.tags) if t not in ("volume",) and -v > tol]
    return float(min(vals))


def dumps(law: FeedbackLaw) -> str:
    payload = {
        "unstable": [[d.k, d.index, d.value, d.tag] for d in law.unstable],
        "Pi": cache.encode_complex(law.Pi_blocks),
        "K": cache.encode_complex(law.K_blocks),
        "margin": law.closed_loop_margin,
        "residuals": {str(k): v for k, v in law.riccati_residuals.items()},
    }
    return cache.dumps(LAW_KIND, law.fingerprint, law.params, payload)


def loads(text: str, expected_fingerprint: str | None = None) -> FeedbackLaw:
    doc = cache.loads(text, LAW_KIND, expected_fingerprint)
    pl, pr = doc["payload"], doc["params"]
    return FeedbackLaw(
        lam=pr["lam"], include_rotation=pr["include_rotation"],
        unstable=tuple(UnstableDirection(int(k), int(i), float(v), t) for k, i, v, t in pl["unstable"]),
        Pi_blocks=cache.decode_complex(pl["Pi"]), K_blocks=cache.decode_complex(pl["K"]),
        closed_loop_margin=pl["margin"], riccati_residuals={int(k): v for k, v in pl["residuals"].items()},
        operator_fingerprint=pr["operator"],
    )
