"""Interface traction-to-velocity (Neumann-to-Dirichlet) operator as per-mode 2x2 blocks."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cache
from .config import BubbleConfig, fingerprint
from .geometry import FrameField
from .stokes_mode import ModeProblem, solve_mode_analytic, solve_mode_fd

BACKENDS = ("analytic", "fd")
CACHE_KIND = "steklov-operator"


@dataclass(frozen=True)
class SteklovOperator:
    blocks: np.ndarray          # (K+1, 2, 2), block k for k = 0..K
    backend: str
    params: dict

    @property
    def K(self) -> int:
        return self.blocks.shape[0] - 1

    @property
    def R_s(self) -> float:
        return self.params["R_s"]

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.params)

    def block(self, k: int) -> np.ndarray:
        """P(k) for any integer k with |k| <= K, using P(-k) = conj(P(k))."""
        b = self.blocks[abs(k)]
        return b if k >= 0 else np.conj(b)

    def full_blocks(self) -> np.ndarray:
        """Blocks for k = -K..K stacked along the first axis."""
        neg = np.conj(self.blocks[:0:-1])
        return np.concatenate([neg, self.blocks], axis=0)


def operator_params(cfg: BubbleConfig, backend: str, N_r: int | None = None) -> dict:
    return {"R_s": cfg.R_s, "R_out": cfg.R_out, "nu": cfg.nu, "K": cfg.K, "backend": backend,
            "N_r": int(cfg.N_r if N_r is None else N_r)}


def assemble(cfg: BubbleConfig, backend: str = "analytic", N_r: int | None = None) -> SteklovOperator:
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    blocks = np.zeros((cfg.K + 1, 2, 2), dtype=complex)
    for k in range(cfg.K + 1):
        for j, e in enumerate(np.eye(2)):
            prob = ModeProblem(k=k, jump=e)
            if backend == "analytic":
                sol = solve_mode_analytic(prob, cfg)
            else:
                sol = solve_mode_fd(prob, cfg, N_r)
            blocks[k, :, j] = sol.trace
    blocks[0] = blocks[0].real
    return SteklovOperator(blocks, backend, operator_params(cfg, backend, N_r))


def apply(P: SteklovOperator, G: FrameField) -> FrameField:
    if G.K > P.K:
        warnings.warn(f"modes above {P.K} truncated when applying the operator", stacklevel=2)
    Gt = G.resized(P.K)
    out = np.einsum("kij,kj->ki", P.full_blocks(), Gt.coeffs)
    return FrameField(out).resized(G.K)


def quadratic_form(P: SteklovOperator, G: FrameField) -> float:
    """``<G, P G>`` with the arclength pairing on the reference circle."""
    Gt = G.resized(P.K)
    PG = np.einsum("kij,kj->ki", P.full_blocks(), Gt.coeffs)
    return float(np.real(2 * np.pi * P.R_s * np.sum(np.conj(Gt.coeffs) * PG)))


def dumps(P: SteklovOperator) -> str:
    return cache.dumps(CACHE_KIND, P.fingerprint, P.params,
                       {"backend": P.backend, "blocks": cache.encode_complex(P.blocks)})


def loads(text: str, expected_fingerprint: str | None = None) -> SteklovOperator:
    doc = cache.loads(text, CACHE_KIND, expected_fingerprint)
    blocks = cache.decode_complex(doc["payload"]["blocks"])
    return SteklovOperator(blocks, doc["payload"]["backend"], doc["params"])


def cache_path(directory: Path, params: dict) -> Path:
    return Path(directory) / f"steklov-{fingerprint(params)}.json"


def load_or_assemble(cfg: BubbleConfig, backend: str, directory: Path | None,
                     N_r: int | None = None) -> tuple[SteklovOperator, bool]:
    """Return the operator and whether it came from the cache."""
    params = operator_params(cfg, backend, N_r)
    if directory is not None:
        path = cache_path(directory, params)
        if path.exists():
            return loads(path.read_text(), fingerprint(params)), True
    P = assemble(cfg, backend, N_r)
    if directory is not None:
        cache.write(cache_path(directory, params), dumps(P))
    return P, False
