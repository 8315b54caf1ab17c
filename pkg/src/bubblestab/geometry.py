"""Interface fields on the reference circle and exact geometry of deformed curves.

The reference interface is ``X_s(theta) = R_s (cos theta, sin theta)`` with
outward normal ``n = (cos, sin)`` and tangent ``tau = (-sin, cos)``.  Vector
fields on it are stored as Fourier coefficients of their (normal, tangential)
components, ``v(theta) = sum_k c_k exp(i k theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AliasingError(ValueError):
    pass


class ImmersionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FrameField:
    """Frame-component Fourier coefficients for modes ``-K..K``.

    ``coeffs[k + K] = (v_n(k), v_tau(k))``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] % 2 != 1:
            raise ValueError(f"coeffs must have shape (2K+1, 2), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def mode(self, k: int) -> np.ndarray:
        if abs(k) > self.K:
            return np.zeros(2, dtype=complex)
        return self.coeffs[k + self.K]

    @classmethod
    def zeros(cls, K: int) -> "FrameField":
        return cls(np.zeros((2 * K + 1, 2), dtype=complex))

    @classmethod
    def from_modes(cls, K: int, modes: dict) -> "FrameField":
        """Build a real field from ``{k: (v_n, v_tau)}`` for k >= 0.

        Negative modes are filled in by conjugation.
        """
        c = np.zeros((2 * K + 1, 2), dtype=complex)
        for k, v in modes.items():
            if k < 0 or k > K:
                raise ValueError(f"mode {k} outside 0..{K}")
            v = np.asarray(v, dtype=complex)
            if k == 0:
                c[K] = v.real
            else:
                c[K + k] = v
                c[K - k] = np.conj(v)
        return cls(c)

    def resized(self, K: int) -> "FrameField":
        out = np.zeros((2 * K + 1, 2), dtype=complex)
        m = min(K, self.K)
        out[K - m:K + m + 1] = self.coeffs[self.K - m:self.K + m + 1]
        return FrameField(out)

    def is_real(self, tol: float = 1e-12) -> bool:
        scale = max(1.0, float(np.abs(self.coeffs).max(initial=0.0)))
        return bool(np.abs(self.coeffs - np.conj(self.coeffs[::-1])).max(initial=0.0) <= tol * scale)

    def __add__(self, other: "FrameField") -> "FrameField":
        K = max(self.K, other.K)
        return FrameField(self.resized(K).coeffs + other.resized(K).coeffs)

    def __sub__(self, other: "FrameField") -> "FrameField":
        return self + (-1.0) * other

    def __mul__(self, a) -> "FrameField":
        return FrameField(self.coeffs * a)

    __rmul__ = __mul__


def frame_vectors(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    t = np.stack([-np.sin(theta), np.cos(theta)], axis=-1)
    return n, t


def nodes(M: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(M) / M


def frame_decompose(samples: np.ndarray, K: int) -> FrameField:
    """Frame Fourier coefficients of a Cartesian field sampled at ``M`` equispaced angles."""
    samples = np.asarray(samples, dtype=float)
    M = samples.shape[0]
    if M < 2 * K + 2:
        raise AliasingError(f"{M} samples cannot resolve modes up to {K} (need at least {2 * K + 2})")
    n, t = frame_vectors(nodes(M))
    comps = np.stack([np.sum(samples * n, axis=1), np.sum(samples * t, axis=1)], axis=1)
    spec = np.fft.fft(comps, axis=0) / M
    ks = np.arange(-K, K + 1)
    return FrameField(spec[ks % M])


def frame_reconstruct(f: FrameField, M: int) -> np.ndarray:
    """Cartesian samples ``(M, 2)`` of a frame field at equispaced angles."""
    if M < 2 * f.K + 2:
        raise AliasingError(f"{M} samples cannot represent modes up to {f.K}")
    comps = synthesize(f.coeffs, f.modes, M).real
    n, t = frame_vectors(nodes(M))
    return comps[:, :1] * n + comps[:, 1:] * t


def synthesize(coeffs: np.ndarray, ks: np.ndarray, M: int) -> np.ndarray:
    """Evaluate ``sum_k coeffs[k] exp(i k theta_j)`` at ``M`` equispaced nodes.

    ``coeffs`` has the mode axis first; trailing axes are carried along.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if M <= 2 * np.abs(ks).max(initial=0):
        raise AliasingError(f"{M} nodes cannot represent modes up to {np.abs(ks).max()}")
    spec = np.zeros((M,) + coeffs.shape[1:], dtype=complex)
    np.add.at(spec, ks % M, coeffs)
    return np.fft.ifft(spec, axis=0) * M


def analyze(values: np.ndarray, K: int) -> np.ndarray:
    """Fourier coefficients for modes ``-K..K`` of samples at equispaced nodes (mode axis first)."""
    M = values.shape[0]
    if M < 2 * K + 1:
        raise AliasingError(f"{M} nodes cannot resolve modes up to {K}")
    spec = np.fft.fft(values, axis=0) / M
    return spec[np.arange(-K, K + 1) % M]


def frame_to_cartesian_modes(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Convert frame coefficients (modes -K..K) to Cartesian x/y coefficients (modes -K-1..K+1).

    Uses ``x + i y = (v_n + i v_tau) e^{i theta}`` and ``x - i y = (v_n - i v_tau) e^{-i theta}``.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    nk = coeffs.shape[0]
    a = coeffs[:, 0] + 1j * coeffs[:, 1]
    b = coeffs[:, 0] - 1j * coeffs[:, 1]
    plus = np.zeros(nk + 2, dtype=complex)   # x + i y, shifted up by one
    minus = np.zeros(nk + 2, dtype=complex)  # x - i y, shifted down by one
    plus[2:] = a
    minus[:-2] = b
    return 0.5 * (plus + minus), (plus - minus) / 2j


def cartesian_to_frame_modes(cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """Inverse of :func:`frame_to_cartesian_modes`: modes -K-1..K+1 in, -K..K out.

    Content that does not fit the frame band (the outermost shifted modes) is dropped.
    """
    plus = np.asarray(cx) + 1j * np.asarray(cy)
    minus = np.asarray(cx) - 1j * np.asarray(cy)
    a = plus[2:]
    b = minus[:-2]
    return np.stack([0.5 * (a + b), (a - b) / 2j], axis=1)


def laplace_beltrami_block(k: int, R_s: float) -> np.ndarray:
    """Frame-basis block of the surface Laplacian acting on vector fields, mode ``k``."""
    d = -float(k) ** 2 - 1.0
    return np.array([[d, -2j * k], [2j * k, d]], dtype=complex) / R_s**2


_TRANSLATION = np.array([1.0, 1j]) / np.sqrt(2.0)


def rigid_project(f: FrameField, remove_volume: bool = False) -> FrameField:
    """Remove rotation (k=0 tangential) and translations (k=+-1 along (1, +-i))."""
    c = f.coeffs.copy()
    K = f.K
    c[K, 1] = 0.0
    if remove_volume:
        c[K, 0] = 0.0
    if K >= 1:
        for k, e in ((1, _TRANSLATION), (-1, np.conj(_TRANSLATION))):
            v = c[K + k]
            c[K + k] = v - np.vdot(e, v) * e
    return FrameField(c)


def sobolev_weights(K: int, s: float, R_s: float) -> np.ndarray:
    k = np.arange(-K, K + 1)
    return (1.0 + (k / R_s) ** 2) ** s


def sobolev_norm(f: FrameField, s: float, R_s: float, quotient: bool = False,
                 remove_volume: bool = False) -> float:
    if quotient:
        f = rigid_project(f, remove_volume=remove_volume)
    w = sobolev_weights(f.K, s, R_s)
    total = np.sum(w * np.sum(np.abs(f.coeffs) ** 2, axis=1))
    return float(np.sqrt(2.0 * np.pi * R_s * total))


def gradient_norm_sq(f: FrameField, R_s: float) -> float:
    """``||grad_Gamma Z||^2 = -<Delta_Gamma Z, Z>`` on the reference circle."""
    total = 0.0
    for k, v in zip(f.modes, f.coeffs):
        total += np.real(np.vdot(v, -laplace_beltrami_block(int(k), R_s) @ v))
    return float(2.0 * np.pi * R_s * total)


def _curve_derivatives(Z: FrameField, M: int, R_s: float, order: int) -> list[np.ndarray]:
    """Cartesian samples of X o X_s and its theta-derivatives up to ``order``."""
    ref = np.zeros_like(Z.coeffs)
    ref[Z.K, 0] = R_s
    cx, cy = frame_to_cartesian_modes(Z.coeffs + ref)
    m = np.arange(-Z.K - 1, Z.K + 2)
    out = []
    for p in range(order + 1):
        f = (1j * m) ** p
        xy = synthesize(np.stack([cx * f, cy * f], axis=1), m, M).real
        out.append(xy)
    return out


def curve_samples(Z: FrameField, M: int, R_s: float) -> np.ndarray:
    return _curve_derivatives(Z, M, R_s, 0)[0]


def deformed_metric(Z: FrameField, M: int, R_s: float) -> tuple[np.ndarray, np.ndarray]:
    """Metric ``g = |d/dtheta (X o X_s)|^2`` at the nodes and ``g^{-1/2}``.

    In one dimension the metric is a scalar, so ``det g = g``.
    """
    _, d1 = _curve_derivatives(Z, M, R_s, 1)
    g = np.sum(d1**2, axis=1)
    if np.sqrt(g.min()) < 1e-8:
        j = int(np.argmin(g))
        raise ImmersionError(f"degenerate tangent at node {j} (|dX/dtheta| = {np.sqrt(g[j]):.3e})")
    return g, 1.0 / np.sqrt(g)


def deformed_curvature(Z: FrameField, M: int, R_s: float) -> np.ndarray:
    """Signed curvature of the deformed curve; a circle of radius R gives ``-1/R``."""
    _, d1, d2 = _curve_derivatives(Z, M, R_s, 2)
    speed = np.sqrt(np.sum(d1**2, axis=1))
    if speed.min() < 1e-8:
        raise ImmersionError("degenerate tangent")
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    return -cross / speed**3


def enclosed_area(Z: FrameField, M: int, R_s: float) -> float:
    """Shoelace area of the deformed curve (exact for band-limited curves when M is large enough)."""
    x, d1 = _curve_derivatives(Z, M, R_s, 1)
    return float(0.5 * np.mean(x[:, 0] * d1[:, 1] - x[:, 1] * d1[:, 0]) * 2.0 * np.pi)


def curvature_force_remainder(Z: FrameField, M: int, R_s: float, mu: float) -> np.ndarray:
    """Cartesian samples of ``mu (|X'| kappa n_t - Delta_s X)`` on the nodes.

    ``|X'|`` is the stretch relative to the reference arclength and ``n_t`` the outward
    normal of the deformed curve, so ``kappa n_t`` is the surface Laplacian of the identity
    on the deformed curve.
    """
    _, d1, d2 = _curve_derivatives(Z, M, R_s, 2)
    speed = np.sqrt(np.sum(d1**2, axis=1))
    if speed.min() < 1e-8:
        raise ImmersionError("degenerate tangent")
    kappa = -(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    normal = np.stack([d1[:, 1], -d1[:, 0]], axis=1) / speed[:, None]
    stretch = speed / R_s
    return mu * ((stretch * kappa)[:, None] * normal - d2 / R_s**2)


def remainder_linear_block(k: int, R_s: float, mu: float) -> np.ndarray:
    """First-order part of :func:`curvature_force_remainder` for frame mode ``k``."""
    return mu / R_s**2 * np.array([[1.0, 1j * k], [-1j * k, float(k) ** 2]], dtype=complex)
