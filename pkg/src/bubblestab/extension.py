"""Harmonic extension of an interface displacement into the disk and the annulus.

Each Cartesian component of the displacement is expanded in modes ``e^{i m theta}``.
Inside the interface mode ``m`` is ``c (r/R_s)^{|m|}``; in the annulus it is
``alpha r^{|m|} + beta r^{-|m|}`` (``alpha + beta log r`` for ``m = 0``) vanishing at the wall.
Profiles are written as powers of ``z = x + i y`` or its conjugate so gradients are exact
everywhere, including the disk centre.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import BubbleConfig
from .geometry import FrameField, frame_to_cartesian_modes, nodes

DET_THRESHOLD = 0.05


class FoldingError(ValueError):
    def __init__(self, min_det: float, threshold: float = DET_THRESHOLD):
        self.min_det = min_det
        super().__init__(f"extension is not safely invertible: min det = {min_det:.4g} < {threshold}")


@dataclass(frozen=True)
class ModeTerms:
    """Per Cartesian mode: list of (coefficient, power, conjugate?) terms plus a log coefficient."""
    m: np.ndarray          # mode numbers
    inner: np.ndarray      # (n_modes, 2) coefficient c of (r/R_s)^{|m|} per component
    alpha: np.ndarray      # (n_modes, 2)
    beta: np.ndarray       # (n_modes, 2)


def _annulus_coeffs(m: int, R_s: float, R_out: float) -> tuple[float, float]:
    """(alpha, beta) of the unit-data annulus profile for mode ``m``."""
    if m == 0:
        b = 1.0 / (np.log(R_s) - np.log(R_out))
        return -b * np.log(R_out), b
    p = abs(m)
    A = np.array([[R_s**p, R_s**-p], [R_out**p, R_out**-p]])
    a, b = np.linalg.solve(A, [1.0, 0.0])
    return a, b


def _power(z: np.ndarray, m: int, sign: int):
    """``r^{sign |m|} e^{i m theta}`` as ``w^p`` and its (d/dx, d/dy) using w = z or conj(z)."""
    p = abs(m)
    if m == 0:
        one = np.ones_like(z)
        return one, np.zeros_like(z), np.zeros_like(z)
    # r^{|m|} e^{i m theta} is z^|m| (m>0) or zbar^|m| (m<0); r^{-|m|} e^{i m theta} is zbar^{-|m|} or z^{-|m|}
    use_z = (m > 0) == (sign > 0)
    q = p if sign > 0 else -p
    w = z if use_z else np.conj(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = w**q
        dw = q * w ** (q - 1)
    dy = 1j * dw if use_z else -1j * dw
    return val, dw, dy


@dataclass(frozen=True)
class ExtensionField:
    terms: ModeTerms
    R_s: float
    R_out: float
    r_inner: np.ndarray
    r_outer: np.ndarray
    theta: np.ndarray

    def evaluate(self, r: np.ndarray, theta: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
        """Displacement ``(..., 2)`` and gradient ``(..., 2, 2)`` (``[i, j] = d_j Z_i``) on the r x theta grid."""
        rr, tt = np.meshgrid(np.asarray(r, float), np.asarray(theta, float), indexing="ij")
        z = rr * np.exp(1j * tt)
        disp = np.zeros(rr.shape + (2,), dtype=complex)
        grad = np.zeros(rr.shape + (2, 2), dtype=complex)
        T = self.terms
        for i, m in enumerate(T.m):
            m = int(m)
            if side == "inner":
                v, dx, dy = _power(z, m, +1)
                scale = self.R_s ** -abs(m)
                parts = [(T.inner[i] * scale, v, dx, dy)]
            else:
                v, dx, dy = _power(z, m, +1)
                parts = [(T.alpha[i], v, dx, dy)]
                if m == 0:
                    with np.errstate(divide="ignore"):
                        lg = np.log(rr)
                    parts.append((T.beta[i], lg, rr * np.cos(tt) / rr**2, rr * np.sin(tt) / rr**2))
                else:
                    parts.append((T.beta[i], *_power(z, m, -1)))
            for c, v, dx, dy in parts:
                if not np.any(c):
                    continue
                disp += v[..., None] * c
                grad[..., :, 0] += dx[..., None] * c
                grad[..., :, 1] += dy[..., None] * c
        return disp.real, grad.real

    def grid(self, side: str):
        r = self.r_inner if side == "inner" else self.r_outer
        return self.evaluate(r, self.theta, side)

    def jacobian_det(self, side: str) -> np.ndarray:
        _, g = self.grid(side)
        F = g + np.eye(2)
        return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]

    def profile_derivatives(self, r: np.ndarray, side: str):
        """Radial profiles f, f', f'' for each mode and component, shape (n_modes, len(r), 2)."""
        r = np.asarray(r, float)
        T = self.terms
        f = np.zeros((len(T.m), len(r), 2), dtype=complex)
        d1, d2 = np.zeros_like(f), np.zeros_like(f)
        for i, m in enumerate(T.m):
            p = abs(int(m))
            if side == "inner":
                c = T.inner[i] * self.R_s**-p
                f[i] = np.outer(r**p, c)
                d1[i] = np.outer(p * r ** max(p - 1, 0) if p else 0 * r, c)
                d2[i] = np.outer(p * (p - 1) * r ** max(p - 2, 0) if p > 1 else 0 * r, c)
            elif p == 0:
                f[i] = np.outer(np.ones_like(r), T.alpha[i]) + np.outer(np.log(r), T.beta[i])
                d1[i] = np.outer(1 / r, T.beta[i])
                d2[i] = np.outer(-1 / r**2, T.beta[i])
            else:
                f[i] = np.outer(r**p, T.alpha[i]) + np.outer(r**-p, T.beta[i])
                d1[i] = np.outer(p * r ** (p - 1), T.alpha[i]) + np.outer(-p * r ** (-p - 1), T.beta[i])
                d2[i] = (np.outer(p * (p - 1) * r ** (p - 2), T.alpha[i])
                         + np.outer(p * (p + 1) * r ** (-p - 2), T.beta[i]))
        return f, d1, d2


def _rings(coeffs: np.ndarray, M: int) -> np.ndarray:
    """Real samples on ``M`` angles from coefficients of modes ``0..n-1`` (mode axis first)."""
    spec = np.zeros((M // 2 + 1,) + coeffs.shape[1:], dtype=complex)
    spec[: coeffs.shape[0]] = coeffs * M
    return np.fft.irfft(spec, n=M, axis=0)


def polar_deformation(E: ExtensionField, r: np.ndarray, M: int, side: str) -> tuple[np.ndarray, np.ndarray]:
    """Displacement (Cartesian, ``(M, nr, 2)``) and deformation gradient ``I + grad Z`` written in
    the local polar basis ``(e_r, e_theta)``, shape ``(M, nr, 2, 2)``.

    Uses radial profiles and FFTs, so it is much cheaper than :meth:`ExtensionField.evaluate`.
    """
    r = np.asarray(r, float)
    T = E.terms
    K1 = int(T.m.max())
    sel = T.m >= 0
    m = T.m[sel].astype(float)[:, None]
    p = np.abs(m)
    if side == "inner":
        c = T.inner[sel] * (E.R_s ** -p)
        f = r[None, :] ** p
        fp = p * np.where(p > 0, r[None, :] ** np.maximum(p - 1, 0), 0.0)
        f_r = np.where(p > 0, r[None, :] ** np.maximum(p - 1, 0), 0.0)
        parts = [(c, f, fp, f_r)]
    else:
        a, b = T.alpha[sel], T.beta[sel]
        lg = np.log(r)[None, :]
        fa = r[None, :] ** p
        fb = np.where(p > 0, r[None, :] ** -p, lg)
        dfa = p * r[None, :] ** (p - 1)
        dfb = np.where(p > 0, -p * r[None, :] ** (-p - 1), 1.0 / r[None, :])
        parts = [(a, fa, dfa, fa / r[None, :]), (b, fb, dfb, fb / r[None, :])]
    disp = np.zeros((K1 + 1, len(r), 2), dtype=complex)
    d_r = np.zeros_like(disp)
    d_t = np.zeros_like(disp)
    for c, f, fp, f_r in parts:
        disp += c[:, None, :] * f[..., None]
        d_r += c[:, None, :] * fp[..., None]
        d_t += c[:, None, :] * (1j * m * f_r)[..., None]
    disp, d_r, d_t = _rings(disp, M), _rings(d_r, M), _rings(d_t, M)
    th = nodes(M)[:, None]
    cs, sn = np.cos(th), np.sin(th)
    Fp = np.empty((M, len(r), 2, 2))
    for a, d in enumerate((d_r, d_t)):
        Fp[..., 0, a] = cs * d[..., 0] + sn * d[..., 1]
        Fp[..., 1, a] = -sn * d[..., 0] + cs * d[..., 1]
    Fp[..., 0, 0] += 1.0
    Fp[..., 1, 1] += 1.0
    return disp, Fp


def harmonic_extend(Z: FrameField, cfg: BubbleConfig, n_r: int = 33, M: int | None = None) -> ExtensionField:
    cx, cy = frame_to_cartesian_modes(Z.coeffs)
    m = np.arange(-Z.K - 1, Z.K + 2)
    inner = np.stack([cx, cy], axis=1)
    ab = np.array([_annulus_coeffs(int(k), cfg.R_s, cfg.R_out) for k in m])
    alpha = inner * ab[:, :1]
    beta = inner * ab[:, 1:]
    M = M or max(64, 4 * (Z.K + 2))
    return ExtensionField(ModeTerms(m, inner, alpha, beta), cfg.R_s, cfg.R_out,
                          np.linspace(0.0, cfg.R_s, n_r), np.linspace(cfg.R_s, cfg.R_out, n_r), nodes(M))


def min_det(E: ExtensionField) -> float:
    return float(min(E.jacobian_det("inner").min(), E.jacobian_det("outer").min()))


def inverse_jacobian(E: ExtensionField, side: str, threshold: float = DET_THRESHOLD) -> dict:
    """Pointwise inverse of the deformation gradient plus the sup-norm series bound check."""
    d = min_det(E)
    if d < threshold:
        raise FoldingError(d, threshold)
    _, g = E.grid(side)
    F = g + np.eye(2)
    Finv = np.linalg.inv(F)
    dev = np.sqrt(np.sum(g**2, axis=(-2, -1)))
    inv_dev = np.sqrt(np.sum((Finv - np.eye(2)) ** 2, axis=(-2, -1)))
    a = float(dev.max())
    b = float(inv_dev.max())
    bound = a / (1.0 - a) if a < 1.0 else np.inf
    return {"inverse": Finv, "sup_grad_dev": a, "sup_inverse_dev": b, "series_bound": bound,
            "bound_holds": bool(a >= 1.0 or b <= bound * (1 + 1e-12))}


def harmonicity_residual(E: ExtensionField, n: int = 65) -> float:
    """Max of ``|f'' + f'/r - m^2 f / r^2|`` over modes, relative to the largest coefficient."""
    out = 0.0
    scale = max(1.0, float(np.abs(E.terms.inner).max()))
    for side, r in (("inner", np.linspace(E.R_s / n, E.R_s, n)), ("outer", np.linspace(E.R_s, E.R_out, n))):
        f, d1, d2 = E.profile_derivatives(r, side)
        m2 = (E.terms.m.astype(float) ** 2)[:, None, None]
        res = d2 + d1 / r[None, :, None] - m2 * f / r[None, :, None] ** 2
        out = max(out, float(np.abs(res).max()) / scale)
    return out


def boundary_errors(E: ExtensionField, Z: FrameField) -> dict:
    """Interface reproduction error (both sides) and wall trace of the displacement."""
    from .geometry import curve_samples
    M = len(E.theta)
    target = curve_samples(Z, M, E.R_s) - E.R_s * np.stack([np.cos(E.theta), np.sin(E.theta)], axis=1)
    di, _ = E.evaluate([E.R_s], E.theta, "inner")
    do, _ = E.evaluate([E.R_s], E.theta, "outer")
    dw, _ = E.evaluate([E.R_out], E.theta, "outer")
    return {"inner": float(np.abs(di[0] - target).max()), "outer": float(np.abs(do[0] - target).max()),
            "wall": float(np.abs(dw[0]).max())}


def maximum_principle(E: ExtensionField, tol: float = 1e-10) -> bool:
    for side in ("inner", "outer"):
        d, _ = E.grid(side)
        edge = [d[-1]] if side == "inner" else [d[0], d[-1]]
        for comp in range(2):
            bmax = max(float(e[:, comp].max()) for e in edge)
            bmin = min(float(e[:, comp].min()) for e in edge)
            if d[..., comp].max() > bmax + tol or d[..., comp].min() < bmin - tol:
                return False
    return True


def winding_check(E: ExtensionField, n_circles: int = 9) -> bool:
    """Images of concentric annulus circles wind once around the origin and stay radially ordered."""
    r = np.linspace(E.R_s, E.R_out, n_circles)
    d, _ = E.evaluate(r, E.theta, "outer")
    xy = d + np.stack(np.meshgrid(r, E.theta, indexing="ij"), -1)[..., :1] * np.stack(
        [np.cos(E.theta), np.sin(E.theta)], axis=1)[None]
    ang = np.arctan2(xy[..., 1], xy[..., 0])
    steps = np.angle(np.exp(1j * np.diff(np.concatenate([ang, ang[:, :1]], axis=1), axis=1)))
    winding = np.round(steps.sum(axis=1) / (2 * np.pi))
    radius = np.hypot(xy[..., 0], xy[..., 1])
    ordered = np.all(np.diff(radius, axis=0) > 0)
    return bool(np.all(winding == 1) and ordered)


def folding_threshold(shape: FrameField, cfg: BubbleConfig, level: float = 0.0, hi: float = 10.0,
                      tol: float = 1e-6, **grid) -> float:
    """Smallest amplitude ``a`` (by bisection) with ``min_det(extend(a * shape)) <= level``."""
    def det_at(a):
        return min_det(harmonic_extend(shape * a, cfg, **grid))
    lo = 0.0
    while det_at(hi) > level:
        hi *= 2.0
        if hi > 1e6:
            raise ValueError("no folding found for this shape")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if det_at(mid) > level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
