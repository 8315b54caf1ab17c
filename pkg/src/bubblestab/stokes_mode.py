"""Per-mode solvers for the two-phase stationary Stokes transmission problem.

The flow lives on the disk ``r < R_s`` (inner side, ``-``) and the annulus
``R_s < r < R_out`` (outer side, ``+``).  A mode-``k`` field is
``(u_r(r), u_theta(r), p(r)) exp(i k theta)``.  The interface data ``jump`` is
``G = -[sigma(u, p)] e_r`` with ``[f] = f_outer - f_inner``, so the solved tractions
satisfy ``traction_outer - traction_inner = -jump``.

Two independent backends are provided:

* ``solve_mode_analytic``: biharmonic stream-function bases, exact in ``r``;
* ``solve_mode_fd``: second-order finite differences on a staggered radial grid,
  which also accepts volume forcing and divergence data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import BubbleConfig
from .powerlog import PowerLog


class IllPosedModeError(RuntimeError):
    pass


class KernelConflictError(ValueError):
    pass


class SingularDiscretizationError(RuntimeError):
    pass


class CompatibilityError(ValueError):
    pass


Profile = Union[None, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass
class ModeProblem:
    """Data for one azimuthal mode.

    ``force_*`` are (F_r, F_theta) profiles and ``div_*`` scalar divergence
    profiles; either arrays sampled on the FD grid (velocity nodes for forces,
    pressure nodes for divergence) or callables of ``r``.  Forcing enters as
    ``-div sigma(u, p) = F``.
    """

    k: int
    jump: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=complex))
    dirichlet: Optional[np.ndarray] = None
    force_inner: Profile = None
    force_outer: Profile = None
    div_inner: Profile = None
    div_outer: Profile = None

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("mode index must be non-negative (negative modes follow by conjugation)")
        self.jump = np.asarray(self.jump, dtype=complex)
        if self.dirichlet is not None:
            self.dirichlet = np.asarray(self.dirichlet, dtype=complex)

    @property
    def forced(self) -> bool:
        return any(x is not None for x in (self.force_inner, self.force_outer, self.div_inner, self.div_outer))


@dataclass
class SideProfile:
    """Radial samples of one subdomain's solution."""

    r: np.ndarray          # velocity nodes
    r_half: np.ndarray     # pressure nodes
    u_r: np.ndarray
    u_t: np.ndarray
    p: np.ndarray          # at r_half


@dataclass
class ModeFlowSolution:
    k: int
    backend: str
    trace: np.ndarray
    traction_inner: np.ndarray
    traction_outer: np.ndarray
    strain_energy_outer: float
    strain_energy_inner: float
    pressure_jump0: Optional[float] = None
    coeffs_inner: Optional[np.ndarray] = None
    coeffs_outer: Optional[np.ndarray] = None
    inner: Optional[SideProfile] = None
    outer: Optional[SideProfile] = None
    condition_number: float = float("nan")
    fields_inner: Optional[dict] = None
    fields_outer: Optional[dict] = None


def interface_trace(s: ModeFlowSolution) -> np.ndarray:
    return s.trace


def strain_energy(s: ModeFlowSolution) -> tuple[float, float]:
    """(E_outer, E_inner): ``2 nu int |eps|^2`` over each subdomain for the complex mode."""
    return s.strain_energy_outer, s.strain_energy_inner


# ---------------------------------------------------------------------------
# analytic backend


def _velocity_pressure(f: PowerLog, k: int, nu: float) -> dict:
    u_r = f.shift(-1) * (1j * k)
    u_t = f.diff() * (-1.0)
    if k == 0:
        p = PowerLog()
    else:
        lap = f.diff().diff() + f.diff().shift(-1) - f.shift(-2) * (k * k)
        w = lap * (-1.0)
        p = w.diff().shift(1) * (nu / (1j * k))
    return {"u_r": u_r, "u_t": u_t, "p": p}


def _strain(fields_: dict, k: int) -> dict:
    u_r, u_t = fields_["u_r"], fields_["u_t"]
    return {
        "rr": u_r.diff(),
        "tt": (u_t * (1j * k) + u_r).shift(-1),
        "rt": (u_r.shift(-1) * (1j * k) + u_t.diff() - u_t.shift(-1)) * 0.5,
    }


def _traction(fields_: dict, k: int, nu: float, r: float) -> np.ndarray:
    u_r, u_t, p = fields_["u_r"], fields_["u_t"], fields_["p"]
    tn = -p(r) + 2 * nu * u_r.diff()(r)
    tt = nu * (1j * k * u_r(r) / r + u_t.diff()(r) - u_t(r) / r)
    return np.array([tn, tt], dtype=complex).ravel()


def _combine(basis: list[dict], coeffs: np.ndarray) -> dict:
    out = {"u_r": PowerLog(), "u_t": PowerLog(), "p": PowerLog()}
    for b, c in zip(basis, coeffs):
        for key in out:
            out[key] = out[key] + b[key] * c
    return out


def _energy(fields_: dict, k: int, nu: float, r0: float, r1: float) -> float:
    e = _strain(fields_, k)
    dens = (e["rr"] * e["rr"].conj() + e["tt"] * e["tt"].conj() + e["rt"] * e["rt"].conj() * 2.0).shift(1)
    return float(np.real(2 * nu * 2 * np.pi * dens.integrate(r0, r1)))


@lru_cache(maxsize=None)
def _bases(k: int, nu: float) -> tuple[list[dict], list[dict]]:
    m = PowerLog.monomial
    if k >= 2:
        inner_f = [m(k), m(k + 2)]
        outer_f = [m(k), m(k + 2), m(-k), m(2 - k)]
    elif k == 1:
        inner_f = [m(1), m(3)]
        outer_f = [m(1), m(3), m(-1), m(1, 1)]
    else:
        # r**2 log r is left out: its pressure would be multivalued (p ~ theta)
        inner_f = [m(2)]
        outer_f = [m(2), m(0, 1)]
    inner = [_velocity_pressure(f, k, nu) for f in inner_f]
    outer = [_velocity_pressure(f, k, nu) for f in outer_f]
    if k == 0:
        inner.append({"u_r": PowerLog(), "u_t": PowerLog(), "p": m(0)})
    return inner, outer


def _rows_velocity(basis, r):
    return np.array([[b["u_r"](r) for b in basis], [b["u_t"](r) for b in basis]], dtype=complex).reshape(2, -1)


def _rows_traction(basis, k, nu, r):
    return np.array([_traction(b, k, nu, r) for b in basis], dtype=complex).T


def solve_mode_analytic(p: ModeProblem, cfg: BubbleConfig) -> ModeFlowSolution:
    if p.forced:
        raise ValueError("the analytic backend is unforced; use solve_mode_fd for volume data")
    k, nu, Rs, Ro = p.k, cfg.nu, cfg.R_s, cfg.R_out
    inner, outer = _bases(k, nu)
    ni, no = len(inner), len(outer)
    n = ni + no
    A = np.zeros((n, n), dtype=complex)
    b = np.zeros(n, dtype=complex)
    if k == 0 and p.dirichlet is not None and p.dirichlet[0] != 0:
        raise KernelConflictError("mode 0 carries no normal velocity; a nonzero normal trace cannot be imposed")
    if k == 0:
        # unknowns: inner rotation, inner pressure constant | outer r^2, outer log r
        vi = _rows_velocity(inner, Rs)[1:]
        vo = _rows_velocity(outer, Ro)[1:]
        vs = _rows_velocity(outer, Rs)[1:]
        ti = _rows_traction(inner, k, nu, Rs)
        to = _rows_traction(outer, k, nu, Rs)
        A[0, ni:] = vo[0]
        if p.dirichlet is None:
            A[1, :ni] = -vi[0]
            A[1, ni:] = vs[0]
            A[2, :ni] = -ti[1]
            A[2, ni:] = to[1]
            b[2] = -p.jump[1]
            A[3, :ni] = -ti[0]
            A[3, ni:] = to[0]
            b[3] = -p.jump[0]
        else:
            A[1, :ni] = vi[0]
            b[1] = p.dirichlet[1]
            A[2, ni:] = vs[0]
            b[2] = p.dirichlet[1]
            A[3, ni - 1] = 1.0  # inner pressure gauge
    else:
        vi = _rows_velocity(inner, Rs)
        vo = _rows_velocity(outer, Ro)
        vs = _rows_velocity(outer, Rs)
        A[0:2, ni:] = vo
        if p.dirichlet is None:
            A[2:4, :ni] = -vi
            A[2:4, ni:] = vs
            A[4:6, :ni] = -_rows_traction(inner, k, nu, Rs)
            A[4:6, ni:] = _rows_traction(outer, k, nu, Rs)
            b[4:6] = -p.jump
        else:
            A[2:4, :ni] = vi
            b[2:4] = p.dirichlet
            A[4:6, ni:] = vs
            b[4:6] = p.dirichlet
    # r**k and r**-k columns differ by R_out**k in scale; equilibrate before judging conditioning
    scale = 1.0 / np.abs(A).max(axis=0)
    As = A * scale
    cond = np.linalg.cond(As)
    if not np.isfinite(cond) or cond > 1e14:
        raise IllPosedModeError(f"mode {k}: coupling matrix is singular (condition {cond:.3e})")
    x = np.linalg.solve(As, b) * scale
    ci, co = x[:ni], x[ni:]
    fi, fo = _combine(inner, ci), _combine(outer, co)
    trace = np.array([fo["u_r"](Rs), fo["u_t"](Rs)], dtype=complex).ravel()
    t_in = _traction(fi, k, nu, Rs)
    t_out = _traction(fo, k, nu, Rs)
    pj = None
    if k == 0:
        pj = float(np.real(fo["p"](Rs) - fi["p"](Rs)).ravel()[0])
    return ModeFlowSolution(
        k=k, backend="analytic", trace=trace, traction_inner=t_in, traction_outer=t_out,
        strain_energy_outer=_energy(fo, k, nu, Rs, Ro), strain_energy_inner=_energy(fi, k, nu, 0.0, Rs),
        pressure_jump0=pj, coeffs_inner=ci, coeffs_outer=co, condition_number=float(cond),
        fields_inner=fi, fields_outer=fo,
    )


# ---------------------------------------------------------------------------
# finite-difference backend


@dataclass(frozen=True)
class RadialGrid:
    """Staggered grid: velocities at ``r``, pressure and divergence at ``r_half``."""

    r: np.ndarray
    r_half: np.ndarray
    h: float

    @classmethod
    def inner(cls, R_s: float, N: int) -> "RadialGrid":
        h = R_s / N
        return cls(np.arange(N + 1) * h, (np.arange(N) + 0.5) * h, h)

    @classmethod
    def outer(cls, R_s: float, R_out: float, N: int) -> "RadialGrid":
        h = (R_out - R_s) / N
        return cls(R_s + np.arange(N + 1) * h, R_s + (np.arange(N) + 0.5) * h, h)

    @property
    def N(self) -> int:
        return len(self.r_half)


def grids(cfg: BubbleConfig, N: Optional[int] = None) -> tuple[RadialGrid, RadialGrid]:
    N = cfg.N_r if N is None else N
    return RadialGrid.inner(cfg.R_s, N), RadialGrid.outer(cfg.R_s, cfg.R_out, N)


class _Rows:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.n = 0

    def new(self) -> int:
        self.n += 1
        return self.n - 1

    def add(self, i, j, v):
        if v != 0:
            self.rows.append(i)
            self.cols.append(j)
            self.vals.append(v)


class _Side:
    """Index bookkeeping for one subdomain's unknowns (u_r, u_t at nodes, p at half nodes)."""

    def __init__(self, grid: RadialGrid, offset: int):
        self.g = grid
        n = grid.N
        self.ur = offset + np.arange(n + 1)
        self.ut = offset + n + 1 + np.arange(n + 1)
        self.p = offset + 2 * (n + 1) + np.arange(n)
        self.size = 3 * n + 2
        self.momentum_rows: list[tuple[int, int, int]] = []
        self.continuity_rows: list[int] = []


def _interior(R: _Rows, s: _Side, k: int, nu: float):
    g = s.g
    h = g.h
    for j in range(1, g.N):
        r = g.r[j]
        a_m = nu * (-1.0 / h**2 + 1.0 / (2 * h * r))
        a_p = nu * (-1.0 / h**2 - 1.0 / (2 * h * r))
        a_0 = nu * (2.0 / h**2 + (k * k + 1) / r**2)
        c = nu * 2j * k / r**2
        # -nu(u'' + u'/r - (k^2+1)u/r^2) - nu(-2ik/r^2) u_t + p'
        ir = R.new()
        R.add(ir, s.ur[j - 1], a_m)
        R.add(ir, s.ur[j], a_0)
        R.add(ir, s.ur[j + 1], a_p)
        R.add(ir, s.ut[j], c)
        R.add(ir, s.p[j], 1.0 / h)
        R.add(ir, s.p[j - 1], -1.0 / h)
        it = R.new()
        R.add(it, s.ut[j - 1], a_m)
        R.add(it, s.ut[j], a_0)
        R.add(it, s.ut[j + 1], a_p)
        R.add(it, s.ur[j], -c)
        R.add(it, s.p[j - 1], 0.5j * k / r)
        R.add(it, s.p[j], 0.5j * k / r)
        s.momentum_rows.append((j, ir, it))
    for j in range(g.N):
        rh = g.r_half[j]
        ic = R.new()
        R.add(ic, s.ur[j + 1], g.r[j + 1] / (h * rh))
        R.add(ic, s.ur[j], -g.r[j] / (h * rh))
        R.add(ic, s.ut[j], 0.5j * k / rh)
        R.add(ic, s.ut[j + 1], 0.5j * k / rh)
        s.continuity_rows.append(ic)


def _traction_coeffs(s: _Side, k: int, nu: float, at_end: bool):
    """Linear functionals (index -> coefficient) for (t_n, t_t) at the interface node."""
    g = s.g
    h = g.h
    if at_end:
        j = g.N
        d = {j: 3 / (2 * h), j - 1: -4 / (2 * h), j - 2: 1 / (2 * h)}
        pe = {g.N - 1: 1.5, g.N - 2: -0.5}
    else:
        j = 0
        d = {0: -3 / (2 * h), 1: 4 / (2 * h), 2: -1 / (2 * h)}
        pe = {0: 1.5, 1: -0.5}
    r = g.r[j]
    tn, tt = {}, {}
    for jj, c in d.items():
        tn[s.ur[jj]] = tn.get(s.ur[jj], 0) + 2 * nu * c
        tt[s.ut[jj]] = tt.get(s.ut[jj], 0) + nu * c
    for jj, c in pe.items():
        tn[s.p[jj]] = tn.get(s.p[jj], 0) - c
    tt[s.ur[j]] = tt.get(s.ur[j], 0) + nu * 1j * k / r
    tt[s.ut[j]] = tt.get(s.ut[j], 0) - nu / r
    return tn, tt


class FDModeOperator:
    """Factorized FD system for one mode and one coupling type (transmission/Dirichlet)."""

    def __init__(self, k: int, R_s: float, R_out: float, nu: float, N: int, dirichlet: bool):
        self.k, self.nu, self.dirichlet = k, nu, dirichlet
        gi, go = RadialGrid.inner(R_s, N), RadialGrid.outer(R_s, R_out, N)
        self.si = _Side(gi, 0)
        self.so = _Side(go, self.si.size)
        R = _Rows()
        _interior(R, self.si, k, nu)
        _interior(R, self.so, k, nu)
        si, so = self.si, self.so
        # regularity at the centre
        if k == 1:
            i1 = R.new(); R.add(i1, si.ut[0], 1.0); R.add(i1, si.ur[0], -1j)
            i2 = R.new(); R.add(i2, si.ur[0], -3.0); R.add(i2, si.ur[1], 4.0); R.add(i2, si.ur[2], -1.0)
        else:
            i1 = R.new(); R.add(i1, si.ur[0], 1.0)
            i2 = R.new(); R.add(i2, si.ut[0], 1.0)
        # no slip at the wall
        w1 = R.new(); R.add(w1, so.ur[-1], 1.0)
        w2 = R.new(); R.add(w2, so.ut[-1], 1.0)
        self.tn_in, self.tt_in = _traction_coeffs(si, k, nu, at_end=True)
        self.tn_out, self.tt_out = _traction_coeffs(so, k, nu, at_end=False)
        self.iface = [R.new() for _ in range(4)]
        if dirichlet:
            R.add(self.iface[0], si.ur[-1], 1.0)
            R.add(self.iface[1], si.ut[-1], 1.0)
            R.add(self.iface[2], so.ur[0], 1.0)
            R.add(self.iface[3], so.ut[0], 1.0)
        else:
            R.add(self.iface[0], so.ur[0], 1.0); R.add(self.iface[0], si.ur[-1], -1.0)
            R.add(self.iface[1], so.ut[0], 1.0); R.add(self.iface[1], si.ut[-1], -1.0)
            for row, plus, minus in ((self.iface[2], self.tn_out, self.tn_in), (self.iface[3], self.tt_out, self.tt_in)):
                for j, c in plus.items():
                    R.add(row, j, c)
                for j, c in minus.items():
                    R.add(row, j, -c)
        n = si.size + so.size
        # mode 0: pressure constants are free; border with gauge rows and multipliers
        self.gauges = []
        if k == 0:
            groups = [(si, so)] if not dirichlet else [(si,), (so,)]
            for grp in groups:
                gauge_side = grp[-1]
                col = n + len(self.gauges)
                row = R.new()
                w = gauge_side.g.r_half * gauge_side.g.h
                for j, wj in zip(gauge_side.p, w):
                    R.add(row, j, wj)
                for s in grp:
                    for ic in s.continuity_rows:
                        R.add(ic, col, 1.0)
                self.gauges.append((grp, col))
        self.n = n + len(self.gauges)
        if R.n != self.n:
            raise SingularDiscretizationError(f"row/unknown mismatch {R.n} != {self.n}")
        A = sp.csc_matrix((R.vals, (R.rows, R.cols)), shape=(self.n, self.n), dtype=complex)
        self.A = A
        try:
            self.lu = spla.splu(A)
        except RuntimeError as exc:
            raise SingularDiscretizationError(f"mode {k}: {exc}") from exc

    def rhs(self, jump=None, dirichlet=None, force_inner=None, force_outer=None, div_inner=None, div_outer=None):
        b = np.zeros(self.n, dtype=complex)
        nu, k = self.nu, self.k
        for s, F, D in ((self.si, force_inner, div_inner), (self.so, force_outer, div_outer)):
            g = s.g
            Fv = _sample(F, g.r, 2)
            Dv = _sample(D, g.r_half, 1)[:, 0] if D is not None else None
            for j, ir, it in s.momentum_rows:
                if Fv is not None:
                    b[ir] += Fv[j, 0]
                    b[it] += Fv[j, 1]
                if Dv is not None:
                    # stress-divergence form adds nu * grad(div u)
                    b[ir] += nu * (Dv[j] - Dv[j - 1]) / g.h
                    b[it] += nu * 1j * k / g.r[j] * 0.5 * (Dv[j] + Dv[j - 1])
            if Dv is not None:
                b[s.continuity_rows] += Dv
        if self.dirichlet:
            d = np.zeros(2, dtype=complex) if dirichlet is None else np.asarray(dirichlet, dtype=complex)
            b[self.iface[0]], b[self.iface[1]] = d
            b[self.iface[2]], b[self.iface[3]] = d
        else:
            G = np.zeros(2, dtype=complex) if jump is None else np.asarray(jump, dtype=complex)
            b[self.iface[2]], b[self.iface[3]] = -G
        return b

    def solve(self, b: np.ndarray) -> np.ndarray:
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularDiscretizationError(f"mode {self.k}: non-finite solution")
        for grp, col in self.gauges:
            scale = 1e-12 + np.abs(b).max()
            if abs(x[col]) > 1e-6 * scale:
                raise CompatibilityError(
                    f"mode 0: divergence data inconsistent with the imposed normal flux (defect {abs(x[col]):.3e})")
        return x

    def rhs_batch(self, n_batch: int, jump=None, dirichlet=None, force_inner=None, force_outer=None,
                  div_inner=None, div_outer=None) -> np.ndarray:
        """Vectorized :meth:`rhs` for arrays with a leading batch axis; returns ``(n, n_batch)``."""
        b = np.zeros((self.n, n_batch), dtype=complex)
        nu, k = self.nu, self.k
        for s, F, D in ((self.si, force_inner, div_inner), (self.so, force_outer, div_outer)):
            rows = np.array(s.momentum_rows)
            j, ir, it = rows[:, 0], rows[:, 1], rows[:, 2]
            if F is not None:
                F = np.asarray(F, dtype=complex)
                b[ir] += F[:, j, 0].T
                b[it] += F[:, j, 1].T
            if D is not None:
                D = np.asarray(D, dtype=complex)
                b[ir] += nu * (D[:, j] - D[:, j - 1]).T / s.g.h
                b[it] += (nu * 1j * k / s.g.r[j])[:, None] * 0.5 * (D[:, j] + D[:, j - 1]).T
                b[s.continuity_rows] += D.T
        if self.dirichlet:
            d = np.zeros((n_batch, 2), dtype=complex) if dirichlet is None else np.asarray(dirichlet, dtype=complex)
            b[self.iface[0]], b[self.iface[1]] = d[:, 0], d[:, 1]
            b[self.iface[2]], b[self.iface[3]] = d[:, 0], d[:, 1]
        elif jump is not None:
            G = np.asarray(jump, dtype=complex)
            b[self.iface[2]], b[self.iface[3]] = -G[:, 0], -G[:, 1]
        return b

    def solve_batch(self, b: np.ndarray) -> np.ndarray:
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SingularDiscretizationError(f"mode {self.k}: non-finite solution")
        scale = 1e-12 + np.abs(b).max(axis=0)
        for grp, col in self.gauges:
            bad = np.abs(x[col]) > 1e-6 * scale
            if np.any(bad):
                raise CompatibilityError(
                    f"mode 0: divergence data inconsistent with the imposed normal flux "
                    f"(defect {np.abs(x[col]).max():.3e})")
        return x

    def traction_batch(self, x: np.ndarray, inner: bool) -> np.ndarray:
        """Interface tractions for every column of ``x``; shape ``(n_batch, 2)``."""
        tn, tt = (self.tn_in, self.tt_in) if inner else (self.tn_out, self.tt_out)
        return np.stack([sum(c * x[j] for j, c in tn.items()), sum(c * x[j] for j, c in tt.items())], axis=1)

    def side_profile(self, x: np.ndarray, s: _Side) -> SideProfile:
        return SideProfile(s.g.r, s.g.r_half, x[s.ur], x[s.ut], x[s.p])

    def traction(self, x: np.ndarray, inner: bool) -> np.ndarray:
        tn, tt = (self.tn_in, self.tt_in) if inner else (self.tn_out, self.tt_out)
        return np.array([sum(c * x[j] for j, c in tn.items()), sum(c * x[j] for j, c in tt.items())])


def _sample(prof: Profile, r: np.ndarray, ncomp: int):
    if prof is None:
        return None
    if callable(prof):
        v = np.asarray(prof(r), dtype=complex)
    else:
        v = np.asarray(prof, dtype=complex)
    v = v.reshape(len(r), -1) if v.ndim == 1 or v.shape[0] == len(r) else v.T.reshape(len(r), -1)
    if v.shape[1] != ncomp:
        raise ValueError(f"profile has {v.shape[1]} components, expected {ncomp}")
    return v


@lru_cache(maxsize=512)
def fd_operator(k: int, R_s: float, R_out: float, nu: float, N: int, dirichlet: bool) -> FDModeOperator:
    return FDModeOperator(k, R_s, R_out, nu, N, dirichlet)


def fd_strain_energy(prof: SideProfile, k: int, nu: float) -> float:
    r, ur, ut = prof.r, prof.u_r, prof.u_t
    dur = np.gradient(ur, r, edge_order=2)
    dut = np.gradient(ut, r, edge_order=2)
    dens = np.zeros(len(r))
    m = r > 0
    rr = dur[m]
    tt = (1j * k * ut[m] + ur[m]) / r[m]
    rt = 0.5 * (1j * k * ur[m] / r[m] + dut[m] - ut[m] / r[m])
    dens[m] = r[m] * (np.abs(rr) ** 2 + np.abs(tt) ** 2 + 2 * np.abs(rt) ** 2)
    return float(2 * nu * 2 * np.pi * np.trapezoid(dens, r))


def solve_mode_fd(p: ModeProblem, cfg: BubbleConfig, N: Optional[int] = None) -> ModeFlowSolution:
    N = cfg.N_r if N is None else N
    dirichlet = p.dirichlet is not None
    op = fd_operator(p.k, cfg.R_s, cfg.R_out, cfg.nu, N, dirichlet)
    b = op.rhs(jump=p.jump, dirichlet=p.dirichlet, force_inner=p.force_inner, force_outer=p.force_outer,
               div_inner=p.div_inner, div_outer=p.div_outer)
    if p.k == 0 and dirichlet and p.dirichlet[0] != 0 and p.div_inner is None and p.div_outer is None:
        raise KernelConflictError("mode 0 carries no normal velocity without divergence data")
    x = op.solve(b)
    return _fd_solution(op, x, cfg)


def _fd_solution(op: FDModeOperator, x: np.ndarray, cfg: BubbleConfig) -> ModeFlowSolution:
    k = op.k
    pi, po = op.side_profile(x, op.si), op.side_profile(x, op.so)
    t_in, t_out = op.traction(x, True), op.traction(x, False)
    pj = None
    if k == 0:
        p_out = 1.5 * po.p[0] - 0.5 * po.p[1]
        p_in = 1.5 * pi.p[-1] - 0.5 * pi.p[-2]
        pj = float(np.real(p_out - p_in))
    return ModeFlowSolution(
        k=k, backend="fd", trace=np.array([po.u_r[0], po.u_t[0]]), traction_inner=t_in, traction_outer=t_out,
        strain_energy_outer=fd_strain_energy(po, k, cfg.nu), strain_energy_inner=fd_strain_energy(pi, k, cfg.nu),
        pressure_jump0=pj, inner=pi, outer=po,
    )


def solve_lifting_mode(k: int, force_inner: Profile, force_outer: Profile, div_inner: Profile, div_outer: Profile,
                       cfg: BubbleConfig, N: Optional[int] = None,
                       normal_flux: complex = 0.0) -> tuple[ModeFlowSolution, np.ndarray]:
    """Forced solve with homogeneous Dirichlet data on the interface and the wall.

    Returns the solution and ``[sigma(w, pi)] e_r = traction_outer - traction_inner``.
    ``normal_flux`` sets a mode-0 normal interface velocity so that nonzero net
    divergence data stays compatible (it must be 0 for k != 0).
    """
    if k != 0 and normal_flux != 0:
        raise ValueError("a normal flux is only meaningful for mode 0")
    prob = ModeProblem(k=k, dirichlet=np.array([normal_flux, 0.0]), force_inner=force_inner,
                       force_outer=force_outer, div_inner=div_inner, div_outer=div_outer)
    sol = solve_mode_fd(prob, cfg, N)
    return sol, sol.traction_outer - sol.traction_inner


def compatible_normal_flux(div_inner: np.ndarray, cfg: BubbleConfig, N: Optional[int] = None) -> float:
    """Mode-0 normal interface velocity matching the discrete net divergence inside the disk."""
    gi = RadialGrid.inner(cfg.R_s, cfg.N_r if N is None else N)
    return float(np.real(np.sum(gi.r_half * gi.h * np.asarray(div_inner))) / cfg.R_s)
