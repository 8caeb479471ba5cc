"""Calm-water resistance: ITTC-1957 friction plus Michell thin-ship wave resistance.

Total resistance is ``R_T = R_F + R_W`` (form factor, air and appendage drag
neglected) and the merit coefficient is ``C_T = R_T / (rho g V)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import geometry
from .errors import CoverageError, EvaluationError
from .geometry import HullForm

log = logging.getLogger(__name__)

RHO = 1000.0
GRAVITY = 9.81
NU = 1.016e-6

FN_BAND = (0.05, 0.6)
N_THETA = 256
GL_PANEL_ORDER = 16
TRUNCATION = 1e-14


@dataclass(frozen=True)
class FlowConditions:
    speed: float
    froude: float
    reynolds: float
    length: float
    density: float = RHO
    kinematic_viscosity: float = NU
    gravity: float = GRAVITY

    def __post_init__(self):
        if not self.speed > 0:
            raise ValueError(f"speed must be positive, got {self.speed!r}")
        if not self.reynolds > 100:
            raise ValueError(f"Reynolds number {self.reynolds!r} is in the ITTC-line singular regime")

    @classmethod
    def from_froude(cls, length: float, froude: float, density=RHO, kinematic_viscosity=NU, gravity=GRAVITY):
        U = froude * math.sqrt(gravity * length)
        return cls(U, froude, U * length / kinematic_viscosity, length, density, kinematic_viscosity, gravity)

    @classmethod
    def from_speed(cls, length: float, speed: float, density=RHO, kinematic_viscosity=NU, gravity=GRAVITY):
        return cls(
            speed,
            speed / math.sqrt(gravity * length),
            speed * length / kinematic_viscosity,
            length,
            density,
            kinematic_viscosity,
            gravity,
        )


@dataclass(frozen=True)
class ResistanceBreakdown:
    frictional: float
    wave: float
    total: float
    merit_coefficient: float
    flow: FlowConditions | None = None


@dataclass(frozen=True, eq=False)
class SpeedRange:
    """Operating Froude-number range with a weight tabulated on its evaluation points."""

    fn_lower: float
    fn_upper: float
    n_points: int = 5
    weights: tuple | None = None  # None means uniform

    def __post_init__(self):
        if not 0 < self.fn_lower < self.fn_upper:
            raise ValueError(f"need 0 < fn_lower < fn_upper, got [{self.fn_lower}, {self.fn_upper}]")
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.n_points,):
                raise ValueError(f"expected {self.n_points} tabulated weights, got {w.shape}")
            if np.any(w < 0):
                raise ValueError("weights must be non-negative")
            total = np.trapezoid(w, self.fn_points)
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"weights integrate to {total}, not 1")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @property
    def fn_points(self) -> np.ndarray:
        return np.linspace(self.fn_lower, self.fn_upper, self.n_points)

    def weight_values(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.n_points, 1.0 / (self.fn_upper - self.fn_lower))
        return np.asarray(self.weights)


def friction_coefficient(Re):
    """ITTC-1957 correlation line ``0.075 / (log10 Re - 2)^2``."""
    Re = np.asarray(Re, dtype=float)
    if np.any(~(Re > 100)):
        raise ValueError("ITTC line is singular for Re <= 100")
    cf = 0.075 / (np.log10(Re) - 2.0) ** 2
    return float(cf) if cf.ndim == 0 else cf


def frictional_resistance(hull: HullForm, flow: FlowConditions, wetted_surface: float | None = None) -> float:
    S = geometry.hydrostatics(hull).wetted_surface if wetted_surface is None else wetted_surface
    if not S > 0:
        raise geometry.DegenerateHullError("wetted surface is zero")
    return 0.5 * flow.density * flow.speed**2 * S * friction_coefficient(flow.reynolds)


# -- Michell integral ----------------------------------------------------------

@lru_cache(maxsize=16)
def _theta_rule(n_theta: int, order: int = GL_PANEL_ORDER):
    """Composite Gauss-Legendre nodes/weights on (0, pi/2), ``n_theta`` nodes in total."""
    order = min(order, n_theta)
    if n_theta % order:
        raise ValueError(f"n_theta={n_theta} must be a multiple of {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 0.5 * np.pi, n_theta // order + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    theta = (mid + half * x).ravel()
    weight = (half * w).ravel()
    theta.setflags(write=False)
    weight.setflags(write=False)
    return theta, weight


_SERIES_N = np.arange(16)
_SERIES_A = np.array([1.0 / math.factorial(k + 2) for k in _SERIES_N])
_SERIES_B = np.array([(k + 1) / math.factorial(k + 2) for k in _SERIES_N])


def linear_product_weights(t, c):
    """Weights ``W[m, i]`` with ``sum_i W[m, i] f_i = int f(t) exp(c_m t) dt``.

    ``f`` is the piecewise-linear interpolant of nodal values on ``t``; the
    exponential is integrated exactly on every interval, so rapidly varying
    kernels are handled without resolving them on the grid. For ``c -> 0``
    this is the trapezoidal rule. Requires ``Re(c t) <= 0`` at the right end
    of every interval when ``c`` is real and large (no overflow guard).
    """
    t = np.asarray(t, dtype=float)
    c = np.asarray(c)[:, None]
    h = np.diff(t)[None, :]
    w = c * h
    ea = np.exp(c * t[None, :-1])
    eb = np.exp(c * t[None, 1:])
    small = np.abs(w) < 0.5
    ws = np.where(small, 1.0, w)
    left = h * (eb - ea - ws * ea) / ws**2
    right = h * (eb * (ws - 1.0) + ea) / ws**2
    if np.any(small):
        powers = w[..., None] ** _SERIES_N
        left = np.where(small, h * ea * (powers @ _SERIES_A), left)
        right = np.where(small, h * ea * (powers @ _SERIES_B), right)
    W = np.zeros((c.shape[0], t.size), dtype=np.result_type(left, float))
    W[:, :-1] += left
    W[:, 1:] += right
    return W


def michell_amplitude(x, z, slope, k0: float, lam) -> np.ndarray:
    """Complex ``P + iQ`` of the Michell integral for each ``lam`` in ``lam``.

    ``x`` (stations) and ``z`` (waterlines, <= 0) are 1-D dimensional
    coordinates; ``slope`` is dy/dx on that grid.
    """
    lam = np.asarray(lam, dtype=float)
    Wz = linear_product_weights(z, k0 * lam**2)
    Wx = linear_product_weights(x, 1j * k0 * lam)
    return np.einsum("mi,ij,mj->m", Wx, slope, Wz)


def wave_resistance(hull: HullForm, flow: FlowConditions, n_theta: int = N_THETA) -> float:
    """Michell thin-ship wave resistance in newtons.

    ``R_W = 4 rho g^2 / (pi U^2) int_1^inf (P^2 + Q^2) lam^2 / sqrt(lam^2 - 1) dlam``
    evaluated with ``lam = sec(theta)`` on (0, pi/2).
    """
    x2, y2, z2 = geometry.dimensionalize(hull.grid, hull.length, hull.length_to_beam, hull.beam_to_draft)
    x, z = x2[:, 0], z2[0]
    slope = np.gradient(y2, x, axis=0, edge_order=1)
    g, U = flow.gravity, flow.speed
    k0 = g / U**2
    theta, weight = _theta_rule(n_theta)
    lam = 1.0 / np.cos(theta)
    with np.errstate(over="raise", invalid="raise"):
        try:
            amp = michell_amplitude(x, z, slope, k0, lam)
            integrand = (amp.real**2 + amp.imag**2) * lam**3
        except FloatingPointError as exc:
            raise EvaluationError(f"non-finite Michell integrand at U={U!r}") from exc
    if not np.all(np.isfinite(integrand)):
        raise EvaluationError(f"non-finite Michell integrand at U={U!r}")

    # drop trailing panels once the depth decay has made them negligible
    contrib = (weight * integrand).reshape(-1, min(GL_PANEL_ORDER, n_theta))
    peak = np.maximum.accumulate(contrib.max(axis=1))
    negligible = contrib.max(axis=1) < TRUNCATION * peak
    stop = contrib.shape[0]
    for i in range(1, contrib.shape[0]):
        if negligible[i:].all():
            stop = i
            break
    rw = 4.0 * flow.density * g**2 / (math.pi * U**2) * contrib[:stop].sum()
    return max(float(rw), 0.0)


# -- performance evaluation ----------------------------------------------------

def evaluate(hull: HullForm, Fn: float, n_theta: int = N_THETA, hydrostatics=None) -> ResistanceBreakdown:
    if not FN_BAND[0] <= Fn <= FN_BAND[1]:
        raise ValueError(f"Froude number {Fn} outside the supported band {FN_BAND}")
    hs = geometry.hydrostatics(hull) if hydrostatics is None else hydrostatics
    flow = FlowConditions.from_froude(hull.length, Fn)
    rf = frictional_resistance(hull, flow, hs.wetted_surface)
    rw = wave_resistance(hull, flow, n_theta)
    rt = rf + rw
    return ResistanceBreakdown(rf, rw, rt, rt / (flow.density * flow.gravity * hs.displaced_volume), flow)


def resistance_curve(hull: HullForm, fns: Iterable[float], n_theta: int = N_THETA) -> list[ResistanceBreakdown]:
    hs = geometry.hydrostatics(hull)
    return [evaluate(hull, float(fn), n_theta, hs) for fn in fns]


def _evaluate_task(task):
    hull, fns, n_theta = task
    return resistance_curve(hull, fns, n_theta)


def evaluate_many(
    hulls: Sequence[HullForm], fns: Sequence[float], workers: int | None = 1, n_theta: int = N_THETA
) -> list[list[ResistanceBreakdown]]:
    """Resistance curves of many hulls, in input order whatever the scheduling.

    ``workers > 1`` spreads hulls over a process pool.
    """
    tasks = [(h, tuple(float(f) for f in fns), n_theta) for h in hulls]
    if not workers or workers <= 1 or len(tasks) <= 1:
        return [_evaluate_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_evaluate_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def operational_merit(fns, cts, speed_range: SpeedRange) -> float:
    """Weighted mean merit coefficient over the operating range.

    The curve is linearly interpolated onto the range's evaluation points and
    the product of the piecewise-linear weight and curve is integrated
    exactly; with a uniform weight this is the trapezoidal rule.
    """
    fns = np.asarray(fns, dtype=float)
    cts = np.asarray(cts, dtype=float)
    if fns.ndim != 1 or fns.shape != cts.shape[-1:]:
        raise ValueError("fns and cts lengths differ")
    if np.any(np.diff(fns) <= 0):
        raise ValueError("Froude numbers must be strictly increasing")
    eps = 1e-12
    if fns[0] > speed_range.fn_lower + eps or fns[-1] < speed_range.fn_upper - eps:
        raise CoverageError(
            f"curve [{fns[0]}, {fns[-1]}] does not cover [{speed_range.fn_lower}, {speed_range.fn_upper}]"
        )
    pts = speed_range.fn_points
    if fns.shape == pts.shape and np.allclose(fns, pts, rtol=0, atol=eps):
        c = cts
    else:
        c = np.apply_along_axis(lambda row: np.interp(pts, fns, row), -1, np.atleast_1d(cts))
    w = speed_range.weight_values()
    h = np.diff(pts)
    ca, cb = c[..., :-1], c[..., 1:]
    wa, wb = w[:-1], w[1:]
    beta = np.sum(h * (wa * ca / 3 + wa * cb / 6 + wb * ca / 6 + wb * cb / 3), axis=-1)
    return float(beta) if np.ndim(beta) == 0 else beta


def hydro_beta(hull: HullForm, speed_range: SpeedRange, n_theta: int = N_THETA) -> float:
    """Operational merit of a hull computed with the resistance solver."""
    curve = resistance_curve(hull, speed_range.fn_points, n_theta)
    return float(operational_merit(speed_range.fn_points, [r.merit_coefficient for r in curve], speed_range))


CURVE_COLUMNS = ("Fn", "U", "Re", "R_F", "R_W", "R_T", "C_T")


def curve_to_csv(curve: Sequence[ResistanceBreakdown]) -> str:
    lines = [",".join(CURVE_COLUMNS)]
    for r in curve:
        f = r.flow
        vals = (f.froude, f.speed, f.reynolds, r.frictional, r.wave, r.total, r.merit_coefficient)
        lines.append(",".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"
