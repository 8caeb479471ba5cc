"""Offset-grid hull geometry and hydrostatics.

Hulls are stored as normalized half-breadths ``y* = y / (B/2)`` sampled on a
grid of stations ``x* = x / L`` in [0, 1] (0 at the stern, 1 at the bow) and
waterlines ``z* = z / T`` in [-1, 0] (keel at -1, calm waterline at 0).
Offsets are indexed ``[station, waterline]``. Only the underwater body is
modelled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateHullError,
    FormatError,
    InvalidDimensionError,
    InvalidGridError,
)

log = logging.getLogger(__name__)

N_STATIONS = 40
N_WATERLINES = 20
OFFSET_CAP = 1.5
OFFSET_FORMAT = "hullopt-offsets"
OFFSET_FORMAT_VERSION = 1


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class OffsetGrid:
    stations: np.ndarray
    waterlines: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        st = _frozen(self.stations)
        wl = _frozen(self.waterlines)
        off = _frozen(self.offsets)
        if st.ndim != 1 or wl.ndim != 1 or st.size < 2 or wl.size < 2:
            raise InvalidGridError("need at least 2 stations and 2 waterlines")
        if np.any(np.diff(st) <= 0) or np.any(np.diff(wl) <= 0):
            raise InvalidGridError("stations and waterlines must be strictly increasing")
        if off.shape != (st.size, wl.size):
            raise InvalidGridError(
                f"offsets shape {off.shape} does not match grid {(st.size, wl.size)}"
            )
        if not np.all(np.isfinite(off)):
            raise InvalidGridError("offsets must be finite")
        object.__setattr__(self, "stations", st)
        object.__setattr__(self, "waterlines", wl)
        object.__setattr__(self, "offsets", off)

    @property
    def shape(self) -> tuple[int, int]:
        return self.offsets.shape

    def same_template(self, other: "OffsetGrid") -> bool:
        return (
            self.shape == other.shape
            and np.array_equal(self.stations, other.stations)
            and np.array_equal(self.waterlines, other.waterlines)
        )

    def flatten(self) -> np.ndarray:
        """Row-major (station-major) offset vector."""
        return self.offsets.ravel()

    def with_offsets(self, offsets) -> "OffsetGrid":
        return OffsetGrid(self.stations, self.waterlines, np.reshape(offsets, self.shape))

    def __eq__(self, other):
        if not isinstance(other, OffsetGrid):
            return NotImplemented
        return self.same_template(other) and np.array_equal(self.offsets, other.offsets)


@dataclass(frozen=True, eq=False)
class HullForm:
    grid: OffsetGrid
    length: float
    length_to_beam: float
    beam_to_draft: float

    def __post_init__(self):
        _check_dims(self.length, self.length_to_beam, self.beam_to_draft)

    @property
    def beam(self) -> float:
        return self.length / self.length_to_beam

    @property
    def draft(self) -> float:
        return self.beam / self.beam_to_draft


@dataclass(frozen=True)
class HydrostaticsReport:
    displaced_volume: float
    wetted_surface: float
    midship_area: float
    block_coefficient: float
    prismatic_coefficient: float
    slenderness: float

    @property
    def midship_coefficient(self) -> float:
        return self.block_coefficient / self.prismatic_coefficient


@dataclass(frozen=True)
class ValidityReport:
    n_negative: int
    n_over_cap: int
    cb_exceeds_cp: bool = False

    @property
    def valid(self) -> bool:
        return self.n_negative == 0 and self.n_over_cap == 0


def _check_dims(L, L_over_B, B_over_T):
    for name, v in (("L", L), ("L/B", L_over_B), ("B/T", B_over_T)):
        if not np.isfinite(v) or v <= 0:
            raise InvalidDimensionError(f"{name} must be positive, got {v!r}")


def uniform_grid(n_stations: int = N_STATIONS, n_waterlines: int = N_WATERLINES):
    """Equally spaced (stations, waterlines) covering [0, 1] x [-1, 0]."""
    if n_stations < 2 or n_waterlines < 2:
        raise InvalidGridError("need at least 2 stations and 2 waterlines")
    return np.linspace(0.0, 1.0, n_stations), np.linspace(-1.0, 0.0, n_waterlines)


def wigley_grid(n_stations: int = N_STATIONS, n_waterlines: int = N_WATERLINES) -> OffsetGrid:
    """Parabolic Wigley hull, y* = (1 - (2x* - 1)^2)(1 - z*^2)."""
    xs, zs = uniform_grid(n_stations, n_waterlines)
    y = (1.0 - (2.0 * xs[:, None] - 1.0) ** 2) * (1.0 - zs[None, :] ** 2)
    return OffsetGrid(xs, zs, y)


def dimensionalize(grid: OffsetGrid, L: float, L_over_B: float, B_over_T: float):
    """Return dimensional node coordinates ``(x, y, z)``, each shaped like the offsets."""
    _check_dims(L, L_over_B, B_over_T)
    B = L / L_over_B
    T = B / B_over_T
    x = np.broadcast_to(grid.stations[:, None] * L, grid.shape).copy()
    z = np.broadcast_to(grid.waterlines[None, :] * T, grid.shape).copy()
    y = grid.offsets * (0.5 * B)
    return x, y, z


def normalize(x, y, z, L: float, L_over_B: float, B_over_T: float):
    """Inverse of :func:`dimensionalize` applied to coordinate arrays."""
    _check_dims(L, L_over_B, B_over_T)
    B = L / L_over_B
    T = B / B_over_T
    return np.asarray(x) / L, np.asarray(y) / (0.5 * B), np.asarray(z) / T


def _midship_section(grid: OffsetGrid) -> np.ndarray:
    # nearest station to x* = 0.5; average the two when equidistant
    d = np.abs(grid.stations - 0.5)
    near = np.flatnonzero(np.isclose(d, d.min(), rtol=0.0, atol=1e-12))
    return grid.offsets[near].mean(axis=0)


def _triangle_areas(a, b, c):
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def wetted_surface(hull: HullForm) -> float:
    """Wetted area of both sides from triangulated grid panels.

    Each grid quad is split along its (i, j)-(i+1, j+1) diagonal. A flat
    bottom at the keel waterline and flat end caps are added when the keel
    row or the end stations carry non-zero offsets.
    """
    x, y, z = dimensionalize(hull.grid, hull.length, hull.length_to_beam, hull.beam_to_draft)
    p = np.stack([x, y, z], axis=-1)
    p00, p10, p11, p01 = p[:-1, :-1], p[1:, :-1], p[1:, 1:], p[:-1, 1:]
    side = _triangle_areas(p00, p10, p11).sum() + _triangle_areas(p00, p11, p01).sum()
    bottom = np.trapezoid(y[:, 0], x[:, 0])
    ends = np.trapezoid(y[0], z[0]) + np.trapezoid(y[-1], z[-1])
    return float(2.0 * (side + bottom + ends))


def hydrostatics(hull: HullForm) -> HydrostaticsReport:
    grid = hull.grid
    L, B, T = hull.length, hull.beam, hull.draft
    # 2 * int int y dx dz with y = y* B/2, x = x* L, z = z* T
    vol = L * B * T * np.trapezoid(np.trapezoid(grid.offsets, grid.waterlines, axis=1), grid.stations)
    if not vol > 0:
        raise DegenerateHullError(f"displaced volume is {vol!r}")
    am = B * T * np.trapezoid(_midship_section(grid), grid.waterlines)
    if not am > 0:
        raise DegenerateHullError(f"midship area is {am!r}")
    return HydrostaticsReport(
        displaced_volume=float(vol),
        wetted_surface=wetted_surface(hull),
        midship_area=float(am),
        block_coefficient=float(vol / (L * B * T)),
        prismatic_coefficient=float(vol / (am * L)),
        slenderness=float(L / vol ** (1.0 / 3.0)),
    )


def validate(grid: OffsetGrid, cap: float = OFFSET_CAP) -> ValidityReport:
    off = grid.offsets
    # C_B > C_P exactly when the normalized midship section area exceeds 1
    mid = np.trapezoid(_midship_section(grid), grid.waterlines)
    cb_gt_cp = bool(mid > 1.0 + 1e-12)
    return ValidityReport(
        n_negative=int(np.count_nonzero(off < 0)),
        n_over_cap=int(np.count_nonzero(off > cap)),
        cb_exceeds_cp=cb_gt_cp,
    )


def clamp(grid: OffsetGrid) -> tuple[OffsetGrid, int]:
    """Copy of ``grid`` with negative offsets set to zero, and the count changed."""
    neg = grid.offsets < 0
    n = int(np.count_nonzero(neg))
    if n == 0:
        return grid, 0
    log.debug("clamped %d negative offsets", n)
    return grid.with_offsets(np.where(neg, 0.0, grid.offsets)), n


# -- offset-table text format ------------------------------------------------

def format_offset_table(grid: OffsetGrid, name: str = "", extra: dict | None = None) -> str:
    """Offset table as text; ``extra`` adds a ``# key=value ...`` line (values without spaces)."""
    ns, nw = grid.shape
    lines = [
        f"# {OFFSET_FORMAT} v{OFFSET_FORMAT_VERSION} stations={ns} waterlines={nw}",
        "# first row: waterline z*; first column: station x*; body: half-breadth y*",
    ]
    if name:
        lines.append(f"# name={name}")
    if extra:
        lines.append("# " + " ".join(f"{k}={v}" for k, v in extra.items()))
    lines.append(" ".join(["x*\\z*"] + [repr(float(v)) for v in grid.waterlines]))
    for x, row in zip(grid.stations, grid.offsets):
        lines.append(" ".join([repr(float(x))] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def parse_offset_table(text: str) -> tuple[OffsetGrid, dict]:
    meta: dict = {}
    rows = []
    header_seen = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].split()
            if body and body[0] == OFFSET_FORMAT:
                if body[1] != f"v{OFFSET_FORMAT_VERSION}":
                    raise FormatError(f"unsupported offset-table version {body[1]}")
                header_seen = True
                for tok in body[2:]:
                    k, _, v = tok.partition("=")
                    meta[k] = int(v)
            elif body and body[0].startswith("name="):
                meta["name"] = line[1:].strip()[5:]
            elif body and all("=" in tok for tok in body):
                meta.update(tok.split("=", 1) for tok in body)
            continue
        rows.append(line.split())
    if not header_seen:
        raise FormatError("missing offset-table header line")
    if len(rows) < 3:
        raise FormatError("offset table has no body")
    waterlines = [float(v) for v in rows[0][1:]]
    stations = [float(r[0]) for r in rows[1:]]
    offsets = [[float(v) for v in r[1:]] for r in rows[1:]]
    if any(len(r) != len(waterlines) for r in offsets):
        raise FormatError("ragged offset table")
    grid = OffsetGrid(stations, waterlines, offsets)
    if (meta.get("stations"), meta.get("waterlines")) != grid.shape:
        raise FormatError(f"header dimensions {meta} disagree with body {grid.shape}")
    return grid, meta


def write_offset_table(path, grid: OffsetGrid, name: str = "", extra: dict | None = None) -> None:
    Path(path).write_text(format_offset_table(grid, name, extra))


def read_offset_table(path) -> OffsetGrid:
    return parse_offset_table(Path(path).read_text())[0]


def surface_mesh(hull: HullForm):
    """Triangulated port and starboard surfaces as ``(vertices, faces)``."""
    x, y, z = dimensionalize(hull.grid, hull.length, hull.length_to_beam, hull.beam_to_draft)
    ns, nw = hull.grid.shape
    port = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    stbd = port * np.array([1.0, -1.0, 1.0])
    verts = np.vstack([port, stbd])
    idx = np.arange(ns * nw).reshape(ns, nw)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[1:, 1:], idx[:-1, 1:]
    tri = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    faces = np.vstack([tri, tri[:, ::-1] + ns * nw])
    return verts, faces


def write_obj(path, hull: HullForm) -> None:
    verts, faces = surface_mesh(hull)
    out = [f"v {v[0]!r} {v[1]!r} {v[2]!r}" for v in verts.tolist()]
    out += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in faces.tolist()]
    Path(path).write_text("\n".join(out) + "\n")
