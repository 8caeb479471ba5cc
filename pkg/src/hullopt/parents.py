"""Bundled analytic parent hulls.

The published Series 60 and S175 offset tables are not redistributed here.
Instead each parent is an analytic body whose block and prismatic
coefficients on the default 40 x 20 grid match the published particulars
(to about 1e-7). Real tables can be used instead through
:func:`hullopt.geometry.read_offset_table`.

Non-Wigley parents share one family: waterline half-breadth
``b = 1 - u**m`` outside a parallel middle body of half-length ``p``, with
``m`` set separately fore and aft, and sections built from a flat side, an
elliptic bilge of normalized radius ``r`` and a flat bottom. The bilge radius
grows from ``r_mid`` amidships to 1 (fully rounded) at the ends.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import N_STATIONS, N_WATERLINES, OffsetGrid, uniform_grid, wigley_grid


@dataclass(frozen=True)
class ParentHull:
    name: str
    grid: OffsetGrid
    length_to_beam: float
    beam_to_draft: float


def _bilge_section(zeta, r):
    zeta, r = np.broadcast_arrays(zeta, r)
    safe = np.where(r > 0, r, 1.0)
    t = np.where(r > 0, np.clip((np.abs(zeta) - (1.0 - r)) / safe, 0.0, 1.0), 0.0)
    return (1.0 - r) + r * np.sqrt(1.0 - t * t)


def family_grid(
    midbody: float,
    m_fore: float,
    m_aft: float,
    r_mid: float,
    bilge_growth: float = 2.0,
    n_stations: int = N_STATIONS,
    n_waterlines: int = N_WATERLINES,
) -> OffsetGrid:
    xs, zs = uniform_grid(n_stations, n_waterlines)
    xi = 2.0 * xs - 1.0
    m = np.where(xi > 0, m_fore, m_aft)
    u = np.clip((np.abs(xi) - midbody) / (1.0 - midbody), 0.0, 1.0)
    b = 1.0 - u**m
    r = r_mid + (1.0 - r_mid) * (1.0 - b) ** bilge_growth
    return OffsetGrid(xs, zs, b[:, None] * _bilge_section(zs[None, :], r[:, None]))


# (midbody, m_fore, m_aft, r_mid) solved for the target C_B, C_P on 40 x 20
_FAMILY = {
    "series60_cb060": (0.0, 1.498418, 1.498418 * 1.2, 0.29119),
    "series60_cb070": (0.2, 1.665673, 1.665673 * 1.2, 0.239948),
    "s175_container": (0.1, 1.281803, 1.281803 * 0.9, 0.386461),
}

# L/B and B/T of the reference ships
PARTICULARS = {
    "series60_cb060": (7.5, 2.5),
    "series60_cb070": (7.0, 2.5),
    "s175_container": (6.9, 2.67),
    "wigley": (10.0, 1.6),
}

PARENT_NAMES = tuple(PARTICULARS)


def parent_grid(name: str, n_stations: int = N_STATIONS, n_waterlines: int = N_WATERLINES) -> OffsetGrid:
    if name == "wigley":
        return wigley_grid(n_stations, n_waterlines)
    try:
        args = _FAMILY[name]
    except KeyError:
        raise KeyError(f"unknown parent {name!r}; choose from {PARENT_NAMES}") from None
    return family_grid(*args, n_stations=n_stations, n_waterlines=n_waterlines)


def bundled_parents(n_stations: int = N_STATIONS, n_waterlines: int = N_WATERLINES) -> list[ParentHull]:
    return [
        ParentHull(name, parent_grid(name, n_stations, n_waterlines), *PARTICULARS[name])
        for name in PARENT_NAMES
    ]
