"""PCA compression of offset grids and generation of new hull forms.

Grids are flattened station-major into vectors of length ``l``; the model
keeps the per-node means and the leading ``d`` right-singular vectors of the
centered parent matrix as the columns of the compression matrix.
"""

from __future__ import annotations

import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import geometry
from .errors import (
    FitError,
    FormatError,
    GridMismatchError,
    InsufficientParentsError,
    InvalidGridError,
    RankDeficiencyWarning,
)
from .geometry import HullForm, OffsetGrid

log = logging.getLogger(__name__)

PCA_FORMAT = "hullopt-pca"
PCA_FORMAT_VERSION = 1

# lower/upper limits for (scaled scores..., L/B, B/T) when generating hulls
DEFAULT_SCORE_BOUNDS = (0.0, 1.0)
DEFAULT_LB_BOUNDS = (6.9, 9.0)
DEFAULT_BT_BOUNDS = (2.0, 3.5)
DEFAULT_LENGTH_RANGE = (150.0, 350.0)


def default_bounds(d: int = 3) -> np.ndarray:
    return np.array([DEFAULT_SCORE_BOUNDS] * d + [DEFAULT_LB_BOUNDS, DEFAULT_BT_BOUNDS])


@dataclass(frozen=True, eq=False)
class PcaModel:
    stations: np.ndarray
    waterlines: np.ndarray
    means: np.ndarray
    compression: np.ndarray  # (l, d), orthonormal columns
    score_min: np.ndarray
    score_max: np.ndarray
    explained_variance: np.ndarray
    parent_scores: np.ndarray  # (n, d), parents in canonical order

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def d(self) -> int:
        return self.compression.shape[1]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.stations.size, self.waterlines.size

    def template(self) -> OffsetGrid:
        return OffsetGrid(self.stations, self.waterlines, np.zeros(self.grid_shape))

    def mean_grid(self) -> OffsetGrid:
        return OffsetGrid(self.stations, self.waterlines, self.means.reshape(self.grid_shape))


@dataclass(frozen=True)
class ScoreVector:
    """Scaled principal scores, each in [0, 1]."""

    values: tuple[float, ...]

    @classmethod
    def from_values(cls, values, d: int, strict: bool = True) -> "ScoreVector":
        v = np.asarray(values, dtype=float).ravel()
        if v.size != d:
            raise ValueError(f"expected {d} scores, got {v.size}")
        if strict and np.any((v < 0) | (v > 1)):
            raise ValueError(f"scaled scores out of [0, 1]: {v}")
        return cls(tuple(float(x) for x in np.clip(v, 0.0, 1.0)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _grids(parents) -> list[OffsetGrid]:
    return [p if isinstance(p, OffsetGrid) else p.grid for p in parents]


def _check_template(model: PcaModel, grid: OffsetGrid):
    if grid.shape != model.grid_shape or not (
        np.array_equal(grid.stations, model.stations)
        and np.array_equal(grid.waterlines, model.waterlines)
    ):
        raise GridMismatchError("grid does not share the model's station/waterline template")


def fit(parents: Sequence, d: int | str | None = "max") -> PcaModel:
    """Fit the compression on parent grids (``OffsetGrid`` or objects with ``.grid``).

    Parents are put into a canonical order first, so the fitted model does
    not depend on the order they are supplied in.
    """
    grids = _grids(parents)
    n = len(grids)
    if n < 2:
        raise InsufficientParentsError(f"need at least 2 parents, got {n}")
    ref = grids[0]
    if not all(ref.same_template(g) for g in grids[1:]):
        raise GridMismatchError("parents must share one station/waterline template")
    if d in (None, "max"):
        d = n - 1
    d = int(d)
    if not 1 <= d <= n - 1:
        raise FitError(f"d must lie in [1, {n - 1}], got {d}")

    Y = np.array(sorted((g.flatten() for g in grids), key=lambda v: tuple(v.tolist())))
    mu = Y.mean(axis=0)
    Yc = Y - mu
    _, s, vt = np.linalg.svd(Yc, full_matrices=False)
    tol = max(Yc.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int(np.count_nonzero(s > tol)) if s[0] > 0 else 0
    if rank < d:
        warnings.warn(
            f"only {rank} non-degenerate principal axes; reducing d from {d} to {rank}",
            RankDeficiencyWarning,
            stacklevel=2,
        )
        d = rank
    if d == 0:
        raise FitError("parents are identical; no principal axes exist")

    W = vt[:d].T.copy()
    # sign convention: largest-magnitude entry of each column is positive
    pivot = np.argmax(np.abs(W), axis=0)
    W *= np.sign(W[pivot, np.arange(d)])
    scores = Yc @ W
    smin, smax = scores.min(axis=0), scores.max(axis=0)
    if np.any(smax <= smin):
        raise FitError("degenerate score axis (min == max)")
    var = s[:rank] ** 2
    return PcaModel(
        stations=ref.stations,
        waterlines=ref.waterlines,
        means=mu,
        compression=W,
        score_min=smin,
        score_max=smax,
        explained_variance=var[:d] / var.sum(),
        parent_scores=scores,
    )


def compress(model: PcaModel, grid: OffsetGrid) -> np.ndarray:
    _check_template(model, grid)
    return model.compression.T @ (grid.flatten() - model.means)


def reconstruct(model: PcaModel, scores, clamp: bool = True) -> OffsetGrid:
    """Offset grid for raw principal ``scores``; negatives clamped to 0 by default."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape != (model.d,):
        raise ValueError(f"expected {model.d} scores, got shape {scores.shape}")
    grid = OffsetGrid(
        model.stations, model.waterlines, (model.compression @ scores + model.means).reshape(model.grid_shape)
    )
    if not clamp:
        return grid
    report = geometry.validate(grid)
    if report.n_over_cap:
        log.warning("reconstructed grid has %d offsets above the sanity cap", report.n_over_cap)
    grid, _ = geometry.clamp(grid)
    return grid


def scale_scores(model: PcaModel, raw) -> np.ndarray:
    return (np.asarray(raw, dtype=float) - model.score_min) / (model.score_max - model.score_min)


def unscale_scores(model: PcaModel, scaled) -> np.ndarray:
    return model.score_min + np.asarray(scaled, dtype=float) * (model.score_max - model.score_min)


def hull_from_params(model: PcaModel, params, L: float) -> HullForm:
    """Deterministic hull for ``params = (scaled scores..., L/B, B/T)`` at length ``L``."""
    params = np.asarray(params, dtype=float)
    if params.shape != (model.d + 2,):
        raise ValueError(f"expected {model.d + 2} hull-form parameters, got shape {params.shape}")
    grid = reconstruct(model, unscale_scores(model, params[: model.d]))
    return HullForm(grid, float(L), float(params[-2]), float(params[-1]))


def sample_params(bounds, length_range, seed) -> tuple[np.ndarray, float]:
    """Uniform independent draw of hull-form parameters and hull length."""
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    Llo, Lhi = map(float, length_range)
    if np.any(lo > hi) or Llo > Lhi:
        raise ValueError("sampling bounds are inverted")
    rng = np.random.default_rng(seed)
    u = rng.random(bounds.shape[0] + 1)
    params = lo + (hi - lo) * u[:-1]
    return params, Llo + (Lhi - Llo) * u[-1]


def sample_hull(model: PcaModel, bounds=None, length_range=DEFAULT_LENGTH_RANGE, seed=0) -> HullForm:
    if bounds is None:
        bounds = default_bounds(model.d)
    params, L = sample_params(bounds, length_range, seed)
    return hull_from_params(model, params, L)


# -- correlation study ---------------------------------------------------------

@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r: float
    n: int


def linear_fit(x, y) -> LinearFit:
    """Ordinary least-squares line and Pearson correlation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct abscissae for a linear fit")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    sxy = np.sum((x - xm) * (y - ym))
    syy = np.sum((y - ym) ** 2)
    slope = sxy / sxx
    r = sxy / np.sqrt(sxx * syy) if syy > 0 else 0.0
    return LinearFit(float(slope), float(ym - slope * xm), float(np.clip(r, -1.0, 1.0)), int(x.size))


@dataclass
class CorrelationReport:
    scaled_scores: np.ndarray  # (m, d)
    block_coefficient: np.ndarray
    prismatic_coefficient: np.ndarray
    fits: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        d = self.scaled_scores.shape[1]
        lines = [
            f"# {k}: slope={f.slope!r} intercept={f.intercept!r} r={f.r!r} n={f.n}"
            for k, f in self.fits.items()
        ]
        lines.append(",".join([f"lambda{j + 1}" for j in range(d)] + ["C_B", "C_P"]))
        for s, cb, cp in zip(self.scaled_scores, self.block_coefficient, self.prismatic_coefficient):
            lines.append(",".join(repr(float(v)) for v in (*s, cb, cp)))
        return "\n".join(lines) + "\n"


def correlation_report(model: PcaModel, hulls: Sequence[HullForm]) -> CorrelationReport:
    """Linear fits of scaled score 1 against C_B and scaled score 2 against C_P."""
    lam = np.array([scale_scores(model, compress(model, h.grid)) for h in hulls])
    hs = [geometry.hydrostatics(h) for h in hulls]
    cb = np.array([h.block_coefficient for h in hs])
    cp = np.array([h.prismatic_coefficient for h in hs])
    fits = {"lambda1_vs_CB": linear_fit(lam[:, 0], cb)}
    if model.d >= 2:
        fits["lambda2_vs_CP"] = linear_fit(lam[:, 1], cp)
    return CorrelationReport(lam, cb, cp, fits)


# -- model file ----------------------------------------------------------------

def model_to_dict(model: PcaModel) -> dict:
    return {
        "format": PCA_FORMAT,
        "version": PCA_FORMAT_VERSION,
        "flatten_order": "station-major",
        "stations": model.stations.tolist(),
        "waterlines": model.waterlines.tolist(),
        "d": model.d,
        "means": model.means.tolist(),
        "compression": model.compression.ravel().tolist(),
        "score_min": model.score_min.tolist(),
        "score_max": model.score_max.tolist(),
        "explained_variance": model.explained_variance.tolist(),
        "parent_scores": model.parent_scores.ravel().tolist(),
    }


def model_from_dict(data: dict) -> PcaModel:
    if data.get("format") != PCA_FORMAT or data.get("version") != PCA_FORMAT_VERSION:
        raise FormatError(f"not a {PCA_FORMAT} v{PCA_FORMAT_VERSION} file")
    if data.get("flatten_order") != "station-major":
        raise FormatError(f"unsupported flatten order {data.get('flatten_order')!r}")
    d = int(data["d"])
    try:
        return PcaModel(
            stations=data["stations"],
            waterlines=data["waterlines"],
            means=data["means"],
            compression=np.reshape(data["compression"], (-1, d)),
            score_min=data["score_min"],
            score_max=data["score_max"],
            explained_variance=data["explained_variance"],
            parent_scores=np.reshape(data["parent_scores"], (-1, d)),
        )
    except (KeyError, ValueError, InvalidGridError) as exc:
        raise FormatError(f"malformed PCA model: {exc}") from exc


def dumps(model: PcaModel) -> str:
    return json.dumps(model_to_dict(model), indent=1, sort_keys=True) + "\n"


def loads(text: str) -> PcaModel:
    return model_from_dict(json.loads(text))


def save(model: PcaModel, path) -> str:
    text = dumps(model)
    Path(path).write_text(text)
    return digest(model)


def load(path) -> PcaModel:
    return loads(Path(path).read_text())


def digest(model: PcaModel) -> str:
    return hashlib.sha256(dumps(model).encode()).hexdigest()
