"""Box-bounded search for the hull form with the lowest operational merit.

Two stages are run in sequence. A repeated Monte-Carlo search draws uniform
candidates, keeps the best one and shrinks the sampling window around it
after every round. A coordinate refinement then sweeps one parameter at a
time over an equispaced grid while the others stay fixed.

Both stages accept any objective that maps an ``(n, 5)`` array of candidate
parameters to ``n`` merit values, so they can be checked on analytic test
functions; passing a trained :class:`~hullopt.surrogate.MlpModel` builds the
surrogate objective automatically.
"""

from __future__ import annotations

import json
import logging
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import geometry, hydro, parents as parents_mod, pca, surrogate
from .errors import ProvenanceError
from .geometry import HullForm, HydrostaticsReport
from .hydro import SpeedRange
from .pca import PcaModel
from .surrogate import MlpModel

log = logging.getLogger(__name__)

REPORT_FORMAT = "hullopt-search"
REPORT_FORMAT_VERSION = 1
PARAM_NAMES = ("lambda1", "lambda2", "lambda3", "L_over_B", "B_over_T")

# search box of the optimization study
SEARCH_SCORE_BOUNDS = (0.0, 1.0)
SEARCH_LB_BOUNDS = (7.0, 9.0)
SEARCH_BT_BOUNDS = (2.0, 3.1)

# (length in m, lower Fn, upper Fn) of the two design cases
CASES = {
    1: (300.0, 0.20, 0.24),
    2: (170.0, 0.26, 0.30),
}

Objective = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class SearchSpace:
    bounds: np.ndarray  # (n_params, 2)
    length: float
    speed_range: SpeedRange

    def __post_init__(self):
        b = np.array(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("bounds must have shape (n_params, 2)")
        if np.any(b[:, 0] > b[:, 1]) or not np.all(np.isfinite(b)):
            raise ValueError("every axis needs finite bounds with lo <= hi")
        if not self.length > 0:
            raise ValueError("hull length must be positive")
        b.setflags(write=False)
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def default(cls, length: float, fn_lower: float, fn_upper: float, n_points: int = 5, weights=None, d: int = 3):
        bounds = [SEARCH_SCORE_BOUNDS] * d + [SEARCH_LB_BOUNDS, SEARCH_BT_BOUNDS]
        return cls(np.array(bounds), length, SpeedRange(fn_lower, fn_upper, n_points, weights))

    @classmethod
    def case(cls, number: int, n_points: int = 5) -> "SearchSpace":
        L, lo, hi = CASES[number]
        return cls.default(L, lo, hi, n_points)

    @property
    def n_params(self) -> int:
        return self.bounds.shape[0]

    def contains(self, params, tol: float = 1e-12) -> bool:
        p = np.asarray(params, dtype=float)
        return bool(np.all(p >= self.bounds[:, 0] - tol) and np.all(p <= self.bounds[:, 1] + tol))


@dataclass(frozen=True)
class SearchConfig:
    n1: int = 3000
    n2: int = 3000
    k: int = 15
    shrink_factor: float = 0.5
    seed: int = 0
    convergence_tol: float = 1e-4
    shuffle_axes: bool = False
    max_passes: int = 50

    def __post_init__(self):
        if min(self.n1, self.n2, self.k, self.max_passes) < 1:
            raise ValueError("n1, n2, k and max_passes must be at least 1")
        if not 0 < self.shrink_factor <= 1:
            raise ValueError("shrink_factor must lie in (0, 1]")
        if self.convergence_tol < 0:
            raise ValueError("convergence_tol must be non-negative")


@dataclass
class SearchResult:
    best_params: np.ndarray
    best_beta: float
    beta_history: list = field(default_factory=list)
    evaluation_count: int = 0
    audit: dict = field(default_factory=dict)  # counters of surrogate warnings
    candidates: list | None = None  # optional (params, beta) log

    def merged(self, later: "SearchResult") -> "SearchResult":
        audit = dict(self.audit)
        for key, v in later.audit.items():
            audit[key] = audit.get(key, 0) + v
        cands = None if self.candidates is None and later.candidates is None else (
            (self.candidates or []) + (later.candidates or [])
        )
        return SearchResult(
            later.best_params, later.best_beta, self.beta_history + later.beta_history[1:],
            self.evaluation_count + later.evaluation_count, audit, cands,
        )


# -- objectives ----------------------------------------------------------------

def beta_of_candidates(model: MlpModel, params, length: float, speed_range: SpeedRange, audit: dict | None = None):
    """Surrogate operational merit of each row of ``params``."""
    P = np.array(params, dtype=float, ndmin=2)
    fns = speed_range.fn_points
    X = surrogate.feature_rows(P, length, fns)
    if audit is not None:
        audit["extrapolated_rows"] = audit.get("extrapolated_rows", 0) + int(surrogate.out_of_range(model, X).sum())
    preds = surrogate.forward(model, X).reshape(P.shape[0], fns.size)
    if audit is not None:
        audit["negative_predictions"] = audit.get("negative_predictions", 0) + int((preds <= 0).sum())
    return np.atleast_1d(hydro.operational_merit(fns, preds, speed_range))


def beta_of_candidate(model: MlpModel, params, length: float, speed_range: SpeedRange) -> float:
    return float(beta_of_candidates(model, params, length, speed_range)[0])


def _objective(model, space: SearchSpace, audit: dict) -> Objective:
    if isinstance(model, MlpModel):
        return lambda P: beta_of_candidates(model, P, space.length, space.speed_range, audit)
    return lambda P: np.asarray(model(P), dtype=float)


# -- search --------------------------------------------------------------------

def _shrunk_window(centre, width, glo, ghi):
    """Window of ``width`` centred on ``centre``, slid back inside ``[glo, ghi]`` where it sticks out.

    Sliding instead of truncating keeps the width exact, so every round
    shrinks by the same factor and a factor of 1 keeps the full box.
    """
    lo = np.clip(centre - 0.5 * width, glo, ghi - width)
    return lo, np.minimum(lo + width, ghi)


def monte_carlo_search(model, space: SearchSpace, config: SearchConfig = SearchConfig(), log_candidates=False):
    """Repeated uniform sampling with a window shrinking around the incumbent."""
    audit: dict = {}
    objective = _objective(model, space, audit)
    glo, ghi = space.bounds[:, 0], space.bounds[:, 1]
    lo, hi = glo.copy(), ghi.copy()
    rng = np.random.default_rng(config.seed)
    best_p, best_b = None, np.inf
    history: list[float] = []
    cands = [] if log_candidates else None
    count = 0
    for r in range(config.k):
        C = lo + (hi - lo) * rng.random((config.n1, space.n_params))
        b = objective(C)
        count += C.shape[0]
        if cands is not None:
            cands.extend(zip(C.tolist(), b.tolist()))
        j = int(np.argmin(b))  # first minimum wins ties
        prev = best_b
        if b[j] < best_b:
            best_p, best_b = C[j].copy(), float(b[j])
        history.append(best_b)
        log.debug("round %d beta_min %.6g", r + 1, best_b)
        if r and prev - best_b < config.convergence_tol * abs(prev):
            break
        lo, hi = _shrunk_window(best_p, config.shrink_factor * (hi - lo), glo, ghi)
    return SearchResult(best_p, best_b, history, count, audit, cands)


def _axis_order(n: int, config: SearchConfig, rng) -> np.ndarray:
    return rng.permutation(n) if config.shuffle_axes else np.arange(n)


def coordinate_refinement(model, space: SearchSpace, config: SearchConfig, incumbent, log_candidates=False):
    """Sweep each parameter over ``n2`` equispaced values with the others fixed.

    Passes repeat until no axis improves the merit by more than the relative
    convergence tolerance. ``incumbent`` is a parameter vector or a previous
    :class:`SearchResult`.
    """
    audit: dict = {}
    objective = _objective(model, space, audit)
    if isinstance(incumbent, SearchResult):
        best_p, best_b = incumbent.best_params.copy(), float(incumbent.best_beta)
        count = 0
    else:
        best_p = np.array(incumbent, dtype=float)
        best_b = float(objective(best_p[None, :])[0])
        count = 1
    if not space.contains(best_p):
        raise ValueError("incumbent lies outside the search bounds")
    rng = np.random.default_rng(config.seed + 1)
    history = [best_b]
    cands = [] if log_candidates else None
    for _ in range(config.max_passes):
        start = best_b
        for a in _axis_order(space.n_params, config, rng):
            C = np.repeat(best_p[None, :], config.n2, axis=0)
            C[:, a] = np.linspace(space.bounds[a, 0], space.bounds[a, 1], config.n2)
            b = objective(C)
            count += config.n2
            if cands is not None:
                cands.extend(zip(C.tolist(), b.tolist()))
            j = int(np.argmin(b))
            if b[j] < best_b:
                best_p, best_b = C[j].copy(), float(b[j])
        history.append(best_b)
        if start - best_b <= config.convergence_tol * abs(start):
            break
    return SearchResult(best_p, best_b, history, count, audit, cands)


def search(model, space: SearchSpace, config: SearchConfig = SearchConfig()) -> SearchResult:
    """Monte-Carlo search followed by coordinate refinement."""
    mc = monte_carlo_search(model, space, config)
    return mc.merged(coordinate_refinement(model, space, config, mc))


# -- end to end ----------------------------------------------------------------

def check_provenance(model: MlpModel, pca_model: PcaModel) -> None:
    expected = pca.digest(pca_model)
    found = model.provenance.get("pca_digest")
    if found != expected:
        raise ProvenanceError(
            f"surrogate was trained on data from PCA model {found or '<unknown>'}, "
            f"but the given PCA model is {expected}"
        )


@dataclass
class Outcome:
    result: SearchResult
    hull: HullForm
    hydrostatics: HydrostaticsReport
    surrogate_beta: float
    hydro_beta: float
    seconds: float

    @property
    def audit_delta(self) -> float:
        """Relative surrogate error on the winner's merit."""
        return abs(self.surrogate_beta - self.hydro_beta) / self.hydro_beta

    def __iter__(self):
        return iter((self.result, self.hull, self.hydrostatics))


def optimize_hull(model: MlpModel, pca_model: PcaModel, space: SearchSpace, config: SearchConfig = SearchConfig()):
    """Search with the surrogate, then rebuild and re-score the winner with the resistance solver.

    The returned :class:`Outcome` unpacks as ``(result, hull, hydrostatics)``.
    """
    check_provenance(model, pca_model)
    if space.n_params != pca_model.d + 2:
        raise ValueError(f"search space has {space.n_params} axes, PCA model needs {pca_model.d + 2}")
    t0 = time.perf_counter()
    result = search(model, space, config)
    seconds = time.perf_counter() - t0
    hull = pca.hull_from_params(pca_model, result.best_params, space.length)
    hs = geometry.hydrostatics(hull)
    beta_h = hydro.hydro_beta(hull, space.speed_range)
    out = Outcome(result, hull, hs, result.best_beta, beta_h, seconds)
    log.info(
        "search done in %.1fs: surrogate beta %.6g, hydro beta %.6g (audit %.2f%%)",
        seconds, out.surrogate_beta, beta_h, 100 * out.audit_delta,
    )
    return out


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    params: tuple
    hydro_beta: float
    surrogate_beta: float
    difference_pct: float  # (beta - beta_optimum) / beta_optimum, hydro values
    extrapolated: bool


def parent_params(pca_model: PcaModel, parent) -> np.ndarray:
    """Scaled scores plus L/B and B/T of a parent hull."""
    scaled = pca.scale_scores(pca_model, pca.compress(pca_model, parent.grid))
    scaled = np.where(np.abs(scaled) < 1e-12, 0.0, scaled)  # rounding noise on the parent that sets the minimum
    return np.concatenate([scaled, [parent.length_to_beam, parent.beam_to_draft]])


def parent_comparison(
    model: MlpModel, pca_model: PcaModel, space: SearchSpace, outcome: Outcome, parents: Sequence | None = None
) -> list[ComparisonRow]:
    """Optimum first, then every parent at the same length and speed range."""
    if parents is None:
        parents = parents_mod.bundled_parents(*pca_model.grid_shape)
    ref = outcome.hydro_beta
    rows = [ComparisonRow("optimum", tuple(outcome.result.best_params.tolist()), ref, outcome.surrogate_beta, 0.0, False)]
    for p in parents:
        params = parent_params(pca_model, p)
        hull = HullForm(p.grid, space.length, p.length_to_beam, p.beam_to_draft)
        beta_h = hydro.hydro_beta(hull, space.speed_range)
        audit: dict = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            beta_s = float(beta_of_candidates(model, params, space.length, space.speed_range, audit)[0])
        rows.append(ComparisonRow(
            p.name, tuple(params.tolist()), beta_h, beta_s, 100.0 * (beta_h - ref) / ref,
            audit.get("extrapolated_rows", 0) > 0,
        ))
    return rows


def comparison_table(rows: Sequence[ComparisonRow]) -> str:
    """Plain-text table of the parent comparison."""
    head = f"{'hull':<16}" + "".join(f"{n:>10}" for n in PARAM_NAMES) + f"{'beta':>13}{'beta_nn':>13}{'diff %':>9}"
    lines = [head]
    for r in rows:
        vals = "".join(f"{v:>10.4f}" for v in r.params)
        flag = " *" if r.extrapolated else ""
        lines.append(f"{r.name:<16}{vals}{r.hydro_beta:>13.6g}{r.surrogate_beta:>13.6g}{r.difference_pct:>+9.2f}{flag}")
    if any(r.extrapolated for r in rows):
        lines.append("* outside the surrogate's training range")
    return "\n".join(lines) + "\n"


def report_to_dict(space: SearchSpace, config: SearchConfig, outcome: Outcome, rows=None, provenance=None) -> dict:
    """Everything in the search report; no timings, so reruns are byte-identical."""
    r = outcome.result
    sr = space.speed_range
    return {
        "format": REPORT_FORMAT,
        "version": REPORT_FORMAT_VERSION,
        "space": {
            "bounds": dict(zip(PARAM_NAMES, space.bounds.tolist())),
            "length": space.length,
            "fn_lower": sr.fn_lower,
            "fn_upper": sr.fn_upper,
            "n_points": sr.n_points,
            "weights": None if sr.weights is None else list(sr.weights),
        },
        "config": {k: getattr(config, k) for k in config.__dataclass_fields__},
        "beta_history": r.beta_history,
        "evaluation_count": r.evaluation_count,
        "surrogate_warnings": dict(sorted(r.audit.items())),
        "best_params": dict(zip(PARAM_NAMES, r.best_params.tolist())),
        "surrogate_beta": outcome.surrogate_beta,
        "hydro_beta": outcome.hydro_beta,
        "audit_delta": outcome.audit_delta,
        "hydrostatics": asdict(outcome.hydrostatics),
        "comparison": [
            {
                "name": row.name,
                "params": dict(zip(PARAM_NAMES, row.params)),
                "hydro_beta": row.hydro_beta,
                "surrogate_beta": row.surrogate_beta,
                "difference_pct": row.difference_pct,
                "extrapolated": row.extrapolated,
            }
            for row in (rows or [])
        ],
        "provenance": dict(provenance or {}),
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True) + "\n"
