"""Evaluated-fleet datasets for training the surrogate.

Each generated hull ``i`` draws its parameters from ``numpy.random.default_rng(seed + i)``
so any hull can be regenerated on its own, in any order or process.
"""

from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hydro, pca
from .errors import FormatError
from .pca import PcaModel

log = logging.getLogger(__name__)

DATASET_FORMAT = "hullopt-dataset"
DATASET_FORMAT_VERSION = 1

DEFAULT_FNS = tuple(np.round(np.linspace(0.15, 0.35, 21), 10))
# 1006 training and 125 test hulls out of 1131
FULL_N_HULLS = 1131
TEST_FRACTION = 125 / 1131
DESK_N_HULLS = 200


@dataclass
class Dataset:
    hull_id: np.ndarray  # (m,)
    params: np.ndarray  # (m, d + 2): scaled scores, L/B, B/T
    length: np.ndarray  # (m,)
    froude: np.ndarray  # (m,)
    reynolds: np.ndarray  # (m,)
    merit: np.ndarray  # (m,) C_T target
    is_test: np.ndarray  # (m,) bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(~(self.merit > 0)):
            raise ValueError("all merit-coefficient targets must be positive")

    def __len__(self):
        return self.merit.size

    @property
    def features(self) -> np.ndarray:
        """Raw surrogate inputs ``(scaled scores, L/B, B/T, Fn, Re)``."""
        return np.column_stack([self.params, self.froude, self.reynolds])

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            self.hull_id[mask], self.params[mask], self.length[mask], self.froude[mask],
            self.reynolds[mask], self.merit[mask], self.is_test[mask], dict(self.meta),
        )

    def train(self) -> "Dataset":
        return self.subset(~self.is_test)

    def test(self) -> "Dataset":
        return self.subset(self.is_test)


def split_by_hull(n_hulls: int, seed: int, test_fraction: float = TEST_FRACTION) -> np.ndarray:
    """Boolean test flag per hull index; every speed of a hull lands on one side."""
    n_test = int(round(n_hulls * test_fraction))
    n_test = min(max(n_test, 1), n_hulls - 1)
    order = np.random.default_rng(seed).permutation(n_hulls)
    flags = np.zeros(n_hulls, dtype=bool)
    flags[order[:n_test]] = True
    return flags


def _hull_rows(args):
    model, i, seed, bounds, length_range, fns, n_theta = args
    params, L = pca.sample_params(bounds, length_range, seed + i)
    hull = pca.hull_from_params(model, params, L)
    curve = hydro.resistance_curve(hull, fns, n_theta)
    return i, params, L, [(r.flow.froude, r.flow.reynolds, r.merit_coefficient) for r in curve]


def _format_rows(i, params, L, rows, test: bool | None = None) -> list[str]:
    out = []
    for fn, re_, ct in rows:
        vals = [repr(float(v)) for v in (*params, L, fn, re_, ct)]
        lead = [str(i)] if test is None else [str(i), "test" if test else "train"]
        out.append(",".join(lead + vals))
    return out


def generate(
    model: PcaModel,
    n_hulls: int = DESK_N_HULLS,
    fns: Sequence[float] = DEFAULT_FNS,
    seed: int = 0,
    bounds=None,
    length_range=pca.DEFAULT_LENGTH_RANGE,
    split_seed: int | None = None,
    workers: int = 1,
    n_theta: int = hydro.N_THETA,
    work_dir=None,
) -> Dataset:
    """Sample ``n_hulls`` hulls and evaluate each at every Froude number.

    With ``work_dir`` set, each finished hull is written to its own marker
    file there and skipped on a later call, so an interrupted run resumes.
    """
    if bounds is None:
        bounds = pca.default_bounds(model.d)
    bounds = np.asarray(bounds, dtype=float)
    fns = tuple(float(f) for f in fns)
    results: dict[int, tuple] = {}
    if work_dir is not None:
        work_dir = Path(work_dir)
        work_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n_hulls):
            f = work_dir / f"hull_{i:06d}.csv"
            if f.exists():
                results[i] = _read_marker(f, model.d)
    todo = [(model, i, seed, bounds, length_range, fns, n_theta) for i in range(n_hulls) if i not in results]
    if todo:
        log.info("evaluating %d hulls x %d speeds", len(todo), len(fns))
    if workers and workers > 1 and len(todo) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            it = pool.map(_hull_rows, todo, chunksize=max(1, len(todo) // (8 * workers)))
            for res in it:
                _store(res, results, work_dir)
    else:
        for t in todo:
            _store(_hull_rows(t), results, work_dir)

    split_seed = seed if split_seed is None else split_seed
    test_flags = split_by_hull(n_hulls, split_seed)
    hid, P, Ls, F, R, C, T = [], [], [], [], [], [], []
    for i in range(n_hulls):
        _, params, L, rows = results[i]
        for fn, re_, ct in rows:
            hid.append(i), P.append(params), Ls.append(L), F.append(fn), R.append(re_), C.append(ct)
            T.append(test_flags[i])
    meta = {
        "n_hulls": n_hulls,
        "seed": seed,
        "split_seed": split_seed,
        "rho": hydro.RHO,
        "nu": hydro.NU,
        "g": hydro.GRAVITY,
        "n_theta": n_theta,
        "solver": "michell-thin-ship",
        "pca_digest": pca.digest(model),
    }
    return Dataset(
        np.array(hid), np.array(P), np.array(Ls), np.array(F), np.array(R), np.array(C), np.array(T), meta
    )


def _store(res, results, work_dir):
    i = res[0]
    results[i] = res
    if work_dir is not None:
        target = Path(work_dir) / f"hull_{i:06d}.csv"
        tmp = target.with_suffix(".tmp")
        tmp.write_text("\n".join(_format_rows(*res)) + "\n")
        os.replace(tmp, target)


def _read_marker(path: Path, d: int):
    rows = []
    params = L = None
    for line in path.read_text().splitlines():
        vals = line.split(",")
        i = int(vals[0])
        nums = [float(v) for v in vals[1:]]
        params = np.array(nums[: d + 2])
        L = nums[d + 2]
        rows.append(tuple(nums[d + 3:]))
    return i, params, L, rows


# -- file format ---------------------------------------------------------------

def columns(d: int = 3) -> list[str]:
    return ["hull", "split"] + [f"lambda{j + 1}" for j in range(d)] + ["L_over_B", "B_over_T", "L", "Fn", "Re", "C_T"]


def dumps(ds: Dataset) -> str:
    d = ds.params.shape[1] - 2
    lines = [f"# {DATASET_FORMAT} v{DATASET_FORMAT_VERSION}"]
    lines += [f"# {k}={v}" for k, v in sorted(ds.meta.items())]
    lines.append(",".join(columns(d)))
    for k in range(len(ds)):
        vals = (*ds.params[k], ds.length[k], ds.froude[k], ds.reynolds[k], ds.merit[k])
        lines.append(
            ",".join([str(int(ds.hull_id[k])), "test" if ds.is_test[k] else "train"] + [repr(float(v)) for v in vals])
        )
    return "\n".join(lines) + "\n"


_INT_META = {"n_hulls", "seed", "split_seed", "n_theta"}
_FLOAT_META = {"rho", "nu", "g"}


def _parse_meta_value(key: str, v: str):
    if key in _INT_META:
        return int(v)
    if key in _FLOAT_META:
        return float(v)
    return v


def loads(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines or lines[0].strip() != f"# {DATASET_FORMAT} v{DATASET_FORMAT_VERSION}":
        raise FormatError(f"not a {DATASET_FORMAT} v{DATASET_FORMAT_VERSION} file")
    meta = {}
    k = 1
    while k < len(lines) and lines[k].startswith("#"):
        key, _, v = lines[k][1:].strip().partition("=")
        meta[key] = _parse_meta_value(key, v)
        k += 1
    header = lines[k].split(",")
    d = len(header) - 8
    if header != columns(d):
        raise FormatError(f"unexpected dataset columns {header}")
    body = [ln.split(",") for ln in lines[k + 1:] if ln]
    hid = np.array([int(r[0]) for r in body])
    is_test = np.array([r[1] == "test" for r in body])
    num = np.array([[float(v) for v in r[2:]] for r in body]).reshape(len(body), d + 6)
    return Dataset(hid, num[:, : d + 2], num[:, d + 2], num[:, d + 3], num[:, d + 4], num[:, d + 5], is_test, meta)


def save(ds: Dataset, path) -> str:
    text = dumps(ds)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def load(path) -> Dataset:
    return loads(Path(path).read_text())


def digest(ds: Dataset) -> str:
    return hashlib.sha256(dumps(ds).encode()).hexdigest()
