"""Command-line pipeline: parents -> fit-pca -> gen-dataset -> train -> optimize.

Every stage reads and writes plain files. With ``--manifest`` the stage
records its outputs, seeds and content digests in a JSON manifest and refuses
to start if one of its inputs no longer matches the digest recorded there.

Exit codes: 0 success, 2 validation failure, 3 I/O failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, dataset, geometry, hydro, optimize, parents, pca, surrogate
from .errors import DegenerateHullError, EvaluationError, FitError, HullOptError, ProvenanceError

log = logging.getLogger("hullopt")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4
MANIFEST_FORMAT = "hullopt-manifest"


class ValidationFailure(Exception):
    pass


# -- manifest ------------------------------------------------------------------

def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_manifest(path) -> dict:
    if path is None or not Path(path).exists():
        return {"format": MANIFEST_FORMAT, "version": 1, "tool_version": __version__, "stages": {}}
    data = json.loads(Path(path).read_text())
    if data.get("format") != MANIFEST_FORMAT:
        raise ValidationFailure(f"{path} is not a pipeline manifest")
    return data


def check_inputs(manifest: dict, *paths) -> None:
    """Each input recorded as some stage's output must still carry its recorded digest."""
    recorded = {}
    for stage, entry in manifest.get("stages", {}).items():
        for role, item in entry.get("outputs", {}).items():
            recorded[os.path.normpath(item["path"])] = (stage, role, item["digest"])
    for p in paths:
        key = os.path.normpath(str(p))
        if key in recorded:
            stage, role, want = recorded[key]
            got = file_digest(p)
            if got != want:
                raise ValidationFailure(
                    f"{p} changed since stage '{stage}' wrote it as {role}: manifest has {want}, file has {got}"
                )


def record_stage(manifest_path, manifest: dict, stage: str, outputs: dict, **settings) -> None:
    if manifest_path is None:
        return
    manifest["tool_version"] = __version__
    manifest.setdefault("stages", {})[stage] = {
        "outputs": {role: {"path": str(p), "digest": file_digest(p)} for role, p in outputs.items()},
        "settings": settings,
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


# -- commands ------------------------------------------------------------------

def cmd_parents(args, manifest) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = parents.bundled_parents()
    model = pca.fit(bundle, 3)
    outputs = {}
    rows = ["name,L_over_B,B_over_T,C_B,C_P,slenderness,lambda1,lambda2,lambda3"]
    for p in bundle:
        path = out / f"{p.name}.txt"
        geometry.write_offset_table(
            path, p.grid, p.name, {"L_over_B": repr(p.length_to_beam), "B_over_T": repr(p.beam_to_draft)}
        )
        outputs[p.name] = path
        hs = geometry.hydrostatics(geometry.HullForm(p.grid, 100.0, p.length_to_beam, p.beam_to_draft))
        lam = optimize.parent_params(model, p)[:3]
        rows.append(",".join([p.name] + [f"{v:.6g}" for v in (
            p.length_to_beam, p.beam_to_draft, hs.block_coefficient, hs.prismatic_coefficient, hs.slenderness, *lam,
        )]))
    summary = out / "summary.csv"
    summary.write_text("\n".join(rows) + "\n")
    outputs["summary"] = summary
    print(summary.read_text(), end="")
    record_stage(args.manifest, manifest, "parents", outputs)
    return EXIT_OK


def _read_parent_dir(directory) -> list[parents.ParentHull]:
    found = []
    for path in sorted(Path(directory).glob("*.txt")):
        grid, meta = geometry.parse_offset_table(path.read_text())
        name = meta.get("name", path.stem)
        if "L_over_B" in meta and "B_over_T" in meta:
            lb, bt = float(meta["L_over_B"]), float(meta["B_over_T"])
        else:
            lb, bt = parents.PARTICULARS.get(name, (float("nan"), float("nan")))
        found.append(parents.ParentHull(name, grid, lb, bt))
    if not found:
        raise ValidationFailure(f"no offset tables (*.txt) in {directory}")
    return found


def cmd_fit_pca(args, manifest) -> int:
    files = sorted(Path(args.parents).glob("*.txt"))
    check_inputs(manifest, *files)
    model = pca.fit(_read_parent_dir(args.parents), args.d)
    digest = pca.save(model, args.out)
    print(f"explained variance: {', '.join(f'{v:.6f}' for v in model.explained_variance)}")
    print(f"pca model {args.out} sha256={digest}")
    record_stage(args.manifest, manifest, "fit-pca", {"pca": args.out}, d=model.d)
    return EXIT_OK


def cmd_gen_dataset(args, manifest) -> int:
    check_inputs(manifest, args.pca)
    model = pca.load(args.pca)
    n_hulls = args.n_hulls or (dataset.FULL_N_HULLS if args.paper_scale else dataset.DESK_N_HULLS)
    fns = np.round(np.linspace(args.fn_lower, args.fn_upper, args.n_fn), 10)
    ds = dataset.generate(
        model, n_hulls, fns, seed=args.seed, workers=args.workers, work_dir=args.work_dir,
    )
    digest = dataset.save(ds, args.out)
    n_test = int(ds.is_test.sum())
    print(f"{len(ds)} rows ({len(ds) - n_test} train, {n_test} test) -> {args.out} sha256={digest}")
    record_stage(args.manifest, manifest, "gen-dataset", {"dataset": args.out}, seed=args.seed, n_hulls=n_hulls)
    return EXIT_OK


def cmd_train(args, manifest) -> int:
    check_inputs(manifest, args.dataset)
    ds = dataset.load(args.dataset)
    base = surrogate.TrainingConfig() if args.paper_scale else surrogate.DESK_CONFIG
    config = surrogate.TrainingConfig(
        epochs=args.epochs or base.epochs,
        batch_size=args.batch_size or base.batch_size,
        seed=args.seed,
    )
    model, hist = surrogate.train_on_dataset(ds, config, progress_every=args.progress)
    digest = surrogate.save(model, args.out)
    outputs = {"model": args.out}
    if args.history:
        Path(args.history).write_text(hist.to_csv())
        outputs["history"] = args.history
    print(f"best test MAPE {hist.best_test_mape:.4f}% at epoch {hist.best_epoch + 1}")
    print(f"model {args.out} sha256={digest}")
    record_stage(args.manifest, manifest, "train", outputs, seed=args.seed, epochs=config.epochs,
                 batch_size=config.batch_size)
    return EXIT_OK


def cmd_optimize(args, manifest) -> int:
    check_inputs(manifest, args.pca, args.model)
    pca_model = pca.load(args.pca)
    model = surrogate.load(args.model)
    if args.case:
        L, lo, hi = optimize.CASES[args.case]
    else:
        L, lo, hi = args.length, args.fn_lower, args.fn_upper
        if None in (L, lo, hi):
            raise ValidationFailure("give --case or all of --length, --fn-lower and --fn-upper")
    space = optimize.SearchSpace.default(L, lo, hi, args.n_points, d=pca_model.d)
    config = optimize.SearchConfig(n1=args.n1, n2=args.n2, k=args.k, seed=args.seed)
    outcome = optimize.optimize_hull(model, pca_model, space, config)
    rows = optimize.parent_comparison(model, pca_model, space, outcome)
    provenance = {"pca_digest": pca.digest(pca_model), "model_digest": file_digest(args.model)}
    report = optimize.report_to_dict(space, config, outcome, rows, provenance)
    out = Path(args.out)
    out.write_text(optimize.dumps_report(report))
    hull_txt = out.with_name(out.stem + "_hull.txt")
    hull_obj = out.with_name(out.stem + "_hull.obj")
    geometry.write_offset_table(hull_txt, outcome.hull.grid, "optimum")
    geometry.write_obj(hull_obj, outcome.hull)
    print(optimize.comparison_table(rows), end="")
    print(f"search {outcome.seconds:.1f}s, audit delta {100 * outcome.audit_delta:.2f}%")
    record_stage(args.manifest, manifest, "optimize", {"report": out, "hull": hull_txt, "mesh": hull_obj},
                 seed=args.seed, length=L, fn_lower=lo, fn_upper=hi)
    return EXIT_OK


def cmd_export_curves(args, manifest) -> int:
    if args.offsets:
        check_inputs(manifest, args.offsets)
        grid = geometry.read_offset_table(args.offsets)
        if args.params is None or len(args.params) != 2:
            raise ValidationFailure("--offsets needs --params L_OVER_B B_OVER_T")
        hull = geometry.HullForm(grid, args.length, *args.params)
    else:
        if args.pca is None or args.params is None:
            raise ValidationFailure("give --offsets, or --pca with --params")
        check_inputs(manifest, args.pca)
        hull = pca.hull_from_params(pca.load(args.pca), args.params, args.length)
    fns = np.linspace(args.fn_lower, args.fn_upper, args.n_fn)
    Path(args.out).write_text(hydro.curve_to_csv(hydro.resistance_curve(hull, fns)))
    print(f"{len(fns)} points -> {args.out}")
    record_stage(args.manifest, manifest, "export-curves", {"curves": args.out})
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--manifest", help="pipeline manifest (JSON) to verify inputs against and update")
    common.add_argument("--paper-scale", action="store_true", help="full-size defaults instead of desk scale")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="hullopt", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hullopt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parents", parents=[common], help="write the bundled parent offset tables")
    p.add_argument("--out", default="parents")
    p.set_defaults(func=cmd_parents)

    p = sub.add_parser("fit-pca", parents=[common], help="fit the principal-component model")
    p.add_argument("--parents", default="parents")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--out", default="pca.json")
    p.set_defaults(func=cmd_fit_pca)

    p = sub.add_parser("gen-dataset", parents=[common], help="evaluate sampled hulls with the resistance solver")
    p.add_argument("--pca", default="pca.json")
    p.add_argument("--n-hulls", type=int, default=None, help="default 200, or 1131 with --paper-scale")
    p.add_argument("--fn-lower", type=float, default=0.15)
    p.add_argument("--fn-upper", type=float, default=0.35)
    p.add_argument("--n-fn", type=int, default=21)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--work-dir", default=None, help="per-hull markers so an interrupted run resumes")
    p.add_argument("--out", default="dataset.csv")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("train", parents=[common], help="train the surrogate network")
    p.add_argument("--dataset", default="dataset.csv")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--progress", type=int, default=100, help="log every N epochs (0 = quiet)")
    p.add_argument("--history", default="history.csv")
    p.add_argument("--out", default="model.json")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("optimize", parents=[common], help="search for the hull with the lowest merit")
    p.add_argument("--pca", default="pca.json")
    p.add_argument("--model", default="model.json")
    p.add_argument("--case", type=int, choices=sorted(optimize.CASES))
    p.add_argument("--length", type=float)
    p.add_argument("--fn-lower", type=float)
    p.add_argument("--fn-upper", type=float)
    p.add_argument("--n-points", type=int, default=5)
    p.add_argument("--n1", type=int, default=3000)
    p.add_argument("--n2", type=int, default=3000)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--out", default="report.json")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("export-curves", parents=[common], help="resistance curve of one hull as CSV")
    p.add_argument("--pca")
    p.add_argument("--offsets", help="offset-table file instead of PCA parameters")
    p.add_argument("--params", type=float, nargs="+",
                   help="lambda1 lambda2 lambda3 L/B B/T (with --pca) or L/B B/T (with --offsets)")
    p.add_argument("--length", type=float, required=True)
    p.add_argument("--fn-lower", type=float, default=0.15)
    p.add_argument("--fn-upper", type=float, default=0.35)
    p.add_argument("--n-fn", type=int, default=21)
    p.add_argument("--out", default="curves.csv")
    p.set_defaults(func=cmd_export_curves)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command == "train" else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = load_manifest(args.manifest)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return args.func(args, manifest)
    except (EvaluationError, FitError, DegenerateHullError, ArithmeticError) as exc:
        print(f"hullopt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationFailure, ProvenanceError, HullOptError, ValueError, KeyError) as exc:
        print(f"hullopt: validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"hullopt: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
