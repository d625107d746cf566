"""``priorseg`` command line: encode, evaluate, fairness, render, phantom."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .cohort import LANDMARKS, CohortManifest, PatientRecord, load_manifest
from .encoding import EncodingStrategy, Strategy, encode
from .errors import EmptyLandmark, PriorsegError
from .fairness import WHOLE, summarize
from .metrics import evaluate_pair
from .nifti_io import check_aligned, read_labelmap, read_volume
from .phantom import PhantomSpec, generate_cohort
from .regions import REGIONS, bounds_from_spans, region_slab, slice_span
from .report import conventions, format_metrics_csv, read_metrics_csv, render_slice, render_tables, write_json


def _warn(msg: str) -> None:
    print(f"priorseg: {msg}", file=sys.stderr)


def _threads(value: int | None) -> int:
    if value is None:
        value = int(os.environ.get("PRIORSEG_THREADS", "1"))
    if value < 1:
        raise SystemExit("priorseg: --threads must be >= 1")
    return value


def _run_patients(records: Sequence[PatientRecord], fn: Callable, threads: int):
    """Apply ``fn`` to every record; returns (results in record order, error entries)."""

    def guarded(rec: PatientRecord):
        try:
            return fn(rec), None
        except (PriorsegError, OSError, ValueError) as exc:
            return None, {"patient_id": rec.patient_id, "error": type(exc).__name__, "message": str(exc)}

    with ThreadPoolExecutor(max_workers=threads) as pool:
        outcomes = list(pool.map(guarded, records))
    results = [r for r, e in outcomes if e is None]
    errors = [e for _, e in outcomes if e is not None]
    return results, errors


def _load(args) -> CohortManifest:
    # files are checked per patient so one bad path does not sink the cohort
    return load_manifest(args.manifest, check_files=False)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ------------------------------------------------------------------


def cmd_encode(args) -> int:
    manifest = _load(args)
    out = _out(args)
    strategy = EncodingStrategy.default(Strategy.parse(args.strategy))

    def work(rec: PatientRecord) -> int:
        return len(encode(strategy, rec, out / rec.patient_id))

    counts, errors = _run_patients(manifest.records, work, _threads(args.threads))
    write_json(out / "errors.json", errors)
    print(f"encoded {len(counts)} patient(s) with {strategy.kind.value}: {sum(counts)} channel(s), {len(errors)} failed")
    for e in errors:
        _warn(f"{e['patient_id']}: {e['error']}: {e['message']}")
    return 1 if errors else 0


def evaluate_patient(rec: PatientRecord, regions: bool, percentile: float, superior: int = 1):
    """Metric rows (and region bounds, if enabled) for one patient."""
    if rec.pred_ctv_path is None:
        raise PriorsegError(f"patient {rec.patient_id}: no pred_ctv path in manifest")
    gt = read_labelmap(rec.gt_ctv_path)
    pred = read_labelmap(rec.pred_ctv_path)
    check_aligned(gt, pred)
    res = evaluate_pair(gt, pred, percentile)
    rows = [(rec.patient_id, rec.sex, WHOLE, res.dsc, res.hd_mm, res.hd95_mm)]
    bounds_json = None
    if regions:
        missing = [k for k in LANDMARKS if k not in rec.landmark_paths]
        if missing:
            raise PriorsegError(f"patient {rec.patient_id}: missing landmark(s) {', '.join(missing)}")
        # keep only each landmark's slice span, not the full grid
        spans = {}
        for name in LANDMARKS:
            lm = read_labelmap(rec.landmark_paths[name])
            check_aligned(gt, lm)
            try:
                spans[name] = slice_span(lm)
            except EmptyLandmark:
                raise EmptyLandmark(f"patient {rec.patient_id}: landmark {name} is empty") from None
            del lm
        bounds = bounds_from_spans(spans, gt.dims[2], superior)
        bounds_json = bounds.to_json(rec.patient_id)
        for region in REGIONS:
            r = evaluate_pair(region_slab(gt, bounds, region), region_slab(pred, bounds, region), percentile)
            rows.append((rec.patient_id, rec.sex, region, r.dsc, r.hd_mm, r.hd95_mm))
    return rows, bounds_json


def cmd_evaluate(args) -> int:
    manifest = _load(args)
    out = _out(args)
    results, errors = _run_patients(
        manifest.records,
        lambda rec: evaluate_patient(rec, args.regions, args.percentile, manifest.superior),
        _threads(args.threads),
    )
    rows = [row for patient_rows, _ in results for row in patient_rows]
    (out / "metrics.csv").write_text(format_metrics_csv(rows), encoding="utf-8")
    if args.regions:
        write_json(out / "bounds.json", [b for _, b in results])
    write_json(out / "metrics.meta.json", {"regions": args.regions, "conventions": conventions(args.percentile)})
    write_json(out / "errors.json", errors)
    print(f"evaluated {len(results)} patient(s), {len(rows)} row(s), {len(errors)} failed")
    for e in errors:
        _warn(f"{e['patient_id']}: {e['error']}: {e['message']}")
    return 1 if errors else 0


def _metrics_sources(args) -> list[tuple[str, Path]]:
    specs = args.metrics or [str(Path(args.out) / "metrics.csv")]
    sources = []
    for spec in specs:
        label, sep, path = spec.partition("=")
        if not sep:
            path = label
            label = args.label or Path(path).parent.name or "run"
        sources.append((label, Path(path)))
    return sources


def cmd_fairness(args) -> int:
    sources = _metrics_sources(args)
    out = _out(args)
    runs, payload = [], []
    flagged = False
    for label, path in sources:
        samples = read_metrics_csv(path)
        summary = summarize(samples)
        flagged |= summary.any_flagged
        runs.append((label, samples, summary))
        # name and content hash rather than the full path, so outputs do not depend on where inputs live
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        payload.append({"label": label, "metrics": path.name, "metrics_sha256": digest, "summary": summary.to_json()})
    meta = conventions(args.percentile)
    write_json(out / "fairness.json", {"metadata": meta, "runs": payload})
    (out / "tables.md").write_text(render_tables(runs, meta), encoding="utf-8")
    for label, _, summary in runs:
        for region, r in summary.regions.items():
            if r.flagged:
                _warn(f"{label} {region}: {r.flag}")
    print(f"fairness summary for {len(runs)} run(s) written to {out}")
    return 1 if flagged else 0


def cmd_render(args) -> int:
    extra = [Path(p) for p in args.mask or []]
    if args.manifest:
        if not args.patient:
            raise SystemExit("priorseg: render with --manifest needs --patient")
        rec = load_manifest(args.manifest).record(args.patient)
        ct_path = rec.ct_path
        mask_paths = [rec.gt_ctv_path] + ([rec.pred_ctv_path] if rec.pred_ctv_path else []) + extra
        stem = f"{rec.patient_id}_slice{args.slice}"
    elif args.ct:
        ct_path, mask_paths, stem = Path(args.ct), extra, f"slice{args.slice}"
    else:
        raise SystemExit("priorseg: render needs --ct or --manifest/--patient")
    if len(mask_paths) > 3:
        raise SystemExit("priorseg: at most 3 masks can be overlaid")
    ct = read_volume(ct_path)
    masks = [read_labelmap(p) for p in mask_paths]
    for m in masks:
        check_aligned(ct, m)
    image = render_slice(ct.data, [m.data for m in masks], args.slice)
    target = Path(args.out)
    if target.suffix.lower() != ".ppm":
        target.mkdir(parents=True, exist_ok=True)
        target = target / f"{stem}.ppm"
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(image)
    print(target)
    return 0


def cmd_phantom(args) -> int:
    payload = {}
    if args.spec:
        payload = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    spec = PhantomSpec.from_json(payload)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = _out(args)
    if spec.n_female + spec.n_male == 0:
        _warn("phantom spec has no patients; writing an empty manifest")
    generate_cohort(spec, out, _threads(args.threads))
    print(out / "manifest.json")
    return 0


# -- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="priorseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, manifest_required=True):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: $PRIORSEG_THREADS or 1)")
        if manifest_required is not None:
            p.add_argument("--manifest", required=manifest_required, help="cohort manifest JSON")

    p = sub.add_parser("encode", help="write anatomical-prior channels for every patient")
    common(p)
    p.add_argument("--strategy", required=True, choices=[s.slug for s in Strategy] + ["ei-z"])
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("evaluate", help="DSC / HD / HD95 per patient, whole body and per region")
    common(p)
    p.add_argument("--regions", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--percentile", type=float, default=95.0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fairness", help="AGD / MGD / QD from metrics.csv")
    common(p, manifest_required=None)
    p.add_argument("--metrics", action="append", help="[label=]path to a metrics.csv (repeatable)")
    p.add_argument("--label", default=None, help="run label for a single unlabeled metrics file")
    p.add_argument("--percentile", type=float, default=95.0, help="HD percentile used for the metrics")
    p.set_defaults(func=cmd_fairness)

    p = sub.add_parser("render", help="PPM overlay of one axial slice")
    common(p, manifest_required=False)
    p.add_argument("--patient", help="patient id (with --manifest)")
    p.add_argument("--ct", help="CT volume (without --manifest)")
    p.add_argument("--mask", action="append", help="mask to overlay (repeatable, at most 3)")
    p.add_argument("--slice", type=int, required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("phantom", help="generate a synthetic cohort")
    common(p, manifest_required=None)
    p.add_argument("--spec", help="phantom spec JSON (default: built-in spec)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_phantom)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (PriorsegError, OSError, KeyError) as exc:
        _warn(f"{type(exc).__name__}: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
