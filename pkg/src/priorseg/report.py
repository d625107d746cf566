"""Report formats: metrics CSV, fairness JSON, markdown tables and PPM slice overlays."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .encoding import OVERLAP_RULE, ZSCORE_SCOPE
from .errors import GridMismatch, SchemaError, SliceOutOfRange
from .fairness import QUANTILE_RULE, REPORT_REGIONS, WHOLE, FairnessSummary, ScoreSample, quartiles
from .metrics import HD_DIRECTION_RULE, PERCENTILE_RULE
from .regions import BOUNDARY_RULE, REGIONS

METRICS_HEADER = ("patient_id", "sex", "region", "dsc", "hd_mm", "hd95_mm")


def conventions(percentile: float = 95.0) -> dict:
    """Every convention that affects reported numbers, echoed into report metadata."""
    return {
        "hd_percentile": percentile,
        "percentile_rule": PERCENTILE_RULE,
        "hd_direction_rule": HD_DIRECTION_RULE,
        "quantile_rule": QUANTILE_RULE,
        "region_boundary_rule": BOUNDARY_RULE,
        "empty_mask_rule": "DSC(empty, empty) = 1; DSC(empty, non-empty) = 0; HD undefined if either is empty",
        "zscore_scope": ZSCORE_SCOPE,
        "overlap_rule": OVERLAP_RULE,
        "fairness_sign": "male minus female",
    }


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- metrics CSV ---------------------------------------------------------------


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def format_metrics_csv(rows: Iterable[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for pid, sex, region, dsc, hd, hd95 in rows:
        writer.writerow([pid, sex, region, _cell(dsc), _cell(hd), _cell(hd95)])
    return buf.getvalue()


def read_metrics_csv(path) -> list[ScoreSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != METRICS_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(METRICS_HEADER)}")
        samples = []
        for i, row in enumerate(reader, start=2):
            if row["sex"] not in ("female", "male"):
                raise SchemaError(f"{path}:{i}: bad sex {row['sex']!r}")
            if row["region"] not in REPORT_REGIONS:
                raise SchemaError(f"{path}:{i}: bad region {row['region']!r}")
            samples.append(
                ScoreSample(
                    patient_id=row["patient_id"],
                    sex=row["sex"],
                    region=row["region"],
                    dsc=float(row["dsc"]),
                    hd95_mm=float(row["hd95_mm"]) if row["hd95_mm"] else None,
                )
            )
    return samples


# -- markdown tables -----------------------------------------------------------


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{100.0 * x:.2f}%"


def _signed(x: float | None) -> str:
    if x is None:
        return "n/a"
    marker = "M>F" if x > 0 else "F>M" if x < 0 else "="
    return f"{100.0 * abs(x):.2f}% ({marker})"


def _median(values: Sequence[float]) -> float | None:
    return quartiles(values)[1] if values else None


def render_tables(runs: Sequence[tuple[str, list[ScoreSample], FairnessSummary]], meta: dict) -> str:
    """Three markdown tables: whole-body medians, regional medians, regional AGD/MGD/QD."""
    out = ["# Gender bias report", ""]

    out += ["## Whole-body medians", ""]
    out += ["| Run | DSC Med. | HD95 Med. | DSC F-Med. | DSC M-Med. |", "|---|---|---|---|---|"]
    for label, samples, _ in runs:
        whole = [s for s in samples if s.region == WHOLE]
        hd = [s.hd95_mm for s in whole if s.hd95_mm is not None]
        hd_cell = "n/a" if not hd else f"{_median(hd):.2f}"
        out.append(
            f"| {label} | {_pct(_median([s.dsc for s in whole]))} | {hd_cell} | "
            f"{_pct(_median([s.dsc for s in whole if s.sex == 'female']))} | "
            f"{_pct(_median([s.dsc for s in whole if s.sex == 'male']))} |"
        )

    out += ["", "## Regional median DSC", ""]
    out += ["| Run | Group | " + " | ".join(REGIONS) + " |", "|---|---|" + "---|" * len(REGIONS)]
    for label, samples, _ in runs:
        for group in ("Total", "Female", "Male"):
            cells = []
            for region in REGIONS:
                vals = [
                    s.dsc for s in samples if s.region == region and (group == "Total" or s.sex == group.lower())
                ]
                cells.append(_pct(_median(vals)))
            out.append(f"| {label if group == 'Total' else ''} | {group} | " + " | ".join(cells) + " |")

    out += ["", "## Fairness metrics (DSC)", ""]
    out += ["| Metric | Run | " + " | ".join(REGIONS) + " |", "|---|---|" + "---|" * len(REGIONS)]
    for metric in ("agd", "mgd", "qd"):
        for label, _, summary in runs:
            cells = []
            for region in REGIONS:
                r = summary.regions.get(region)
                if r is None:
                    cells.append("n/a")
                elif r.flagged:
                    cells.append(f"flagged: {r.flag}")
                else:
                    value = getattr(r, metric)
                    cells.append(_pct(value) if metric == "qd" else _signed(value))
            out.append(f"| {metric.upper()} | {label} | " + " | ".join(cells) + " |")

    out += ["", "## Conventions", ""]
    out += [f"- {key}: {value}" for key, value in sorted(meta.items())]
    return "\n".join(out) + "\n"


# -- slice overlays ------------------------------------------------------------

CONTOUR_COLOURS = ((255, 48, 48), (48, 255, 48), (64, 160, 255))
CT_WINDOW = (40.0, 400.0)  # level, width (HU)


def _contour_2d(fg: np.ndarray) -> np.ndarray:
    padded = np.pad(fg, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return fg & ~interior


def render_slice(ct: np.ndarray, masks: Sequence[np.ndarray], z: int) -> bytes:
    """Binary PPM of axial slice ``z``: windowed CT in grey, one contour colour per mask."""
    if len(masks) > len(CONTOUR_COLOURS):
        raise ValueError(f"at most {len(CONTOUR_COLOURS)} masks can be overlaid")
    nz = ct.shape[2]
    if not 0 <= z < nz:
        raise SliceOutOfRange(f"slice {z} outside 0..{nz - 1}")
    level, width = CT_WINDOW
    plane = ct[:, :, z].T  # rows run along y, columns along x
    grey = np.clip(np.floor((plane - (level - width / 2.0)) * 255.0 / width), 0, 255).astype(np.uint8)
    rgb = np.repeat(grey[:, :, None], 3, axis=2)
    for mask, colour in zip(masks, CONTOUR_COLOURS):
        if mask.shape != ct.shape:
            raise GridMismatch(f"mask shape {mask.shape} does not match CT {ct.shape}")
        rgb[_contour_2d(mask[:, :, z].T > 0)] = colour
    h, w = rgb.shape[:2]
    return f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    """Decode a binary PPM written by :func:`render_slice`."""
    magic, dims, maxval, pixels = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ValueError("not an 8-bit binary PPM")
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w, 3)
