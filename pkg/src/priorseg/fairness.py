"""Gender-gap statistics over per-patient scores.

AGD and MGD are signed, male minus female. QD measures how far the
interquartile ranges of the two groups reach past each other:
``max(Q3_male - Q1_female, Q3_female - Q1_male)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyGroup
from .regions import REGIONS

WHOLE = "WHOLE"
REPORT_REGIONS = (*REGIONS, WHOLE)
QUANTILE_RULE = "linear interpolation, rank = p * (n - 1) on sorted values"


@dataclass(frozen=True)
class ScoreSample:
    patient_id: str
    sex: str
    region: str
    dsc: float
    hd95_mm: float | None = None


@dataclass(frozen=True)
class GroupStats:
    n: int
    mean: float
    q1: float
    median: float
    q3: float


@dataclass(frozen=True)
class RegionFairness:
    region: str
    agd: float | None = None
    mgd: float | None = None
    qd: float | None = None
    groups: dict[str, GroupStats] = field(default_factory=dict)
    # HD95 variant, only when every sample in both groups has a defined HD95
    hd95: dict[str, float] | None = None
    flag: str | None = None

    @property
    def flagged(self) -> bool:
        return self.flag is not None


@dataclass(frozen=True)
class FairnessSummary:
    regions: dict[str, RegionFairness]

    @property
    def any_flagged(self) -> bool:
        return any(r.flagged for r in self.regions.values())

    def to_json(self) -> dict:
        out = {}
        for name, r in self.regions.items():
            out[name] = {
                "agd": r.agd,
                "mgd": r.mgd,
                "qd": r.qd,
                "groups": {
                    sex: {"n": g.n, "mean": g.mean, "q1": g.q1, "median": g.median, "q3": g.q3}
                    for sex, g in r.groups.items()
                },
                "hd95": r.hd95,
                "flag": r.flag,
            }
        return out


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise EmptyGroup("any")
    q1, q2, q3 = np.quantile(arr, [0.25, 0.5, 0.75], method="linear")
    return float(q1), float(q2), float(q3)


def _groups(samples: Iterable[ScoreSample], region: str, metric: str = "dsc") -> dict[str, list[float]]:
    groups: dict[str, list[float]] = {"female": [], "male": []}
    for s in samples:
        if s.region == region:
            groups[s.sex].append(getattr(s, metric))
    for sex, vals in groups.items():
        if not vals:
            raise EmptyGroup(sex, region)
    return groups


def agd_of(male: Sequence[float], female: Sequence[float]) -> float:
    return math.fsum(male) / len(male) - math.fsum(female) / len(female)


def mgd_of(male: Sequence[float], female: Sequence[float]) -> float:
    return quartiles(male)[1] - quartiles(female)[1]


def qd_of(male: Sequence[float], female: Sequence[float]) -> float:
    m1, _, m3 = quartiles(male)
    f1, _, f3 = quartiles(female)
    return max(m3 - f1, f3 - m1)


def agd(samples: Sequence[ScoreSample], region: str = WHOLE) -> float:
    g = _groups(samples, region)
    return agd_of(g["male"], g["female"])


def mgd(samples: Sequence[ScoreSample], region: str = WHOLE) -> float:
    g = _groups(samples, region)
    return mgd_of(g["male"], g["female"])


def qd(samples: Sequence[ScoreSample], region: str = WHOLE) -> float:
    g = _groups(samples, region)
    return qd_of(g["male"], g["female"])


def _stats(values: Sequence[float]) -> GroupStats:
    q1, q2, q3 = quartiles(values)
    return GroupStats(len(values), math.fsum(values) / len(values), q1, q2, q3)


def summarize_region(samples: Sequence[ScoreSample], region: str) -> RegionFairness:
    try:
        g = _groups(samples, region)
    except EmptyGroup as exc:
        present = {s.sex for s in samples if s.region == region}
        groups = {}
        for sex in sorted(present):
            groups[sex] = _stats([s.dsc for s in samples if s.region == region and s.sex == sex])
        return RegionFairness(region, groups=groups, flag=str(exc))
    male, female = sorted(g["male"]), sorted(g["female"])
    hd95 = None
    hm = [s.hd95_mm for s in samples if s.region == region and s.sex == "male"]
    hf = [s.hd95_mm for s in samples if s.region == region and s.sex == "female"]
    if all(v is not None for v in hm + hf):
        hm, hf = sorted(hm), sorted(hf)
        hd95 = {"agd": agd_of(hm, hf), "mgd": mgd_of(hm, hf), "qd": qd_of(hm, hf)}
    return RegionFairness(
        region,
        agd=agd_of(male, female),
        mgd=mgd_of(male, female),
        qd=qd_of(male, female),
        groups={"female": _stats(female), "male": _stats(male)},
        hd95=hd95,
    )


def summarize(samples: Sequence[ScoreSample]) -> FairnessSummary:
    """Per-region and whole-body summary; regions lacking a sex are flagged, not dropped."""
    present = {s.region for s in samples}
    if not present:
        raise ValueError("no samples to summarize")
    return FairnessSummary({r: summarize_region(samples, r) for r in REPORT_REGIONS if r in present})
