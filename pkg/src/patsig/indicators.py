"""Temporal similarity indicators per patent and the directed country-level
knowledge-flow matrix aggregated from future-window similarities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ._io import atomic_write
from .errors import ConfigError, CorpusError
from .similarity import SimilarityGraph

GLOBAL_GROUP = "global"


@dataclass(frozen=True)
class TemporalWindow:
    """Lag window in years: a neighbor j of i qualifies as

    past:   -min_lag > (t_j - t_i) >= -max_lag
    future:  min_lag < (t_j - t_i) <= max_lag

    min_lag absorbs the application-to-publication delay; max_lag bounds the
    horizon (math.inf is allowed). Boundaries are strict at min_lag and
    inclusive at max_lag on both sides.
    """

    min_lag: float = 1.0
    max_lag: float = 5.0

    def __post_init__(self):
        if not (0 <= self.min_lag < self.max_lag):
            raise ConfigError(
                f"need 0 <= min_lag < max_lag, got min_lag={self.min_lag}, max_lag={self.max_lag}"
            )

    def in_past(self, delta: float) -> bool:
        return -self.min_lag > delta >= -self.max_lag

    def in_future(self, delta: float) -> bool:
        return self.min_lag < delta <= self.max_lag


@dataclass
class PatentIndicators:
    """Similarity-share indicators for one patent."""

    id: str
    year: float
    neighbor_count: int
    sim_total: float
    sim_past: float
    sim_future: float


def _year_of(years: Mapping[str, float], record_id: str, role: str) -> float:
    try:
        return years[record_id]
    except KeyError:
        raise CorpusError(f"{role} patent {record_id!r} has no filing year") from None


def compute_indicators(
    graph: SimilarityGraph,
    years: Mapping[str, float],
    window: TemporalWindow | None = None,
    normalized: bool = True,
) -> list[PatentIndicators]:
    """Mean (or, with normalized=False, summed) similarity of each patent's
    neighbors, split into the past and future lag windows.

    Patents without neighbors get all-zero indicators. A neighbor without a
    filing year is a hard error naming both ids.
    """
    window = window or TemporalWindow()
    out: list[PatentIndicators] = []
    for src, adjacency in graph.neighbors.items():
        year = _year_of(years, src, "focal")
        m = len(adjacency)
        if m == 0:
            out.append(PatentIndicators(src, year, 0, 0.0, 0.0, 0.0))
            continue
        denom = float(m) if normalized else 1.0
        total = past = future = 0.0
        for dst, score in adjacency:
            try:
                delta = years[dst] - year
            except KeyError:
                raise CorpusError(
                    f"neighbor {dst!r} of patent {src!r} has no filing year"
                ) from None
            total += score
            if window.in_past(delta):
                past += score
            if window.in_future(delta):
                future += score
        out.append(PatentIndicators(src, year, m, total / denom, past / denom, future / denom))
    return out


def save_indicators_tsv(indicators: Sequence[PatentIndicators], path) -> None:
    with atomic_write(path, "w") as handle:
        handle.write("id\tyear\tm\tsim_total\tsim_past\tsim_future\n")
        for row in indicators:
            year = int(row.year) if float(row.year).is_integer() else row.year
            handle.write(
                f"{row.id}\t{year}\t{row.neighbor_count}\t"
                f"{row.sim_total:.6f}\t{row.sim_past:.6f}\t{row.sim_future:.6f}\n"
            )


@dataclass
class TimeSeriesRow:
    group: str
    year: float
    count: float
    mean_future: float
    mean_past: float


def aggregate_time_series(
    indicators: Sequence[PatentIndicators],
    group_by: str = "global",
    shares: Mapping[str, Mapping[str, float]] | None = None,
) -> list[TimeSeriesRow]:
    """Per-year patent counts and share-weighted mean indicators.

    group_by "country" fractionalizes each patent across its country shares;
    "global" counts every patent with weight 1. Years with no patents are
    simply absent.
    """
    if group_by not in ("global", "country"):
        raise ConfigError(f"group_by must be 'global' or 'country', got {group_by!r}")
    if group_by == "country" and shares is None:
        raise ConfigError("country grouping requires an id->country-shares mapping")
    acc: dict[tuple[str, float], list[float]] = {}
    for row in indicators:
        if group_by == "global":
            weights = {GLOBAL_GROUP: 1.0}
        else:
            weights = dict(shares.get(row.id, {}))
        for group, weight in weights.items():
            cell = acc.setdefault((group, row.year), [0.0, 0.0, 0.0])
            cell[0] += weight
            cell[1] += weight * row.sim_future
            cell[2] += weight * row.sim_past
    out = []
    for (group, year), (count, fut, past) in sorted(acc.items()):
        if count <= 0.0:
            continue
        out.append(TimeSeriesRow(group, year, count, fut / count, past / count))
    return out


def save_time_series_tsv(rows: Sequence[TimeSeriesRow], path) -> None:
    with atomic_write(path, "w") as handle:
        handle.write("group\tyear\tcount\tmean_future\tmean_past\n")
        for row in rows:
            year = int(row.year) if float(row.year).is_integer() else row.year
            handle.write(
                f"{row.group}\t{year}\t{row.count:.6f}\t"
                f"{row.mean_future:.6f}\t{row.mean_past:.6f}\n"
            )


@dataclass
class CountryFlowMatrix:
    """Directed country-to-country flow of future-window similarity.

    flow[a][b] accumulates share_i(a) * share_j(b) * s_ij over qualifying
    edges, i.e. knowledge flowing from the earlier patent's countries to the
    later patent's countries. Domestic (diagonal) flows are kept but reported
    separately in the node-strength summary.
    """

    countries: list[str] = field(default_factory=list)
    matrix: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    period: tuple[float, float] | None = None
    skipped_missing_shares: int = 0

    def flow(self, src: str, dst: str) -> float:
        return float(self.matrix[self.countries.index(src), self.countries.index(dst)])

    def total(self) -> float:
        return float(self.matrix.sum())

    def save_tsv(self, path) -> None:
        with atomic_write(path, "w") as handle:
            handle.write("src_country\tdst_country\tflow\n")
            for i, a in enumerate(self.countries):
                for j, b in enumerate(self.countries):
                    if self.matrix[i, j] != 0.0:
                        handle.write(f"{a}\t{b}\t{self.matrix[i, j]:.6f}\n")

    def save_node_strength_tsv(self, path) -> None:
        with atomic_write(path, "w") as handle:
            handle.write("country\tout_flow\tin_flow\tdomestic\n")
            for i, country in enumerate(self.countries):
                domestic = self.matrix[i, i]
                out_flow = self.matrix[i, :].sum() - domestic
                in_flow = self.matrix[:, i].sum() - domestic
                handle.write(f"{country}\t{out_flow:.6f}\t{in_flow:.6f}\t{domestic:.6f}\n")


def compute_country_flows(
    graph: SimilarityGraph,
    years: Mapping[str, float],
    shares: Mapping[str, Mapping[str, float]],
    window: TemporalWindow | None = None,
    period: tuple[float, float] | None = None,
) -> CountryFlowMatrix:
    """Aggregate future-window edge similarities into country flows.

    Only edges whose source patent was filed inside `period` (inclusive)
    contribute. A patent with no country shares contributes nothing; such
    skips are counted on the result.
    """
    window = window or TemporalWindow()
    flows: dict[tuple[str, str], float] = {}
    skipped = 0
    for src, adjacency in graph.neighbors.items():
        if not adjacency:
            continue
        year = _year_of(years, src, "focal")
        if period is not None and not (period[0] <= year <= period[1]):
            continue
        src_shares = shares.get(src) or {}
        for dst, score in adjacency:
            try:
                delta = years[dst] - year
            except KeyError:
                raise CorpusError(
                    f"neighbor {dst!r} of patent {src!r} has no filing year"
                ) from None
            if not window.in_future(delta):
                continue
            dst_shares = shares.get(dst) or {}
            if not src_shares or not dst_shares:
                skipped += 1
                continue
            for a, wa in src_shares.items():
                for b, wb in dst_shares.items():
                    key = (a, b)
                    flows[key] = flows.get(key, 0.0) + wa * wb * score
    countries = sorted({c for pair in flows for c in pair})
    index = {c: i for i, c in enumerate(countries)}
    matrix = np.zeros((len(countries), len(countries)), dtype=np.float64)
    for (a, b), value in flows.items():
        matrix[index[a], index[b]] = value
    return CountryFlowMatrix(countries, matrix, period, skipped)
