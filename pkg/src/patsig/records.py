"""Patent records: JSONL parsing, IPC codes, and corpus filtering."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Mapping

from .errors import CorpusError

# "SCCS G/SG" layout, e.g. "B60L 11/18"
_IPC_RE = re.compile(r"^([A-H])(\d{2})([A-Z])\s+(\d+)/(\d+)$")

SHARE_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True, order=True)
class IpcCode:
    """One IPC symbol broken into its 5-level hierarchy."""

    section: str
    class_num: int
    subclass: str
    group: int
    subgroup: int

    @classmethod
    def parse(cls, symbol: str) -> "IpcCode":
        m = _IPC_RE.match(symbol.strip())
        if m is None:
            raise CorpusError(f"unparseable IPC symbol {symbol!r}")
        return cls(m.group(1), int(m.group(2)), m.group(3), int(m.group(4)), int(m.group(5)))

    @property
    def class_key(self) -> str:
        return f"{self.section}{self.class_num:02d}"

    @property
    def subclass_key(self) -> str:
        return f"{self.class_key}{self.subclass}"

    @property
    def group_key(self) -> str:
        return f"{self.subclass_key} {self.group}"

    @property
    def subgroup_key(self) -> str:
        return f"{self.group_key}/{self.subgroup:02d}"

    def __str__(self) -> str:
        return self.subgroup_key


@dataclass(frozen=True)
class PatentRecord:
    """One patent as ingested from the external JSONL schema."""

    id: str
    abstract: str
    year: int
    granted: bool
    is_priority: bool
    ipc_codes: tuple[IpcCode, ...] = ()
    country_shares: Mapping[str, float] = field(default_factory=dict)
    inventors: tuple[str, ...] = ()
    assignees: tuple[str, ...] = ()
    citations: tuple[str, ...] = ()

    @property
    def first_subclass(self) -> str | None:
        """First-listed IPC subclass, the single-label classification target."""
        return self.ipc_codes[0].subclass_key if self.ipc_codes else None


@dataclass(frozen=True)
class FilterPolicy:
    """Corpus selection predicates; defaults follow the standard selection window."""

    year_min: int | None = 1980
    year_max: int | None = 2017
    granted_only: bool = True
    priority_only: bool = True

    def admits(self, record: PatentRecord) -> bool:
        if self.year_min is not None and record.year < self.year_min:
            return False
        if self.year_max is not None and record.year > self.year_max:
            return False
        if self.granted_only and not record.granted:
            return False
        if self.priority_only and not record.is_priority:
            return False
        return True


def _as_str_tuple(value: object, line_no: int, name: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorpusError(f"line {line_no}: field {name!r} must be a list of strings")
    return tuple(value)


def _record_from_obj(obj: dict, line_no: int) -> PatentRecord:
    try:
        rid = obj["id"]
        abstract = obj["abstract"]
        year = obj["year"]
        granted = obj["granted"]
        is_priority = obj["is_priority"]
    except KeyError as exc:
        raise CorpusError(f"line {line_no}: missing required field {exc.args[0]!r}") from None
    if not isinstance(rid, str) or not rid:
        raise CorpusError(f"line {line_no}: 'id' must be a non-empty string")
    if not isinstance(abstract, str):
        raise CorpusError(f"line {line_no}: 'abstract' must be a string")
    if not isinstance(year, int) or isinstance(year, bool):
        raise CorpusError(f"line {line_no}: 'year' must be an integer")
    if not isinstance(granted, bool) or not isinstance(is_priority, bool):
        raise CorpusError(f"line {line_no}: 'granted' and 'is_priority' must be booleans")

    try:
        ipc_codes = tuple(IpcCode.parse(s) for s in obj.get("ipc", []))
    except CorpusError as exc:
        raise CorpusError(f"line {line_no}: {exc}") from None

    raw_shares = obj.get("country_shares", {})
    if not isinstance(raw_shares, dict):
        raise CorpusError(f"line {line_no}: 'country_shares' must be an object")
    shares: dict[str, float] = {}
    if raw_shares:
        for country, value in raw_shares.items():
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise CorpusError(f"line {line_no}: share for {country!r} must be a number")
            if value < 0.0 or value > 1.0:
                raise CorpusError(f"line {line_no}: share for {country!r} out of [0, 1]: {value}")
            shares[str(country)] = float(value)
        total = sum(shares.values())
        if abs(total - 1.0) > SHARE_SUM_TOLERANCE:
            raise CorpusError(f"line {line_no}: record {rid!r} country shares sum {total:.6g}, expected 1.0")
        # Renormalize so the stored shares sum to exactly 1.0.
        shares = {c: v / total for c, v in shares.items()}

    return PatentRecord(
        id=rid,
        abstract=abstract,
        year=year,
        granted=granted,
        is_priority=is_priority,
        ipc_codes=ipc_codes,
        country_shares=shares,
        inventors=_as_str_tuple(obj.get("inventors"), line_no, "inventors"),
        assignees=_as_str_tuple(obj.get("assignees"), line_no, "assignees"),
        citations=_as_str_tuple(obj.get("citations"), line_no, "citations"),
    )


def parse_patents(stream: Iterable[str] | IO[str]) -> list[PatentRecord]:
    """Parse a line-delimited JSON record stream into PatentRecords.

    Malformed lines raise CorpusError carrying the 1-based line number;
    nothing is silently dropped. Duplicate ids are a hard error naming
    both offending lines.
    """
    records: list[PatentRecord] = []
    seen: dict[str, int] = {}
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"line {line_no}: invalid JSON: {exc.msg}") from None
        if not isinstance(obj, dict):
            raise CorpusError(f"line {line_no}: expected a JSON object")
        record = _record_from_obj(obj, line_no)
        if record.id in seen:
            raise CorpusError(
                f"duplicate id {record.id!r} on lines {seen[record.id]} and {line_no}"
            )
        seen[record.id] = line_no
        records.append(record)
    return records


def filter_corpus(records: Iterable[PatentRecord], policy: FilterPolicy | None = None) -> list[PatentRecord]:
    """Keep the records admitted by every enabled policy predicate, order preserved."""
    policy = policy or FilterPolicy()
    return [r for r in records if policy.admits(r)]


def iter_jsonl(path) -> Iterator[str]:
    with open(path, "r", encoding="utf-8") as handle:
        yield from handle
