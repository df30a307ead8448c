"""Tokenized corpus cache: the artifact `ingest` writes and later stages read.

JSONL with a version header line, then one object per record carrying the
metadata downstream stages need (year, IPC, shares, inventors, assignees,
citations) plus the token list; abstracts themselves are not kept.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from ._io import atomic_write
from .errors import FormatError, VersionError
from .records import IpcCode, PatentRecord

FORMAT_NAME = "patsig-corpus"
VERSION = 1


@dataclass
class CorpusCache:
    records: list[PatentRecord]
    tokens: dict[str, list[str]]

    def __len__(self) -> int:
        return len(self.records)

    @property
    def years(self) -> dict[str, int]:
        return {r.id: r.year for r in self.records}

    @property
    def shares(self) -> dict[str, dict[str, float]]:
        return {r.id: dict(r.country_shares) for r in self.records}


def save_corpus_cache(records: Sequence[PatentRecord], tokens: dict[str, list[str]], path) -> None:
    with atomic_write(path, "w") as handle:
        header = {"format": FORMAT_NAME, "version": VERSION, "count": len(records)}
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            obj = {
                "id": record.id,
                "year": record.year,
                "ipc": [str(code) for code in record.ipc_codes],
                "country_shares": dict(record.country_shares),
                "inventors": list(record.inventors),
                "assignees": list(record.assignees),
                "citations": list(record.citations),
                "tokens": tokens[record.id],
            }
            handle.write(json.dumps(obj, sort_keys=True) + "\n")


def load_corpus_cache(path) -> CorpusCache:
    with open(path, "r", encoding="utf-8") as handle:
        first = handle.readline()
        try:
            header = json.loads(first) if first.strip() else None
        except json.JSONDecodeError:
            header = None
        if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
            raise FormatError(f"{path}: not a {FORMAT_NAME} cache (bad header line)")
        if header.get("version") != VERSION:
            raise VersionError(f"{path}: unsupported corpus cache version {header.get('version')}")
        records: list[PatentRecord] = []
        tokens: dict[str, list[str]] = {}
        for line_no, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: line {line_no}: invalid JSON: {exc.msg}") from None
            record = PatentRecord(
                id=obj["id"],
                abstract="",
                year=int(obj["year"]),
                granted=True,
                is_priority=True,
                ipc_codes=tuple(IpcCode.parse(s) for s in obj.get("ipc", [])),
                country_shares=dict(obj.get("country_shares", {})),
                inventors=tuple(obj.get("inventors", [])),
                assignees=tuple(obj.get("assignees", [])),
                citations=tuple(obj.get("citations", [])),
            )
            records.append(record)
            tokens[record.id] = list(obj.get("tokens", []))
    declared = header.get("count")
    if isinstance(declared, int) and declared != len(records):
        raise FormatError(f"{path}: header declares {declared} records, found {len(records)}")
    return CorpusCache(records, tokens)
