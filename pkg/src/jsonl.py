"""
Line-delimited JSON with a header object on line 1.

The header names the ``format`` and ``version`` and carries a ``created``
timestamp plus provenance; everything from line 2 on is deterministic.
"""
import datetime
import json
from pathlib import Path
from typing import Iterable, Iterator

from errors import CorruptFileError


def header(format_name: str, version: int, **provenance) -> dict:
    created = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    return {"format": format_name, "version": version, "created": created, **provenance}


def dumps(row) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_jsonl(path: Path, head: dict, rows: Iterable) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as out:
        out.write(json.dumps(head, sort_keys=True) + "\n")
        for row in rows:
            out.write(dumps(row) + "\n")
    return path


def read_jsonl(path: Path, format_name: str, version: int) -> tuple[dict, Iterator]:
    """
    Returns the header and an iterator of ``(line_number, row)``. Problems
    are reported as CorruptFileError naming the offending line.
    """
    try:
        lines = path.read_bytes().splitlines()
    except FileNotFoundError:
        raise CorruptFileError(path, 0, "file not found") from None
    if not lines:
        raise CorruptFileError(path, 1, "missing header")
    try:
        head = json.loads(decode_line(path, 1, lines[0]))
    except json.JSONDecodeError as exc:
        raise CorruptFileError(path, 1, f"unreadable header ({exc.msg})") from exc
    if not isinstance(head, dict) or head.get("format") != format_name:
        raise CorruptFileError(path, 1, f"not a {format_name} file")
    if head.get("version") != version:
        raise CorruptFileError(path, 1, f"unsupported version {head.get('version')!r}")

    def rows():
        for number, raw in enumerate(lines[1:], start=2):
            line = decode_line(path, number, raw)
            if not line.strip():
                continue
            try:
                yield number, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptFileError(path, number, exc.msg) from exc

    return head, rows()


def decode_line(path: Path, number: int, raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptFileError(
            path, number, f"invalid UTF-8 at byte {exc.start}"
        ) from exc
