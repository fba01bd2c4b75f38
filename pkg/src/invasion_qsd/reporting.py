"""CSV/JSON emission with run metadata and atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import subprocess
import tempfile
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__


@lru_cache(maxsize=1)
def version_string() -> str:
    """``git describe`` of the source tree, falling back to the package version."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--tags", "--dirty"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
            check=True,
        )
        return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return __version__


def fmt(x) -> str:
    """17 significant digits for floats; other values verbatim."""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _clean(obj):
    # JSON keeps floats round-trippable; numpy scalars become Python numbers
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return obj.item()
    return obj


def csv_text(header: Sequence[str], rows: Iterable[Sequence], meta: Mapping | None = None) -> str:
    buf = io.StringIO()
    if meta:
        for key, value in meta.items():
            buf.write(f"# {key}={fmt(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def json_text(payload: Mapping, meta: Mapping | None = None) -> str:
    doc = {"meta": _clean(dict(meta or {})), **_clean(dict(payload))}
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def read_csv(text: str) -> tuple[dict[str, str], list[dict[str, str]]]:
    """Parse a CSV written by :func:`csv_text` into (metadata, rows)."""
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            meta[key] = value
        else:
            body.append(line)
    return meta, list(csv.DictReader(body))


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def qsd_rows(states, probs) -> list[tuple[int, int, float]]:
    return [(k, l, float(p)) for (k, l), p in zip(states, probs)]


def write_qsd_csv(path, states, probs, meta: Mapping | None = None) -> None:
    atomic_write(path, csv_text(["k", "l", "nu"], qsd_rows(states, probs), meta))


def write_spectrum_csv(path, eigenvalues, meta: Mapping | None = None) -> None:
    rows = [(float(z.real), float(z.imag)) for z in eigenvalues]
    atomic_write(path, csv_text(["re", "im"], rows, meta))
