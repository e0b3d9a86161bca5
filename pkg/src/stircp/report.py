"""Artifact emission: JSON / CSV with a schema stamp and the resolved
run configuration, so every output can be reproduced from itself."""

from __future__ import annotations

import csv
import io
import json

SCHEMA_VERSION = 1


def render_json(config: dict, results) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "config": config, "results": results}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def render_csv(config: dict, rows, fieldnames) -> str:
    """Header-only output for an empty row set; field order is fixed by the
    caller (stable across runs)."""
    buf = io.StringIO()
    buf.write("# schema_version=%d\n" % SCHEMA_VERSION)
    buf.write("# config=%s\n" % json.dumps(config, sort_keys=True))
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in fieldnames})
    return buf.getvalue()


def write_artifact(text: str, path: str | None) -> None:
    if path is None:
        print(text, end="")
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise IOError(f"cannot write artifact to {path}: {exc}") from exc
