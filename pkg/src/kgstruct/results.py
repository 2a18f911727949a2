"""Results rows: one metric value per line of an append-only CSV."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import subprocess
from datetime import datetime, timezone
from functools import lru_cache
from pathlib import Path

RESULTS_FILE = "results.csv"
COLUMNS = ("timestamp", "git_describe", "command", "dataset", "config_hash", "seed", "metric", "value")
_METRIC_ORDER = ("mr", "mrr", "hits@1", "hits@3", "hits@5", "hits@10", "r2")


def config_hash(config: dict) -> str:
    """Short digest of a config, independent of key order at every depth."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonify)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _jsonify(value):
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    if isinstance(value, tuple):
        return list(value)
    if hasattr(value, "item"):
        return value.item()
    raise TypeError(f"cannot hash {type(value).__name__}")


@lru_cache(maxsize=1)
def git_describe() -> str:
    try:
        proc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return proc.stdout.strip() or "unknown"


class ResultsWriter:
    """Appends rows, one whole line per write call."""

    def __init__(self, path):
        self.path = Path(path)

    def write(self, command: str, dataset: str, config: dict, seed: int, metrics: dict) -> str:
        h = config_hash(config)
        stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
        new = not self.path.exists() or self.path.stat().st_size == 0
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if new:
            w.writerow(COLUMNS)
        for metric, value in metrics.items():
            w.writerow([stamp, git_describe(), command, dataset, h, seed, metric, repr(float(value))])
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        return h


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        return []
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["value"] = float(row["value"])
    return rows


def _metric_key(name: str):
    base = name.split("_", 1)[1] if "_" in name and name.split("_", 1)[0] in ("valid", "test", "train") else name
    rank = _METRIC_ORDER.index(base) if base in _METRIC_ORDER else len(_METRIC_ORDER)
    return (rank, name)


def summarise(rows: list[dict]) -> dict[str, list[dict]]:
    """Group rows by dataset, then config hash; the latest value of a metric wins.

    Datasets are sorted by name and entries by config hash, so the output
    does not depend on the order rows were written in.
    """
    grouped: dict[str, dict[str, dict]] = {}
    for row in rows:
        entry = grouped.setdefault(row["dataset"], {}).setdefault(
            row["config_hash"], {"config_hash": row["config_hash"], "command": row["command"], "metrics": {}}
        )
        entry["metrics"][row["metric"]] = row["value"]
    out = {}
    for dataset in sorted(grouped):
        entries = [grouped[dataset][h] for h in sorted(grouped[dataset])]
        for e in entries:
            e["metrics"] = dict(sorted(e["metrics"].items(), key=lambda kv: _metric_key(kv[0])))
        out[dataset] = entries
    return out


def render_report(tables: dict[str, list[dict]]) -> str:
    lines = []
    for dataset, entries in tables.items():
        metrics = sorted({m for e in entries for m in e["metrics"]}, key=_metric_key)
        header = ["config_hash", "command", *metrics]
        body = [[e["config_hash"], e["command"], *(_cell(e["metrics"].get(m)) for m in metrics)]
                for e in entries]
        widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
        lines.append(f"== {dataset} ==")
        for row in [header, *body]:
            lines.append("  ".join(str(x).ljust(w) for x, w in zip(row, widths)).rstrip())
        lines.append("")
    return "\n".join(lines)


def _cell(value) -> str:
    if value is None:
        return "-"
    if math.isnan(value):
        return "nan"
    return str(int(value)) if float(value).is_integer() and abs(value) < 1e12 else f"{value:.4f}"
