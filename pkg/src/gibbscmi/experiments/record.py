"""Experiment records and their on-disk form (CSV tables, JSON payloads, manifest)."""

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .config import config_hash


@dataclass
class Table:
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, *row):
        if len(row) != len(self.columns):
            raise ValueError(f"row has {len(row)} fields, table has {len(self.columns)}")
        self.rows.append(tuple(row))

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


@dataclass
class ExperimentRecord:
    experiment: str
    config: dict
    version: str
    tables: dict = field(default_factory=dict)  # name -> Table
    fits: dict = field(default_factory=dict)
    payloads: dict = field(default_factory=dict)  # name -> JSON-able object
    wall_time: float = math.nan

    @property
    def config_hash(self):
        return config_hash(self.config)

    def table(self, name, columns):
        t = Table(tuple(columns))
        self.tables[name] = t
        return t


def _cell(x):
    # repr keeps full float precision, so reruns compare bit-for-bit
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (list, tuple)):
        return " ".join(str(v) for v in x)
    return str(x)


def jsonable(obj):
    """Replace non-finite floats (not valid JSON) by strings and tuples by lists."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if hasattr(obj, "item"):  # numpy scalars
        return jsonable(obj.item())
    return obj


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit(record, out_dir):
    """Write ``<table>.csv`` files, ``<payload>.json`` files, ``fits.json`` and ``manifest.json``.

    Everything except the manifest (which carries the wall time) is a pure
    function of the config.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, table in record.tables.items():
        path = out / f"{name}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(table.columns)
            for row in table.rows:
                w.writerow([_cell(x) for x in row])
        files[path.name] = _sha(path)
    payloads = dict(record.payloads)
    payloads["fits"] = record.fits
    for name, obj in payloads.items():
        path = out / f"{name}.json"
        path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
        files[path.name] = _sha(path)
    manifest = {
        "experiment": record.experiment,
        "version": record.version,
        "config": jsonable(record.config),
        "config_hash": record.config_hash,
        "wall_time_s": record.wall_time,
        "files": files,
        "fits": jsonable(record.fits),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out
