"""Columnar text artifacts, run manifests, and reproducibility digests.

Every data file starts with the line ``# qchain-format 1`` followed by
``# key value`` metadata lines, a ``# columns: ...`` line, and whitespace-
separated numeric columns.  Reading a file with a different format version
fails loudly rather than guessing.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .params import LatticeParams
from .sweeps import CellSummary, HysteresisMap, SweepGrid
from .telegraph import TelegraphTrace

FORMAT_VERSION = 1
_HEADER = f"# qchain-format {FORMAT_VERSION}"


class FormatError(ValueError):
    """A data file is missing, truncated, or has a different format version."""


def _write_lines(path: Path, meta: dict, columns: list, rows) -> None:
    with open(path, "w") as fh:
        fh.write(_HEADER + "\n")
        for key, value in meta.items():
            fh.write(f"# {key} {value}\n")
        fh.write("# columns: " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(row) + "\n")


def _read_lines(path: Path) -> tuple[dict, list, list]:
    """Return (metadata, column names, data rows) of one artifact file."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0].strip() != _HEADER:
        raise FormatError(f"{path}: missing '{_HEADER}' header")
    meta: dict = {}
    columns: list = []
    rows: list = []
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("columns:"):
                columns = body[len("columns:"):].split()
            else:
                key, _, value = body.partition(" ")
                meta[key] = value
        else:
            rows.append(line.split())
    if not columns:
        raise FormatError(f"{path}: missing '# columns:' line")
    return meta, columns, rows


# ---------------------------------------------------------------- frequency x power grids

def write_grid(path: str | Path, grid: SweepGrid) -> None:
    meta = {
        "kind": "grid",
        "protocol": grid.protocol,
        "reference_ratio": repr(float(grid.reference_ratio)),
        "params": json.dumps(grid.params.to_dict()),
    }
    columns = ["freq", "power", "classification", "ratio", "g2",
               "g2_fourth", "transmission_db"]
    rows = []
    for row in grid.cells:
        for c in row:
            rows.append([repr(float(c.freq)), repr(float(c.epsilon)),
                         c.classification, repr(float(c.ratio)),
                         repr(float(c.g2)), repr(float(c.g2_fourth)),
                         repr(float(c.transmission_db))])
    _write_lines(Path(path), meta, columns, rows)


def read_grid(path: str | Path) -> SweepGrid:
    meta, columns, rows = _read_lines(path)
    if meta.get("kind") != "grid":
        raise FormatError(f"{path}: not a grid file")
    params = LatticeParams.from_dict(json.loads(meta["params"]))
    cells_by_freq: dict = {}
    powers_seen: dict = {}
    for r in rows:
        rec = dict(zip(columns, r))
        cell = CellSummary(
            freq=float(rec["freq"]),
            epsilon=float(rec["power"]),
            classification=rec["classification"],
            ratio=float(rec["ratio"]),
            g2=float(rec["g2"]),
            g2_fourth=float(rec["g2_fourth"]),
            transmission_db=float(rec["transmission_db"]),
        )
        cells_by_freq.setdefault(cell.freq, []).append(cell)
        powers_seen[cell.epsilon] = None
    freqs = np.array(list(cells_by_freq.keys()))
    powers = np.array(sorted(powers_seen.keys()))
    cells = [sorted(cells_by_freq[f], key=lambda c: c.epsilon) for f in freqs]
    grid = SweepGrid(freqs=freqs, powers=powers, cells=cells,
                     protocol=meta["protocol"], params=params,
                     reference_ratio=float(meta["reference_ratio"]))
    return grid


def write_difference(path: str | Path, hyst: HysteresisMap, label_a: str,
                     label_b: str) -> None:
    """Cellwise dB difference of a hysteresis/two-seed map."""
    meta = {
        "kind": "difference",
        "label_a": label_a,
        "label_b": label_b,
        "params": json.dumps(hyst.grid_a.params.to_dict()),
    }
    columns = ["freq", "power", "difference_db", "class_a", "class_b"]
    rows = []
    for i, f in enumerate(hyst.grid_a.freqs):
        for k, p in enumerate(hyst.grid_a.powers):
            rows.append([repr(float(f)), repr(float(p)),
                         repr(float(hyst.difference[i, k])),
                         hyst.grid_a.cells[i][k].classification,
                         hyst.grid_b.cells[i][k].classification])
    _write_lines(Path(path), meta, columns, rows)


def read_difference(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (freqs, powers, difference matrix in dB) of a difference file."""
    meta, columns, rows = _read_lines(path)
    if meta.get("kind") != "difference":
        raise FormatError(f"{path}: not a difference file")
    i_f, i_p, i_d = (columns.index(k) for k in ("freq", "power", "difference_db"))
    freqs = sorted({float(r[i_f]) for r in rows})
    powers = sorted({float(r[i_p]) for r in rows})
    diff = np.full((len(freqs), len(powers)), np.nan)
    for r in rows:
        diff[freqs.index(float(r[i_f])), powers.index(float(r[i_p]))] = float(r[i_d])
    return np.array(freqs), np.array(powers), diff


# ---------------------------------------------------------------- eigenmodes

def write_eigenmodes(path: str | Path, frequencies: np.ndarray,
                     weights: np.ndarray, params: LatticeParams) -> None:
    """One row per mode: frequency plus the mode weight at the chain edge
    (site 1), which controls how strongly the drive couples to the mode."""
    meta = {"kind": "eigenmodes", "params": json.dumps(params.to_dict())}
    weights = np.atleast_2d(weights)
    rows = [
        [str(mu + 1), repr(float(frequencies[mu])), repr(float(weights[0, mu]))]
        for mu in range(len(frequencies))
    ]
    _write_lines(Path(path), meta, ["mode", "frequency", "edge_weight"], rows)


def read_eigenmodes(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    meta, columns, rows = _read_lines(path)
    if meta.get("kind") != "eigenmodes":
        raise FormatError(f"{path}: not an eigenmodes file")
    freqs = np.array([float(r[columns.index("frequency")]) for r in rows])
    weights = np.array([float(r[columns.index("edge_weight")]) for r in rows])
    return freqs, weights


# ---------------------------------------------------------------- telegraph traces

def write_trace(path: str | Path, trace: TelegraphTrace) -> None:
    meta = {
        "kind": "trace",
        "dt": repr(float(trace.dt)),
        "filter_cutoff": repr(float(trace.filter_cutoff)),
    }
    for key, value in (trace.meta or {}).items():
        meta[f"meta.{key}"] = value
    has_labels = trace.truth_labels is not None
    columns = ["i", "q"] + (["label"] if has_labels else [])
    rows = []
    for n in range(trace.i_samples.size):
        row = [repr(float(trace.i_samples[n])), repr(float(trace.q_samples[n]))]
        if has_labels:
            row.append(str(int(trace.truth_labels[n])))
        rows.append(row)
    _write_lines(Path(path), meta, columns, rows)


def read_trace(path: str | Path) -> TelegraphTrace:
    meta, columns, rows = _read_lines(path)
    if meta.get("kind") != "trace":
        raise FormatError(f"{path}: not a trace file")
    data = np.array([[float(v) for v in r[:2]] for r in rows])
    labels = None
    if "label" in columns:
        k = columns.index("label")
        labels = np.array([int(r[k]) for r in rows], dtype=np.int8)
    extra = {key[len("meta."):]: value for key, value in meta.items()
             if key.startswith("meta.")}
    return TelegraphTrace(dt=float(meta["dt"]), i_samples=data[:, 0],
                          q_samples=data[:, 1], truth_labels=labels,
                          filter_cutoff=float(meta["filter_cutoff"]),
                          meta=extra)


# ---------------------------------------------------------------- switching-rate reports

def write_adr_report(path: str | Path, estimate) -> None:
    """Human- and machine-readable summary of a switching-rate analysis.

    Accepts an AdrEstimate; a MonostablePoint is recorded with NaN rates.
    """
    if hasattr(estimate, "rates"):
        meta = {
            "kind": "adr",
            "gamma_12": repr(float(estimate.rates.gamma_12)),
            "gamma_21": repr(float(estimate.rates.gamma_21)),
            "adr": repr(float(estimate.adr)),
            "censoring_12": estimate.censoring[0],
            "censoring_21": estimate.censoring[1],
            "channel": estimate.channel,
            "outcome": "bistable",
        }
    else:
        meta = {"kind": "adr", "gamma_12": "nan", "gamma_21": "nan",
                "adr": "nan", "outcome": "monostable"}
    _write_lines(Path(path), meta, ["none"], [])


# ---------------------------------------------------------------- manifests and digests

def file_digest(path: str | Path) -> str:
    """SHA-256 hex digest of a file's bytes."""
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass
class RunManifest:
    """Everything needed to reproduce one run: inputs, seed, outputs."""

    command: str
    config_hash: str
    seed: int
    artifact_paths: list = field(default_factory=list)
    artifact_digests: dict = field(default_factory=dict)

    def write(self, path: str | Path) -> None:
        payload = {
            "format_version": FORMAT_VERSION,
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "artifact_paths": self.artifact_paths,
            "artifact_digests": self.artifact_digests,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        payload = json.loads(Path(path).read_text())
        if payload.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported manifest version")
        return cls(command=payload["command"], config_hash=payload["config_hash"],
                   seed=payload["seed"], artifact_paths=payload["artifact_paths"],
                   artifact_digests=payload["artifact_digests"])


def make_manifest(command: str, config_text: str, seed: int,
                  artifacts: list) -> RunManifest:
    """Build a manifest, digesting every artifact that exists on disk."""
    digests = {}
    for p in artifacts:
        p = Path(p)
        if p.exists():
            digests[p.name] = file_digest(p)
    return RunManifest(command=command, config_hash=text_digest(config_text),
                       seed=seed, artifact_paths=[str(p) for p in artifacts],
                       artifact_digests=digests)
