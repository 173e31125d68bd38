"""On-disk formats: dataset directories, histogram/plan tables, provenance logs, reports.

A dataset directory holds ``manifest.json`` plus one comma-separated file per
sequence with header ``t,label[,utopia_label],f0,...,f{d-1}``. Floats are
written with ``repr`` so that reading back reproduces them exactly. Every
file is written to a temporary name and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, List

import numpy as np

from ulda.data import DataError, Sequence, SequenceDataset
from ulda.label_dist import AugmentationPlan, LabelBinning

MANIFEST = "manifest.json"
_ID_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _fmt(x) -> str:
    return repr(float(x))


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: List[str], rows: Iterable[List[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ------------------------------------------------------------------ datasets

def sequence_csv(seq: Sequence, extra: dict = None) -> str:
    """Serialize one sequence; ``extra`` maps column name -> per-frame values appended at the end."""
    header = ["t", "label"]
    if seq.utopia is not None:
        header.append("utopia_label")
    header += [f"f{j}" for j in range(seq.dim)]
    extra = extra or {}
    header += list(extra)
    cols = [list(map(str, seq.t.tolist())), [_fmt(v) for v in seq.labels]]
    if seq.utopia is not None:
        cols.append([_fmt(v) for v in seq.utopia])
    cols += [[_fmt(v) for v in seq.features[:, j]] for j in range(seq.dim)]
    cols += [[_fmt(v) for v in vals] for vals in extra.values()]
    return _csv_text(header, zip(*cols))


def write_dataset(dataset: SequenceDataset, directory, metadata: dict = None) -> Path:
    directory = Path(directory)
    entries = []
    for seq in dataset:
        if not _ID_RE.match(seq.seq_id):
            raise DataError(f"sequence id {seq.seq_id!r} is not usable as a file name")
        fname = f"{seq.seq_id}.csv"
        atomic_write(directory / fname, sequence_csv(seq))
        entries.append({"id": seq.seq_id, "file": fname, "frames": len(seq)})
    manifest = {
        "d": dataset.dim,
        "label_range": list(dataset.label_range),
        "sequences": entries,
    }
    if metadata:
        manifest["metadata"] = metadata
    atomic_write(directory / MANIFEST, dumps_json(manifest))
    return directory


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataError(f"{where}: not a number: {text!r}") from None


def read_sequence(path, seq_id: str, d: int) -> Sequence:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: empty file") from None
        header = [h.strip() for h in header]
        has_utopia = "utopia_label" in header
        expected = ["t", "label"] + (["utopia_label"] if has_utopia else []) + [f"f{j}" for j in range(d)]
        if header != expected:
            raise DataError(
                f"{path}:1: header {header} does not match manifest (expected {expected})"
            )
        t, labels, utopia, feats = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(expected):
                raise DataError(f"{path}:{line}: expected {len(expected)} fields, got {len(row)}")
            where = f"{path}:{line}"
            try:
                ti = int(row[0])
            except ValueError:
                raise DataError(f"{where}: frame index {row[0]!r} is not an integer") from None
            if t and ti <= t[-1]:
                raise DataError(f"{where}: t={ti} is not strictly increasing")
            t.append(ti)
            labels.append(_parse_float(row[1], where))
            k = 2
            if has_utopia:
                utopia.append(_parse_float(row[2], where))
                k = 3
            feats.append([_parse_float(v, where) for v in row[k:]])
    if not t:
        raise DataError(f"{path}: no frames")
    return Sequence(
        seq_id,
        np.array(t, dtype=np.int64),
        np.array(labels),
        np.array(feats, dtype=float).reshape(len(t), d),
        np.array(utopia) if has_utopia else None,
    )


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: cannot read manifest ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    for key in ("d", "label_range", "sequences"):
        if key not in manifest:
            raise DataError(f"{path}: manifest is missing {key!r}")
    if not isinstance(manifest["d"], int) or manifest["d"] < 1:
        raise DataError(f"{path}: d must be a positive integer")
    lr = manifest["label_range"]
    if not (isinstance(lr, list) and len(lr) == 2 and float(lr[0]) < float(lr[1])):
        raise DataError(f"{path}: label_range must be [min, max] with min < max")
    return manifest


def read_dataset(directory) -> SequenceDataset:
    directory = Path(directory)
    manifest = read_manifest(directory)
    d = manifest["d"]
    seqs = []
    for entry in manifest["sequences"]:
        seqs.append(read_sequence(directory / entry["file"], str(entry["id"]), d))
    return SequenceDataset(tuple(seqs), tuple(manifest["label_range"]), d)


# -------------------------------------------------------- tables and logs

def histogram_table(items) -> str:
    """``items``: iterable of (seq_id, {column: LabelHistogram}) sharing one binning."""
    rows, header = [], None
    for seq_id, hists in items:
        names = list(hists)
        binning = hists[names[0]].binning
        if header is None:
            header = ["sequence_id", "bin", "lo", "hi"] + names
        edges = binning.edges
        for i in range(binning.bin_count):
            rows.append(
                [seq_id, str(i), _fmt(edges[i]), _fmt(edges[i + 1])]
                + [_fmt(hists[n].counts[i]) for n in names]
            )
    return _csv_text(header or ["sequence_id", "bin", "lo", "hi"], rows)


PLAN_HEADER = ["sequence_id", "bin", "n_before", "n_after", "delta", "oversample", "undersample"]


def plan_table(plans) -> str:
    rows = []
    for seq_id, plan in plans:
        for r in plan.records():
            rows.append([
                seq_id, str(r["bin"]), _fmt(r["n_before"]), _fmt(r["n_after"]),
                _fmt(r["delta"]), str(r["oversample"]), "1" if r["undersample"] else "0",
            ])
    return _csv_text(PLAN_HEADER, rows)


def read_plans(path, binning: LabelBinning) -> dict:
    """Plan file back to {seq_id: AugmentationPlan}."""
    path = Path(path)
    per_seq = {}
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PLAN_HEADER:
            raise DataError(f"{path}:1: expected header {PLAN_HEADER}")
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if len(row) != len(PLAN_HEADER):
                raise DataError(f"{where}: expected {len(PLAN_HEADER)} fields")
            try:
                b = int(row[1])
            except ValueError:
                raise DataError(f"{where}: bin {row[1]!r} is not an integer") from None
            if not 0 <= b < binning.bin_count:
                raise DataError(f"{where}: bin {b} outside [0, {binning.bin_count})")
            before, after = per_seq.setdefault(
                row[0], (np.zeros(binning.bin_count), np.zeros(binning.bin_count))
            )
            before[b] = _parse_float(row[2], where)
            after[b] = _parse_float(row[3], where)
    return {k: AugmentationPlan(binning, v[0], v[1]) for k, v in per_seq.items()}


def jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def write_text(path, text: str) -> None:
    atomic_write(path, text)

