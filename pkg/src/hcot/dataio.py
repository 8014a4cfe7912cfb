"""On-disk formats: dataset directories, tensor archives, runs, and reports.

A dataset directory holds one manifest.json (kind "dataset") and one
subdirectory per sequence. A sequence directory holds manifest.json (kind
"sequence"), annotations.json (array of [x, y, w, h], top-left convention),
and one raw frame file per frame named frame_%06d.bin: little-endian 32-bit
floats, band-major then row-major, exactly bands*height*width values. Band
indices are written 1-based in manifests and 0-based everywhere in memory.

All JSON payloads are written with sorted keys and no timestamps, so
identical inputs produce byte-identical outputs. Wall-clock timings go to a
separate timing.json sidecar that is not part of the result payload.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path

import numpy as np

from .metrics import (
    PRECISION_THRESHOLDS,
    SUCCESS_THRESHOLDS,
    EvalResult,
)
from .tracker import FrameTrace, TrackRun
from .types import BBox, HsiCube, SequenceRecord, TrackerConfig

__all__ = [
    "FORMAT_VERSION",
    "DatasetError",
    "ManifestError",
    "GeometryError",
    "TruncatedFrameError",
    "write_sequence",
    "read_sequence",
    "write_dataset_manifest",
    "read_dataset_manifest",
    "write_tensors",
    "read_tensors",
    "write_track_run",
    "read_track_run",
    "write_eval_report",
    "read_config",
]

FORMAT_VERSION = 1
TENSOR_MAGIC = b"HCOTTENS"


class DatasetError(Exception):
    """Base class for on-disk format problems."""


class ManifestError(DatasetError):
    """Missing or malformed manifest/annotation JSON."""


class GeometryError(DatasetError):
    """Declared geometry disagrees with the stored data."""


class TruncatedFrameError(DatasetError):
    """A frame file is missing or shorter than its declared size."""


def _load_json(path: Path) -> dict:
    if not path.is_file():
        raise ManifestError(f"missing file: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"malformed JSON in {path}: {exc}") from exc


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _frame_name(index: int) -> str:
    return f"frame_{index:06d}.bin"


def write_sequence(seq: SequenceRecord, seq_dir) -> None:
    """Write one sequence directory (manifest + annotations + raw frames)."""
    seq_dir = Path(seq_dir)
    seq_dir.mkdir(parents=True, exist_ok=True)
    c, h, w = seq.frames[0].data.shape
    manifest = {
        "kind": "sequence",
        "format_version": FORMAT_VERSION,
        "name": seq.name,
        "frame_count": seq.n_frames,
        "bands": c,
        "height": h,
        "width": w,
        "attributes": sorted(seq.attributes),
        "false_color_bands": [b + 1 for b in seq.false_color_bands],
        "frames": [_frame_name(i) for i in range(seq.n_frames)],
        "annotations": "annotations.json",
    }
    _dump_json(manifest, seq_dir / "manifest.json")
    _dump_json([[b.x, b.y, b.w, b.h] for b in seq.annotations], seq_dir / "annotations.json")
    for i, frame in enumerate(seq.frames):
        payload = np.ascontiguousarray(frame.data, dtype="<f4").tobytes()
        with open(seq_dir / _frame_name(i), "wb") as fh:
            fh.write(payload)


def _require(manifest: dict, key: str, path: Path):
    if key not in manifest:
        raise ManifestError(f"{path}: manifest missing key {key!r}")
    return manifest[key]


def read_sequence(seq_dir) -> SequenceRecord:
    """Read a sequence directory back; bit-exact inverse of write_sequence."""
    seq_dir = Path(seq_dir)
    path = seq_dir / "manifest.json"
    manifest = _load_json(path)
    if manifest.get("kind") != "sequence":
        raise ManifestError(f"{path}: expected a sequence manifest")
    c = int(_require(manifest, "bands", path))
    h = int(_require(manifest, "height", path))
    w = int(_require(manifest, "width", path))
    frame_files = _require(manifest, "frames", path)
    if len(frame_files) != int(_require(manifest, "frame_count", path)):
        raise ManifestError(f"{path}: frame list length disagrees with frame_count")
    expected = c * h * w * 4
    frames = []
    for name in frame_files:
        fpath = seq_dir / name
        if not fpath.is_file():
            raise TruncatedFrameError(f"missing frame file: {fpath}")
        raw = fpath.read_bytes()
        if len(raw) != expected:
            raise TruncatedFrameError(
                f"frame file {fpath} holds {len(raw)} bytes, expected {expected}"
            )
        data = np.frombuffer(raw, dtype="<f4").reshape(c, h, w)
        try:
            frames.append(HsiCube(data))
        except ValueError as exc:
            raise GeometryError(f"frame file {fpath}: {exc}") from exc
    ann = _load_json(seq_dir / Path(_require(manifest, "annotations", path)))
    if not isinstance(ann, list) or len(ann) != len(frames):
        raise ManifestError(f"{seq_dir}: annotation count disagrees with frame count")
    try:
        boxes = tuple(BBox(*vals) for vals in ann)
        return SequenceRecord(
            name=str(_require(manifest, "name", path)),
            frames=tuple(frames),
            annotations=boxes,
            attributes=frozenset(manifest.get("attributes", [])),
            false_color_bands=tuple(int(b) - 1 for b in _require(manifest, "false_color_bands", path)),
        )
    except (TypeError, ValueError) as exc:
        raise GeometryError(f"{seq_dir}: {exc}") from exc


def write_dataset_manifest(entries: list[dict], root) -> None:
    """Write the top-level manifest listing sequence subdirectories."""
    _dump_json(
        {"kind": "dataset", "format_version": FORMAT_VERSION, "sequences": entries},
        Path(root) / "manifest.json",
    )


def dataset_entry(seq: SequenceRecord, path: str) -> dict:
    c, h, w = seq.frames[0].data.shape
    return {
        "name": seq.name,
        "path": path,
        "frame_count": seq.n_frames,
        "bands": c,
        "height": h,
        "width": w,
        "attributes": sorted(seq.attributes),
        "false_color_bands": [b + 1 for b in seq.false_color_bands],
    }


def read_dataset_manifest(root) -> list[dict]:
    """Sequence entries of a dataset directory (validated lazily per sequence)."""
    root = Path(root)
    path = root / "manifest.json"
    manifest = _load_json(path)
    if manifest.get("kind") != "dataset":
        raise ManifestError(f"{path}: expected a dataset manifest")
    entries = _require(manifest, "sequences", path)
    for e in entries:
        if not (root / e["path"]).is_dir():
            raise ManifestError(f"{path}: sequence directory {e['path']!r} does not exist")
    return entries


# ---------------------------------------------------------------------------
# tensor archive


def write_tensors(path, tensors: dict[str, np.ndarray]) -> None:
    """Binary tensor archive: magic, version, JSON index, raw little-endian data."""
    index = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dtype = arr.dtype.newbyteorder("<")
        blob = arr.astype(dtype, copy=False).tobytes()
        index.append(
            {
                "name": name,
                "dtype": dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(index, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_tensors(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise ManifestError(f"{path}: not a tensor archive")
    version, header_len = struct.unpack_from("<II", raw, len(TENSOR_MAGIC))
    if version != FORMAT_VERSION:
        raise ManifestError(f"{path}: unsupported tensor archive version {version}")
    body = len(TENSOR_MAGIC) + 8
    index = json.loads(raw[body : body + header_len].decode("utf-8"))
    data_start = body + header_len
    out = {}
    for entry in index:
        start = data_start + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(raw):
            raise TruncatedFrameError(f"{path}: tensor {entry['name']!r} is truncated")
        arr = np.frombuffer(raw[start:end], dtype=np.dtype(entry["dtype"]))
        out[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return out


# ---------------------------------------------------------------------------
# run + evaluation payloads


def _box_list(b: BBox) -> list[float]:
    return [b.x, b.y, b.w, b.h]


def write_track_run(run: TrackRun, run_dir) -> None:
    """Write run.json + trace.csv (payload) and timing.json (sidecar)."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": FORMAT_VERSION,
        "sequence": run.sequence,
        "generator": run.generator,
        "config": run.config,
        "outputs": [
            {
                "frame": t.frame,
                "box": _box_list(t.box),
                "raw_box": _box_list(t.raw_box),
                "dc": t.dc,
                "offset": t.offset,
                "source": t.source,
                "reason": t.reason,
            }
            for t in run.traces
        ],
    }
    _dump_json(payload, run_dir / "run.json")
    _dump_json({"wall_time_s": run.wall_time_s}, run_dir / "timing.json")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["frame", "dc", "offset", "source", "reason", "x", "y", "w", "h"])
    for t in run.traces:
        writer.writerow([t.frame, repr(t.dc), repr(t.offset), t.source, t.reason,
                         repr(t.box.x), repr(t.box.y), repr(t.box.w), repr(t.box.h)])
    (run_dir / "trace.csv").write_text(buf.getvalue(), encoding="utf-8")


def read_track_run(run_dir) -> TrackRun:
    run_dir = Path(run_dir)
    payload = _load_json(run_dir / "run.json")
    traces = [
        FrameTrace(
            frame=int(o["frame"]),
            box=BBox(*o["box"]),
            raw_box=BBox(*o["raw_box"]),
            dc=float(o["dc"]),
            offset=float(o["offset"]),
            source=str(o["source"]),
            reason=str(o["reason"]),
        )
        for o in payload["outputs"]
    ]
    timing_path = run_dir / "timing.json"
    wall = _load_json(timing_path)["wall_time_s"] if timing_path.is_file() else 0.0
    return TrackRun(
        sequence=str(payload["sequence"]),
        generator=str(payload["generator"]),
        config=payload["config"],
        traces=traces,
        wall_time_s=float(wall),
    )


def _curve_csv(thresholds, values) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "value"])
    for t, v in zip(thresholds, values):
        writer.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()


def write_eval_report(result: EvalResult, out_dir) -> None:
    """summary.json plus success/precision curve CSVs and the attribute table."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = {
        "format_version": FORMAT_VERSION,
        "overall": {"auc": result.auc, "dp20": result.dp20, "frames": len(result.ious)},
        "per_sequence": result.per_sequence,
        "per_attribute": result.per_attribute,
    }
    _dump_json(summary, out_dir / "summary.json")
    (out_dir / "success_curve.csv").write_text(
        _curve_csv(SUCCESS_THRESHOLDS, result.success_curve), encoding="utf-8"
    )
    (out_dir / "precision_curve.csv").write_text(
        _curve_csv(PRECISION_THRESHOLDS, result.precision_curve), encoding="utf-8"
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["attribute", "auc", "dp20", "frames", "sequences"])
    for tag in sorted(result.per_attribute):
        row = result.per_attribute[tag]
        writer.writerow([tag, repr(row["auc"]), repr(row["dp20"]),
                         row["frames"], row["sequences"]])
    (out_dir / "attributes.csv").write_text(buf.getvalue(), encoding="utf-8")


def read_config(path) -> TrackerConfig:
    """Tracker config from JSON; every field optional, unknown keys rejected."""
    payload = _load_json(Path(path))
    if not isinstance(payload, dict):
        raise ManifestError(f"{path}: config must be a JSON object")
    try:
        return TrackerConfig.from_dict(payload)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
