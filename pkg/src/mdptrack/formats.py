"""MOTChallenge-format files, PGM rasters, and flat key=value configs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoundingBox, Detection, Trajectory
from .errors import ContractViolation, ParseError


@dataclass
class GtEntry:
    frame: int
    box: BoundingBox
    flag: int = 1  # 0 means: present in the file but excluded from evaluation
    visibility: float = 1.0
    occluded: bool = False


class GtTrackSet:
    """Ground-truth trajectories keyed by track id."""

    def __init__(self):
        self.tracks: dict[int, list[GtEntry]] = {}

    def add(self, track_id: int, entry: GtEntry) -> None:
        entries = self.tracks.setdefault(track_id, [])
        if entries and entry.frame <= entries[-1].frame:
            entries_sorted = sorted(entries + [entry], key=lambda e: e.frame)
            for a, b in zip(entries_sorted, entries_sorted[1:]):
                if a.frame == b.frame:
                    raise ContractViolation(
                        f"duplicate (frame={a.frame}, id={track_id}) ground-truth entry"
                    )
            self.tracks[track_id] = entries_sorted
        else:
            entries.append(entry)

    def track_ids(self) -> list[int]:
        return sorted(self.tracks)

    def frames(self) -> list[int]:
        out: set[int] = set()
        for entries in self.tracks.values():
            out.update(e.frame for e in entries)
        return sorted(out)

    def boxes_in_frame(self, frame: int, include_ignored: bool = False) -> list[tuple[int, BoundingBox]]:
        out = []
        for tid in self.track_ids():
            for e in self.tracks[tid]:
                if e.frame == frame and (include_ignored or e.flag != 0):
                    out.append((tid, e.box))
        return out

    def entry(self, track_id: int, frame: int) -> GtEntry | None:
        for e in self.tracks.get(track_id, ()):
            if e.frame == frame:
                return e
        return None

    def box_count(self, evaluated_only: bool = True) -> int:
        return sum(
            1
            for entries in self.tracks.values()
            for e in entries
            if not evaluated_only or e.flag != 0
        )


@dataclass
class DetectionSet:
    """Detections sorted by frame, with an optional provenance sidecar.

    ``provenance[i]`` is the ground-truth track id that spawned detection i,
    or None for a false positive; it never appears in the MOT-format file.
    """

    detections: list[Detection] = field(default_factory=list)
    provenance: list[int | None] | None = None

    def __len__(self) -> int:
        return len(self.detections)

    def by_frame(self) -> dict[int, list[tuple[int, Detection]]]:
        out: dict[int, list[tuple[int, Detection]]] = {}
        for i, det in enumerate(self.detections):
            out.setdefault(det.frame, []).append((i, det))
        return out

    def source_of(self, index: int) -> int | None:
        if self.provenance is None:
            return None
        return self.provenance[index]


ResultSet = dict[int, list[tuple[int, BoundingBox]]]  # id -> [(frame, box)]


def _split_row(line: str, path, lineno: int, min_fields: int) -> list[str]:
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) < min_fields:
        raise ParseError(
            f"expected at least {min_fields} comma-separated fields, got {len(fields)}",
            path,
            lineno,
        )
    return fields


def _parse_float(s: str, name: str, path, lineno: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise ParseError(f"unparseable {name} {s!r}", path, lineno) from None


def _parse_int(s: str, name: str, path, lineno: int) -> int:
    try:
        return int(float(s))
    except ValueError:
        raise ParseError(f"unparseable {name} {s!r}", path, lineno) from None


def parse_detections(path: str | Path) -> DetectionSet:
    """Read a MOT det file: frame,-1,x,y,w,h,conf,-1,-1,-1."""
    dets: list[Detection] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            f = _split_row(line, path, lineno, 7)
            frame = _parse_int(f[0], "frame", path, lineno)
            x = _parse_float(f[2], "x", path, lineno)
            y = _parse_float(f[3], "y", path, lineno)
            w = _parse_float(f[4], "w", path, lineno)
            h = _parse_float(f[5], "h", path, lineno)
            conf = _parse_float(f[6], "confidence", path, lineno)
            if frame < 1:
                raise ParseError(f"frame index must be >= 1, got {frame}", path, lineno)
            if w <= 0 or h <= 0:
                raise ParseError(f"box needs positive size, got w={w} h={h}", path, lineno)
            if not 0.0 <= conf <= 1.0:
                raise ParseError(f"confidence must be in [0,1], got {conf}", path, lineno)
            dets.append(Detection(frame=frame, box=BoundingBox(x, y, w, h), confidence=conf))
    dets.sort(key=lambda d: d.frame)
    return DetectionSet(detections=dets)


def parse_gt(path: str | Path) -> GtTrackSet:
    """Read a MOT gt file: frame,id,x,y,w,h,flag,class,visibility.

    Rows with flag 0 are kept but marked as excluded from evaluation.
    """
    gt = GtTrackSet()
    seen: set[tuple[int, int]] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            f = _split_row(line, path, lineno, 6)
            frame = _parse_int(f[0], "frame", path, lineno)
            tid = _parse_int(f[1], "id", path, lineno)
            x = _parse_float(f[2], "x", path, lineno)
            y = _parse_float(f[3], "y", path, lineno)
            w = _parse_float(f[4], "w", path, lineno)
            h = _parse_float(f[5], "h", path, lineno)
            flag = _parse_int(f[6], "flag", path, lineno) if len(f) > 6 else 1
            vis = _parse_float(f[8], "visibility", path, lineno) if len(f) > 8 else 1.0
            if frame < 1:
                raise ParseError(f"frame index must be >= 1, got {frame}", path, lineno)
            if w <= 0 or h <= 0:
                raise ParseError(f"box needs positive size, got w={w} h={h}", path, lineno)
            if (frame, tid) in seen:
                raise ParseError(f"duplicate (frame={frame}, id={tid}) row", path, lineno)
            seen.add((frame, tid))
            gt.add(
                tid,
                GtEntry(
                    frame=frame,
                    box=BoundingBox(x, y, w, h),
                    flag=flag,
                    visibility=vis,
                    occluded=vis < 0.5,
                ),
            )
    for entries in gt.tracks.values():
        entries.sort(key=lambda e: e.frame)
    return gt


def parse_results(path: str | Path) -> ResultSet:
    """Read a results file (same row layout as gt, columns past h ignored)."""
    out: ResultSet = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            f = _split_row(line, path, lineno, 6)
            frame = _parse_int(f[0], "frame", path, lineno)
            tid = _parse_int(f[1], "id", path, lineno)
            x = _parse_float(f[2], "x", path, lineno)
            y = _parse_float(f[3], "y", path, lineno)
            w = _parse_float(f[4], "w", path, lineno)
            h = _parse_float(f[5], "h", path, lineno)
            if w <= 0 or h <= 0:
                raise ParseError(f"box needs positive size, got w={w} h={h}", path, lineno)
            out.setdefault(tid, []).append((frame, BoundingBox(x, y, w, h)))
    for points in out.values():
        points.sort(key=lambda p: p[0])
    return out


def write_results(trajectories: list[Trajectory], path: str | Path) -> None:
    """Write trajectories as frame,id,x,y,w,h,1,-1,-1,-1 rows, 2-decimal coords."""
    rows = []
    for traj in trajectories:
        for frame, box in traj.points:
            rows.append((frame, traj.target_id, box))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w") as fh:
        for frame, tid, box in rows:
            fh.write(
                f"{frame},{tid},{box.x:.2f},{box.y:.2f},{box.w:.2f},{box.h:.2f},1,-1,-1,-1\n"
            )


def write_detections(dets: DetectionSet, path: str | Path) -> None:
    with open(path, "w") as fh:
        for d in dets.detections:
            fh.write(
                f"{d.frame},-1,{d.box.x:.2f},{d.box.y:.2f},{d.box.w:.2f},{d.box.h:.2f},"
                f"{d.confidence:.4f},-1,-1,-1\n"
            )


def write_gt(gt: GtTrackSet, path: str | Path) -> None:
    rows = []
    for tid in gt.track_ids():
        for e in gt.tracks[tid]:
            rows.append((e.frame, tid, e.box, e.flag, e.visibility))
    rows.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w") as fh:
        for frame, tid, box, flag, vis in rows:
            fh.write(
                f"{frame},{tid},{box.x:.2f},{box.y:.2f},{box.w:.2f},{box.h:.2f},"
                f"{flag},1,{vis:.2f}\n"
            )


def write_provenance(dets: DetectionSet, path: str | Path) -> None:
    """Sidecar channel: frame,det_index_in_frame,gt_id (-1 for false positives)."""
    with open(path, "w") as fh:
        fh.write("frame,det_index,gt_id\n")
        per_frame: dict[int, int] = {}
        for i, d in enumerate(dets.detections):
            idx = per_frame.get(d.frame, 0)
            per_frame[d.frame] = idx + 1
            src = dets.source_of(i)
            fh.write(f"{d.frame},{idx},{-1 if src is None else src}\n")


def read_provenance(dets: DetectionSet, path: str | Path) -> None:
    """Attach a provenance sidecar written by write_provenance."""
    table: dict[tuple[int, int], int | None] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if lineno == 1 and line.startswith("frame"):
                continue
            if not line.strip():
                continue
            f = _split_row(line, path, lineno, 3)
            frame = _parse_int(f[0], "frame", path, lineno)
            idx = _parse_int(f[1], "det_index", path, lineno)
            gid = _parse_int(f[2], "gt_id", path, lineno)
            table[(frame, idx)] = None if gid < 0 else gid
    provenance: list[int | None] = []
    per_frame: dict[int, int] = {}
    for d in dets.detections:
        idx = per_frame.get(d.frame, 0)
        per_frame[d.frame] = idx + 1
        provenance.append(table.get((d.frame, idx)))
    dets.provenance = provenance


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write an 8-bit binary (P5) PGM."""
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """Read an 8-bit binary (P5) PGM."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ParseError("not a binary PGM (missing P5 magic)", path, 1)
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens: list[bytes] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ParseError("malformed PGM header", path, 1) from None
    if maxval != 255:
        raise ParseError(f"only 8-bit PGM supported, maxval={maxval}", path, 1)
    body = data[pos : pos + w * h]
    if len(body) != w * h:
        raise ParseError(f"PGM body truncated: expected {w * h} bytes, got {len(body)}", path)
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Flat key=value config; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ParseError(f"expected key=value, got {stripped!r}", path, lineno)
            key, value = stripped.split("=", 1)
            out[key.strip()] = value.strip()
    return out
