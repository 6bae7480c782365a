"""On-disk formats: KCGH containers, PFM images and JSON-lines manifests.

KCGH layout (little-endian)::

    offset  size  field
    0       4     magic b"KCGH"
    4       4     version (u32, currently 1)
    8       4     width (u32)
    12      4     height (u32)
    16      4     channels (u32)
    20      1     kind (u8, see Kind)
    21      ...   payload, float32 planes, row-major, channel-major

A ``complex`` container holds two planes per channel, amplitude then phase.
Phase planes are stored normalized: ``(phase + pi) / (2 pi)``, so pi maps to
1.0 and values just above -pi map to just above 0.0.
"""

from __future__ import annotations

import contextlib
import json
import os
import struct
import tempfile
import threading
import warnings
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .fields import ComplexField, OpticalConfig, RgbdFrame, phase_of

MAGIC = b"KCGH"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIB")
MANIFEST_NAME = "manifest.jsonl"


class FormatError(ValueError):
    """A file is malformed, truncated or of an unknown version."""


class ValidationError(ValueError):
    """Data violates the value range of its container kind."""


class ProvenanceWarning(UserWarning):
    pass


class Kind(IntEnum):
    INTENSITY = 0
    DEPTH = 1
    AMPLITUDE = 2
    PHASE = 3
    COMPLEX = 4
    MASK = 5


_UNIT_RANGE = {Kind.INTENSITY, Kind.DEPTH, Kind.PHASE, Kind.MASK}


@dataclass
class Container:
    kind: Kind
    planes: np.ndarray  # float32, (n_planes, height, width)

    @property
    def channels(self) -> int:
        return self.planes.shape[0] // (2 if self.kind is Kind.COMPLEX else 1)

    def to_complex(self) -> np.ndarray:
        """Complex channels ``(channels, height, width)`` of a complex container."""
        if self.kind is not Kind.COMPLEX:
            raise FormatError(f"container holds {self.kind.name}, not COMPLEX")
        amp = self.planes[0::2].astype(np.float64)
        phase = denormalize_phase(self.planes[1::2].astype(np.float64))
        return amp * np.exp(1j * phase)


def normalize_phase(phase) -> np.ndarray:
    return (np.asarray(phase, np.float64) + np.pi) / (2 * np.pi)


def denormalize_phase(stored) -> np.ndarray:
    return np.asarray(stored, np.float64) * 2 * np.pi - np.pi


def complex_planes(data) -> np.ndarray:
    """Interleaved float32 amplitude/phase planes for complex channels."""
    data = np.asarray(data)
    if data.ndim == 2:
        data = data[None]
    planes = []
    for ch in data:
        planes.append(np.abs(ch))
        planes.append(normalize_phase(phase_of(ch)))
    return np.stack(planes).astype(np.float32)


@contextlib.contextmanager
def atomic_write(path, mode="wb"):
    """Write to a sibling temp file and rename it over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_container(path, data, kind: Kind | str) -> None:
    """Write ``data`` as a KCGH container.

    ``data`` is a 2D grid or a ``(channels, height, width)`` stack; complex
    kinds take complex arrays, ``ComplexField`` objects or a list of them.
    """
    kind = Kind[kind.upper()] if isinstance(kind, str) else Kind(kind)
    if isinstance(data, ComplexField):
        data = data.data
    elif isinstance(data, (list, tuple)) and data and isinstance(data[0], ComplexField):
        data = np.stack([f.data for f in data])
    arr = np.asarray(data)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValidationError(f"expected 2D or 3D data, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("refusing to store NaN or Inf")
    if kind is Kind.COMPLEX:
        planes = complex_planes(arr)
        channels = arr.shape[0]
    else:
        if np.iscomplexobj(arr):
            raise ValidationError(f"{kind.name} container needs real data")
        planes = arr.astype(np.float32)
        channels = arr.shape[0]
        if kind in _UNIT_RANGE and (planes.min() < 0 or planes.max() > 1):
            raise ValidationError(f"{kind.name} values must lie within [0, 1]")
    _, height, width = planes.shape
    header = _HEADER.pack(MAGIC, VERSION, width, height, channels, int(kind))
    with atomic_write(path) as fh:
        fh.write(header)
        fh.write(planes.astype("<f4").tobytes())


def read_container(path) -> Container:
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, width, height, channels, kind = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    try:
        kind = Kind(kind)
    except ValueError:
        raise FormatError(f"{path}: unknown kind tag {kind}") from None
    n_planes = channels * (2 if kind is Kind.COMPLEX else 1)
    expected = n_planes * width * height * 4
    payload = blob[_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    planes = np.frombuffer(payload, dtype="<f4").reshape(n_planes, height, width)
    return Container(kind, planes.astype(np.float32))


def write_pfm(path, image) -> None:
    """Little-endian Portable FloatMap; 2D arrays are gray, (H, W, 3) color."""
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValidationError(f"PFM needs (H, W) or (H, W, 3), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("refusing to store NaN or Inf")
    h, w = arr.shape[:2]
    header = tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n"
    with atomic_write(path) as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes())


def _read_token_line(blob: bytes, pos: int) -> tuple[bytes, int]:
    end = blob.find(b"\n", pos)
    if end < 0:
        raise FormatError("PFM header truncated")
    return blob[pos:end].strip(), end + 1


def read_pfm(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    tag, pos = _read_token_line(blob, 0)
    if tag not in (b"PF", b"Pf"):
        raise FormatError(f"{path}: bad PFM tag {tag!r}")
    dims, pos = _read_token_line(blob, pos)
    scale, pos = _read_token_line(blob, pos)
    try:
        w, h = (int(v) for v in dims.split())
        scale = float(scale)
    except ValueError:
        raise FormatError(f"{path}: malformed PFM header") from None
    if w < 1 or h < 1 or scale == 0:
        raise FormatError(f"{path}: malformed PFM header")
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(blob) - pos != count * 4:
        raise FormatError(f"{path}: PFM payload size mismatch")
    data = np.frombuffer(blob, dtype=dtype, count=count, offset=pos).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    # rows are stored bottom to top
    return data.reshape(shape)[::-1].copy()


_manifest_lock = threading.Lock()


def _manifest_path(directory) -> Path:
    return Path(directory) / MANIFEST_NAME


def write_manifest(directory, records: list[dict]) -> None:
    """Append records to ``directory/manifest.jsonl``.

    Each record needs a unique ``sample_id``; duplicates within the batch or
    against existing lines raise ``ValueError`` and nothing is written.
    """
    path = _manifest_path(directory)
    with _manifest_lock:
        existing = read_manifest(directory) if path.exists() else []
        seen = {r["sample_id"] for r in existing}
        for rec in records:
            if "sample_id" not in rec:
                raise ValueError("manifest record without sample_id")
            if rec["sample_id"] in seen:
                raise ValueError(f"duplicate sample id {rec['sample_id']!r}")
            seen.add(rec["sample_id"])
        lines = [json.dumps(r, sort_keys=True, allow_nan=False) for r in existing + list(records)]
        with atomic_write(path, "w") as fh:
            fh.write("".join(line + "\n" for line in lines))


def read_manifest(directory, config_hash: str | None = None) -> list[dict]:
    """Records of a manifest; warns when their config hash differs from ``config_hash``."""
    path = _manifest_path(directory)
    if not path.exists():
        raise FileNotFoundError(path)
    records = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{n}: {exc}") from None
    if config_hash is not None:
        stale = [r["sample_id"] for r in records if r.get("config_hash") not in (None, config_hash)]
        if stale:
            warnings.warn(
                f"{len(stale)} manifest record(s) were produced under a different config: {stale[:5]}",
                ProvenanceWarning,
                stacklevel=2,
            )
    return records


def save_frame(directory, sample_id: str, frame: RgbdFrame) -> dict:
    """Write a frame as three containers; returns their file names."""
    directory = Path(directory)
    files = {
        "intensity": f"{sample_id}_rgb.kcgh",
        "depth": f"{sample_id}_depth.kcgh",
        "validity": f"{sample_id}_valid.kcgh",
    }
    write_container(directory / files["intensity"], frame.intensity, Kind.INTENSITY)
    write_container(directory / files["depth"], frame.depth, Kind.DEPTH)
    write_container(directory / files["validity"], frame.validity.astype(np.float32), Kind.MASK)
    return files


def load_frame(directory, files: dict, config: OpticalConfig) -> RgbdFrame:
    directory = Path(directory)
    intensity = read_container(directory / files["intensity"]).planes
    depth = read_container(directory / files["depth"]).planes[0]
    validity = read_container(directory / files["validity"]).planes[0] > 0.5
    return RgbdFrame(intensity, depth, validity, config)


def save_hologram(path, holograms) -> None:
    write_container(path, holograms, Kind.COMPLEX)


def load_hologram(path) -> list[ComplexField]:
    return [ComplexField(ch) for ch in read_container(path).to_complex()]
