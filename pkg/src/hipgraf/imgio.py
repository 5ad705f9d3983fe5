"""Mask decoding, RLE serialization and manifest ingestion.

All geometry downstream assumes the lateral side of the hip is on the image
left.  Right-laterality scenes are mirrored horizontally while loading.
"""

from __future__ import annotations

import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterator, Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    DecodeError,
    DimensionError,
    RLEFormatError,
    SchemaError,
    UniquenessError,
)

STRUCTURE_NAMES = ("flat_ilium", "lower_limb", "labrum", "co_junction")
STRUCTURE_KEYS = ("s1", "s2", "s3", "s4")
LANDMARK_NAMES = ("p1_bony_rim", "p2_lower_limb", "p3_labrum_mid")
LATERALITIES = ("left", "right")
SOURCES = ("mask_derived", "predicted", "fused")

DEFAULT_THRESHOLD = 127


class BinaryMask:
    """Immutable boolean raster, indexed ``data[y, x]``."""

    __slots__ = ("_data",)

    def __init__(self, data: Any) -> None:
        arr = np.array(data, dtype=bool, copy=True)
        if arr.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"mask has zero dimension: {arr.shape}")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def area(self) -> int:
        return int(self._data.sum())

    @property
    def is_empty(self) -> bool:
        return not self._data.any()

    def mirrored(self) -> "BinaryMask":
        return BinaryMask(self._data[:, ::-1])

    def shifted(self, dx: int, dy: int) -> "BinaryMask":
        """Translate by an integer offset; pixels leaving the canvas are lost."""
        out = np.zeros_like(self._data)
        h, w = self._data.shape
        src = self._data[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
        out[max(0, dy):max(0, dy) + src.shape[0], max(0, dx):max(0, dx) + src.shape[1]] = src
        return BinaryMask(out)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._data, other._data))

    def __hash__(self) -> int:
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, area={self.area})"


@dataclass(frozen=True)
class StructureSet:
    flat_ilium: Optional[BinaryMask] = None
    lower_limb: Optional[BinaryMask] = None
    labrum: Optional[BinaryMask] = None
    co_junction: Optional[BinaryMask] = None
    laterality: str = "left"

    def __post_init__(self) -> None:
        if self.laterality not in LATERALITIES:
            raise ValueError(f"laterality must be one of {LATERALITIES}, got {self.laterality!r}")
        shapes = {m.shape for m in self.masks().values()}
        if len(shapes) > 1:
            raise DimensionError(f"structure masks disagree on size: {sorted(shapes)}")

    def get(self, name: str) -> Optional[BinaryMask]:
        return getattr(self, name)

    def masks(self) -> dict[str, BinaryMask]:
        """Present masks keyed by structure name, in canonical order."""
        out = {}
        for name in STRUCTURE_NAMES:
            m = getattr(self, name)
            if m is not None:
                out[name] = m
        return out

    @property
    def shape(self) -> Optional[tuple[int, int]]:
        for m in self.masks().values():
            return m.shape
        return None

    def mirrored(self) -> "StructureSet":
        kw = {name: m.mirrored() for name, m in self.masks().items()}
        return replace(self, **kw)

    def shifted(self, dx: int, dy: int) -> "StructureSet":
        kw = {name: m.shifted(dx, dy) for name, m in self.masks().items()}
        return replace(self, **kw)


@dataclass(frozen=True)
class LandmarkPoint:
    x: float
    y: float
    source: str = "predicted"

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"unknown landmark source {self.source!r}")

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)

    def mirrored(self, width: int) -> "LandmarkPoint":
        return replace(self, x=width - 1 - self.x)

    def shifted(self, dx: float, dy: float) -> "LandmarkPoint":
        return replace(self, x=self.x + dx, y=self.y + dy)


@dataclass(frozen=True)
class LandmarkSet:
    """Bony rim (P1), lower limb point (P2), labrum midpoint (P3).

    Any member may be ``None`` for a partial set.
    """

    p1_bony_rim: Optional[LandmarkPoint] = None
    p2_lower_limb: Optional[LandmarkPoint] = None
    p3_labrum_mid: Optional[LandmarkPoint] = None

    def get(self, name: str) -> Optional[LandmarkPoint]:
        return getattr(self, name)

    def items(self) -> Iterator[tuple[str, Optional[LandmarkPoint]]]:
        for name in LANDMARK_NAMES:
            yield name, getattr(self, name)

    @property
    def is_complete(self) -> bool:
        return all(p is not None for _, p in self.items())

    def _map(self, fn: Callable[[LandmarkPoint], LandmarkPoint]) -> "LandmarkSet":
        return LandmarkSet(**{n: (fn(p) if p is not None else None) for n, p in self.items()})

    def mirrored(self, width: int) -> "LandmarkSet":
        return self._map(lambda p: p.mirrored(width))

    def shifted(self, dx: float, dy: float) -> "LandmarkSet":
        return self._map(lambda p: p.shifted(dx, dy))


@dataclass(frozen=True)
class GroundTruth:
    structures: StructureSet
    landmarks: LandmarkSet
    alpha: Optional[float] = None
    beta: Optional[float] = None


@dataclass(frozen=True)
class SceneRecord:
    scene_id: str
    width: int
    height: int
    structures: StructureSet
    predicted_landmarks: Optional[LandmarkSet] = None
    ground_truth: Optional[GroundTruth] = None
    # Optional per-scene loss inputs: "maskrcnn_loss", "lm_labels", "lm_probs".
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def laterality(self) -> str:
        return self.structures.laterality


# -- raster masks ------------------------------------------------------------

def _to_uint8(img: Image.Image) -> np.ndarray:
    if img.mode in ("I;16", "I;16B", "I;16L", "I;16N"):
        arr = np.asarray(img, dtype=np.float64)
        return np.rint(arr / 257.0).astype(np.uint8)
    if img.mode == "I":
        arr = np.asarray(img, dtype=np.float64)
        # 32-bit containers are assumed to carry 16-bit data, as written by Pillow.
        scale = 257.0 if arr.max(initial=0) > 255 else 1.0
        return np.clip(np.rint(arr / scale), 0, 255).astype(np.uint8)
    if img.mode == "F":
        arr = np.asarray(img, dtype=np.float64)
        return np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img, dtype=np.uint8)


def decode_mask(data: bytes, threshold: int = DEFAULT_THRESHOLD) -> BinaryMask:
    """Decode an encoded raster; a pixel is foreground iff intensity > threshold."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {threshold}")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            arr = _to_uint8(img)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(f"decoded image has unusable shape {arr.shape}")
    return BinaryMask(arr > threshold)


def encode_mask_png(mask: BinaryMask) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(mask.data.astype(np.uint8) * 255, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def encode_rle(mask: BinaryMask) -> str:
    """Canonical run-length string: background first, no empty runs after the first."""
    flat = mask.data.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return " ".join(str(r) for r in runs)


def decode_rle(text: str, width: int, height: int) -> BinaryMask:
    if width < 1 or height < 1:
        raise DimensionError(f"invalid RLE dimensions {width}x{height}")
    try:
        runs = [int(tok) for tok in text.split()]
    except ValueError as exc:
        raise RLEFormatError(f"non-integer run in RLE: {exc}") from exc
    if not runs:
        raise RLEFormatError("empty RLE string")
    if any(r < 0 for r in runs):
        raise RLEFormatError("negative run length")
    total = sum(runs)
    if total != width * height:
        raise RLEFormatError(f"runs sum to {total}, expected {width * height}")
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return BinaryMask(flat.reshape(height, width))


# -- manifest ----------------------------------------------------------------

def _require(obj: dict, key: str, line: int) -> Any:
    if key not in obj or obj[key] is None:
        raise SchemaError(line, key, "missing required field")
    return obj[key]


def _parse_mask(spec: Any, key: str, line: int, width: int, height: int,
                base: Path) -> BinaryMask:
    if not isinstance(spec, dict):
        raise SchemaError(line, key, "mask must be an object with 'png' or 'rle'")
    if "png" in spec:
        path = Path(spec["png"])
        if not path.is_absolute():
            path = base / path
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise SchemaError(line, key, f"cannot read {path}: {exc}") from exc
        mask = decode_mask(raw, int(spec.get("threshold", DEFAULT_THRESHOLD)))
    elif "rle" in spec:
        mask = decode_rle(str(spec["rle"]), width, height)
    else:
        raise SchemaError(line, key, "mask must carry 'png' or 'rle'")
    if mask.shape != (height, width):
        raise SchemaError(line, key, f"mask is {mask.width}x{mask.height}, "
                                     f"record says {width}x{height}")
    return mask


def _parse_point(value: Any, key: str, line: int, width: int, height: int,
                 source: str) -> LandmarkPoint:
    try:
        x, y = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise SchemaError(line, key, "point must be [x, y]") from exc
    if not (0 <= x < width and 0 <= y < height):
        raise SchemaError(line, key, f"point ({x}, {y}) outside {width}x{height}")
    return LandmarkPoint(x, y, source)


def _parse_structures(obj: dict, line: int, width: int, height: int,
                      laterality: str, base: Path, prefix: str = "") -> StructureSet:
    kw = {}
    for name, key in zip(STRUCTURE_NAMES, STRUCTURE_KEYS):
        if obj.get(key) is not None:
            kw[name] = _parse_mask(obj[key], prefix + key, line, width, height, base)
    return StructureSet(laterality=laterality, **kw)


def _parse_landmarks(obj: dict, keys: tuple[str, ...], line: int, width: int,
                     height: int, source: str, prefix: str = "") -> Optional[LandmarkSet]:
    kw = {}
    for name, key in zip(LANDMARK_NAMES, keys):
        if obj.get(key) is not None:
            kw[name] = _parse_point(obj[key], prefix + key, line, width, height, source)
    return LandmarkSet(**kw) if kw else None


def parse_record(obj: dict, line: int, base: Path) -> SceneRecord:
    """Build a canonical (left-lateral) SceneRecord from one manifest object."""
    if not isinstance(obj, dict):
        raise SchemaError(line, "<record>", "record must be a JSON object")
    scene_id = str(_require(obj, "scene_id", line))
    try:
        width = int(_require(obj, "width", line))
        height = int(_require(obj, "height", line))
    except (TypeError, ValueError) as exc:
        raise SchemaError(line, "width/height", "must be integers") from exc
    if width < 1 or height < 1:
        raise SchemaError(line, "width/height", "must be positive")
    laterality = _require(obj, "laterality", line)
    if laterality not in LATERALITIES:
        raise SchemaError(line, "laterality", f"must be one of {LATERALITIES}")

    structures = _parse_structures(obj, line, width, height, laterality, base)
    predicted = _parse_landmarks(obj, ("pk1", "pk2", "pk3"), line, width, height, "predicted")

    truth = None
    if obj.get("gt") is not None:
        gt = obj["gt"]
        if not isinstance(gt, dict):
            raise SchemaError(line, "gt", "must be an object")
        gt_structs = _parse_structures(gt, line, width, height, laterality, base, "gt.")
        gt_marks = _parse_landmarks(gt, ("p1", "p2", "p3"), line, width, height,
                                    "predicted", "gt.") or LandmarkSet()
        angles = {}
        for key in ("alpha", "beta"):
            if gt.get(key) is not None:
                val = float(gt[key])
                if not 0.0 < val < 180.0:
                    raise SchemaError(line, f"gt.{key}", "angle must lie in (0, 180)")
                angles[key] = val
        truth = GroundTruth(gt_structs, gt_marks, **angles)

    extras = {k: obj[k] for k in ("maskrcnn_loss", "lm_labels", "lm_probs") if k in obj}

    record = SceneRecord(scene_id, width, height, structures, predicted, truth, extras)
    if laterality == "right":
        record = mirror_record(record)
    return record


def mirror_record(record: SceneRecord) -> SceneRecord:
    """Horizontal mirror of every mask and landmark; laterality label is kept.

    Applying it twice returns the original record.
    """
    w = record.width
    pred = record.predicted_landmarks.mirrored(w) if record.predicted_landmarks else None
    truth = None
    if record.ground_truth is not None:
        gt = record.ground_truth
        truth = replace(gt, structures=gt.structures.mirrored(),
                        landmarks=gt.landmarks.mirrored(w))
    return replace(record, structures=record.structures.mirrored(),
                   predicted_landmarks=pred, ground_truth=truth)


def load_manifest(path: str | Path, workers: int = 1) -> list[SceneRecord]:
    """Read a JSON-lines manifest.  Output order equals line order."""
    path = Path(path)
    base = path.parent
    entries = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(lineno, "<json>", str(exc)) from exc
            entries.append((lineno, obj))

    seen: dict[str, int] = {}
    for lineno, obj in entries:
        sid = obj.get("scene_id") if isinstance(obj, dict) else None
        if sid is None:
            continue
        if sid in seen:
            raise UniquenessError(f"scene_id {sid!r} repeated on lines {seen[sid]} and {lineno}")
        seen[sid] = lineno

    def parse(entry: tuple[int, dict]) -> SceneRecord:
        return parse_record(entry[1], entry[0], base)

    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(parse, entries))
    return [parse(e) for e in entries]


# -- manifest writing ----------------------------------------------------------

def _point_json(p: Optional[LandmarkPoint]) -> Optional[list[float]]:
    return None if p is None else [float(p.x), float(p.y)]


def record_to_json(record: SceneRecord, mask_ref: Callable[[str, BinaryMask], dict]) -> dict:
    """Serialize a record in its stored (canonical) orientation.

    ``mask_ref(key, mask)`` returns the ``{"png": ...}`` or ``{"rle": ...}``
    reference for one mask; ``key`` is e.g. ``"s1"`` or ``"gt.s1"``.
    """
    obj: dict[str, Any] = {
        "scene_id": record.scene_id,
        "width": record.width,
        "height": record.height,
        "laterality": "left",
    }
    for name, key in zip(STRUCTURE_NAMES, STRUCTURE_KEYS):
        m = record.structures.get(name)
        if m is not None:
            obj[key] = mask_ref(key, m)
    if record.predicted_landmarks is not None:
        for (_, p), key in zip(record.predicted_landmarks.items(), ("pk1", "pk2", "pk3")):
            if p is not None:
                obj[key] = _point_json(p)
    if record.ground_truth is not None:
        gt = record.ground_truth
        g: dict[str, Any] = {}
        for name, key in zip(STRUCTURE_NAMES, STRUCTURE_KEYS):
            m = gt.structures.get(name)
            if m is not None:
                g[key] = mask_ref("gt." + key, m)
        for (_, p), key in zip(gt.landmarks.items(), ("p1", "p2", "p3")):
            if p is not None:
                g[key] = _point_json(p)
        if gt.alpha is not None:
            g["alpha"] = float(gt.alpha)
        if gt.beta is not None:
            g["beta"] = float(gt.beta)
        obj["gt"] = g
    obj.update(record.extras)
    return obj


def write_manifest(records: list[SceneRecord], path: str | Path,
                   mask_format: str = "png") -> Path:
    """Write records (and their PNG masks, if requested) next to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mask_dir = path.parent / "masks"
    if mask_format not in ("png", "rle"):
        raise ValueError(f"mask_format must be 'png' or 'rle', got {mask_format!r}")

    lines = []
    for rec in records:
        def ref(key: str, mask: BinaryMask, _sid: str = rec.scene_id) -> dict:
            if mask_format == "rle":
                return {"rle": encode_rle(mask)}
            mask_dir.mkdir(exist_ok=True)
            name = f"{_sid}_{key.replace('.', '_')}.png"
            (mask_dir / name).write_bytes(encode_mask_png(mask))
            return {"png": f"masks/{name}"}

        lines.append(json.dumps(record_to_json(rec, ref), sort_keys=True))
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path
