"""Domain types, dataset ingestion, and deterministic randomness.

Datasets are directory trees of pre-cropped pedestrian frames::

    <root>/cam1/<person_id>/<frame_index>.png
    <root>/cam2/<person_id>/<frame_index>.png

Frame files are ordered by the numeric value of their stem, not by
directory listing order, so loading is platform-independent.  A manifest
file can override the layout for nonconforming trees (one line per
sequence: ``camera,person,path``).
"""

from __future__ import annotations

import hashlib
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, MalformedSequence, NotFound

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}

_CAMERA_DIR = re.compile(r"^cam(\d+)$")


@dataclass(frozen=True)
class Frame:
    """A single RGB frame, stored as an immutable (H, W, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame must be at least 1x1")
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def luma(self) -> np.ndarray:
        """Rec.601 luma (0.299 R + 0.587 G + 0.114 B) as float64."""
        return self.pixels @ np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FrameSequence:
    """An ordered walking sequence of one person under one camera."""

    person_id: str
    camera_id: int
    frames: tuple[Frame, ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        if len(frames) < 2:
            raise MalformedSequence(self.person_id, self.camera_id,
                                    "needs at least 2 frames")
        w, h = frames[0].width, frames[0].height
        for f in frames[1:]:
            if f.width != w or f.height != h:
                raise MalformedSequence(self.person_id, self.camera_id,
                                        "frames differ in size")
        object.__setattr__(self, "frames", frames)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Dataset:
    """All sequences of a two-camera capture, ordered (camera, person)."""

    sequences: tuple[FrameSequence, ...]
    identities: frozenset[str] = field(default=None)

    def __post_init__(self):
        seqs = tuple(self.sequences)
        object.__setattr__(self, "sequences", seqs)
        object.__setattr__(self, "identities",
                           frozenset(s.person_id for s in seqs))

    def cameras(self) -> list[int]:
        return sorted({s.camera_id for s in self.sequences})

    def by_identity(self, camera_id: int) -> dict[str, list[FrameSequence]]:
        out: dict[str, list[FrameSequence]] = {}
        for s in self.sequences:
            if s.camera_id == camera_id:
                out.setdefault(s.person_id, []).append(s)
        return out


@dataclass(frozen=True)
class RngHandle:
    """Seeded handle for all randomness in the pipeline.

    Draws come from numpy's PCG64 generator, which is pinned here because
    its stream is identical across platforms and numpy releases for a
    fixed seed.  ``generator()`` returns a fresh generator each call, so
    two calls with the same handle replay the same stream.
    """

    seed: int

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & (2**64 - 1))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *parts) -> "RngHandle":
        """Derive a sub-handle deterministically from labelled parts.

        Uses BLAKE2b over the parent seed and the stringified parts, so
        the derivation does not depend on Python's per-process hashing.
        """
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<Q", self.seed))
        for part in parts:
            h.update(str(part).encode("utf-8"))
            h.update(b"\x1f")
        return RngHandle(int.from_bytes(h.digest(), "little"))


def _decode_image(path: Path) -> Frame:
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            return Frame(np.asarray(rgb, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(path, str(exc)) from None


def _frame_sort_key(path: Path):
    # Numeric stems sort by value; anything else falls back behind them.
    try:
        return (0, int(path.stem), path.name)
    except ValueError:
        return (1, 0, path.name)


def _load_sequence(person: str, camera: int, seq_dir: Path) -> FrameSequence:
    files = sorted((p for p in seq_dir.iterdir()
                    if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS),
                   key=_frame_sort_key)
    if len(files) < 2:
        raise MalformedSequence(person, camera,
                                f"{len(files)} frame file(s) in {seq_dir}")
    frames = tuple(_decode_image(p) for p in files)
    return FrameSequence(person_id=person, camera_id=camera, frames=frames)


def _parse_camera_label(label: str) -> int:
    m = _CAMERA_DIR.match(label)
    if m:
        return int(m.group(1))
    try:
        return int(label)
    except ValueError:
        raise NotFound(f"unrecognized camera label {label!r}") from None


def load_dataset(root, manifest=None) -> Dataset:
    """Load a dataset from a directory tree (or an explicit manifest).

    Sequences are returned ordered by (camera, person, frame index) and
    two loads of the same tree produce identical datasets.

    Raises:
        NotFound: missing root, or no camera directories found.
        MalformedSequence: a sequence with fewer than 2 frames.
        DecodeError: an image file that cannot be decoded.
    """
    root = Path(root)
    if not root.is_dir():
        raise NotFound(str(root))

    entries: list[tuple[int, str, Path]] = []
    if manifest is not None:
        for lineno, line in enumerate(Path(manifest).read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise NotFound(f"manifest line {lineno}: expected camera,person,path")
            cam, person, rel = parts
            seq_dir = Path(rel)
            if not seq_dir.is_absolute():
                seq_dir = root / seq_dir
            entries.append((_parse_camera_label(cam), person, seq_dir))
    else:
        for cam_dir in root.iterdir():
            m = _CAMERA_DIR.match(cam_dir.name)
            if not (cam_dir.is_dir() and m):
                continue
            camera = int(m.group(1))
            for person_dir in cam_dir.iterdir():
                if person_dir.is_dir():
                    entries.append((camera, person_dir.name, person_dir))

    if not entries:
        raise NotFound(f"no sequences under {root}")

    entries.sort(key=lambda e: (e[0], e[1]))
    sequences = []
    for camera, person, seq_dir in entries:
        if not seq_dir.is_dir():
            raise NotFound(str(seq_dir))
        sequences.append(_load_sequence(person, camera, seq_dir))
    return Dataset(sequences=tuple(sequences))


def rescale_frame(frame: Frame, width: int, height: int) -> Frame:
    """Bilinear rescale to exactly (width, height).

    Sampling uses the half-pixel-center convention
    ``src = (dst + 0.5) * (in / out) - 0.5`` with edge clamping, so a
    same-size rescale is pixel-identical, which also makes the operation
    idempotent at a fixed size.
    """
    if width < 1 or height < 1:
        raise ValueError("target size must be at least 1x1")
    if width == frame.width and height == frame.height:
        return frame

    src = frame.pixels.astype(np.float64)
    in_h, in_w = src.shape[:2]

    sx = (np.arange(width) + 0.5) * in_w / width - 0.5
    sy = (np.arange(height) + 0.5) * in_h / height - 0.5
    sx = np.clip(sx, 0.0, in_w - 1.0)
    sy = np.clip(sy, 0.0, in_h - 1.0)

    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = (sx - x0)[np.newaxis, :, np.newaxis]
    fy = (sy - y0)[:, np.newaxis, np.newaxis]

    top = src[y0][:, x0] * (1 - fx) + src[y0][:, x1] * fx
    bot = src[y1][:, x0] * (1 - fx) + src[y1][:, x1] * fx
    out = top * (1 - fy) + bot * fy

    out = np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return Frame(out)
