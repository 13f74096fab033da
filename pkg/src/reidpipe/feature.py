"""Per-frame appearance features, external feature import, and pooling.

Frame features come from a pluggable extractor.  The built-in one is a
stripe histogram descriptor (color + gradient texture); deep per-frame
features trained elsewhere can be imported from FVEC files instead.
Per-cycle descriptors are produced by element-wise pooling of the frame
vectors sampled from each walking cycle.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .core import Frame, FrameSequence, RngHandle, rescale_frame
from .cycle import (DEFAULT_KEEP, SamplingStrategy, compute_fep, detect_cycles,
                    regulate_fep, sample_frames)
from .errors import DimMismatch, EmptyPool, FormatError, NoCycleFound

POOLING_MODES = ("max", "average", "first_frame")

FVEC_MAGIC = b"FVEC1\x00"

# Built-in extractor geometry: 6 stripes x (8x8 hue-sat + 16 gradient bins)
STRIPES = 6
HS_BINS = 8
GRAD_BINS = 16
STRIPE_DIM = HS_BINS * HS_BINS + GRAD_BINS
CANON_WIDTH, CANON_HEIGHT = 64, 128


@dataclass(frozen=True)
class CycleDescriptor:
    """Pooled feature vector for one walking cycle of one sequence."""

    values: np.ndarray
    source: tuple[str, int, int]  # (person_id, camera_id, cycle ordinal)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DimMismatch(f"descriptor must be 1-D, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("descriptor entries must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return len(self.values)


class Extractor:
    """Stateless per-frame feature extractor.

    Subclasses set ``dim`` and implement either ``extract`` (pixel-based
    extractors) or ``vectors`` (index-keyed sources such as imported
    feature files).  The same frame must always map to the same vector.
    """

    dim: int

    def extract(self, frame: Frame) -> np.ndarray:
        raise NotImplementedError

    def vectors(self, seq: FrameSequence, indices) -> np.ndarray:
        return np.stack([self.extract(seq.frames[i]) for i in indices])


class HandcraftedExtractor(Extractor):
    """Stripe histograms of color and gradient orientation.

    The frame is rescaled to 64x128 and cut into 6 equal-height stripes.
    Each stripe contributes an 8x8 joint hue-saturation histogram (equal
    pixel weights) and a 16-bin unsigned gradient-orientation histogram
    (Sobel on luma, magnitude-weighted), L2-normalized per stripe.
    """

    dim = STRIPES * STRIPE_DIM

    def extract(self, frame: Frame) -> np.ndarray:
        frame = rescale_frame(frame, CANON_WIDTH, CANON_HEIGHT)
        rgb = frame.pixels.astype(np.float32) / 255.0
        hsv = cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)  # H in [0,360), S,V in [0,1]
        hue_bin = np.minimum((hsv[:, :, 0] / 360.0 * HS_BINS).astype(int),
                             HS_BINS - 1)
        sat_bin = np.minimum((hsv[:, :, 1] * HS_BINS).astype(int), HS_BINS - 1)
        hs_index = hue_bin * HS_BINS + sat_bin

        # Unit-range luma keeps gradient magnitudes on the same footing as
        # the color counts inside the joint stripe normalization.
        luma = frame.luma() / 255.0
        gx = cv2.Sobel(luma, cv2.CV_64F, 1, 0, ksize=3)
        gy = cv2.Sobel(luma, cv2.CV_64F, 0, 1, ksize=3)
        magnitude = np.hypot(gx, gy)
        orient = np.degrees(np.arctan2(gy, gx)) % 180.0
        orient_bin = np.minimum((orient / 180.0 * GRAD_BINS).astype(int),
                                GRAD_BINS - 1)

        h = frame.height
        bounds = [(i * h) // STRIPES for i in range(STRIPES + 1)]
        parts = []
        for i in range(STRIPES):
            rows = slice(bounds[i], bounds[i + 1])
            hs = np.bincount(hs_index[rows].ravel(),
                             minlength=HS_BINS * HS_BINS).astype(np.float64)
            grad = np.bincount(orient_bin[rows].ravel(),
                               weights=magnitude[rows].ravel(),
                               minlength=GRAD_BINS)
            stripe = np.concatenate([hs, grad])
            norm = np.linalg.norm(stripe)
            if norm > 0:
                stripe /= norm
            parts.append(stripe)
        return np.concatenate(parts)


_DEFAULT_EXTRACTOR = HandcraftedExtractor()


def extract_handcrafted(frame: Frame) -> np.ndarray:
    """Built-in 480-dim stripe descriptor of a single frame."""
    return _DEFAULT_EXTRACTOR.extract(frame)


class ExternalFeatures(Extractor):
    """Extractor backed by imported per-frame vectors.

    Lookups are keyed by (person_id, camera_id, frame_index), so this
    extractor only works inside sequence-aware calls, not on bare frames.
    """

    def __init__(self, table: dict[tuple[str, int, int], np.ndarray]):
        if not table:
            raise FormatError("empty feature table")
        self.table = table
        self.dim = len(next(iter(table.values())))

    def extract(self, frame: Frame) -> np.ndarray:
        raise FormatError("external features are keyed by frame index, "
                          "not pixel content")

    def vectors(self, seq: FrameSequence, indices) -> np.ndarray:
        rows = []
        for i in indices:
            key = (seq.person_id, seq.camera_id, int(i))
            if key not in self.table:
                raise FormatError(f"no imported feature for {key}")
            rows.append(self.table[key])
        return np.stack(rows).astype(np.float64)


def _index_path(path) -> Path:
    return Path(str(path) + ".idx")


def save_features(path, vectors: np.ndarray, keys, index_path=None) -> None:
    """Write per-frame vectors in FVEC format plus the sidecar index.

    FVEC layout: magic ``FVEC1\\0``, uint32-LE count, uint32-LE dim, then
    count x dim float32-LE values row-major.  The index file holds one
    ``person_id,camera_id,frame_index`` line per row.
    """
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise DimMismatch(f"expected (count, dim) array, got {vectors.shape}")
    if len(keys) != len(vectors):
        raise DimMismatch(f"{len(keys)} keys for {len(vectors)} rows")
    count, dim = vectors.shape
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(FVEC_MAGIC)
        fh.write(struct.pack("<II", count, dim))
        fh.write(vectors.astype("<f4").tobytes())
    lines = [f"{p},{c},{i}" for p, c, i in keys]
    (Path(index_path) if index_path else _index_path(path)).write_text(
        "\n".join(lines) + ("\n" if lines else ""))


def load_external_features(path, index_path=None, expected_dim=None):
    """Read an FVEC file into a (person, camera, frame) -> vector map.

    Raises FormatError on bad magic, truncation, or an index that does
    not line up with the payload, and DimMismatch when ``expected_dim``
    is given and differs from the stored dimension.
    """
    path = Path(path)
    data = path.read_bytes()
    header = len(FVEC_MAGIC) + 8
    if len(data) < header or data[:len(FVEC_MAGIC)] != FVEC_MAGIC:
        raise FormatError(f"{path}: bad magic or truncated header")
    count, dim = struct.unpack_from("<II", data, len(FVEC_MAGIC))
    expected = header + count * dim * 4
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    if expected_dim is not None and dim != expected_dim:
        raise DimMismatch(f"{path}: dim {dim}, expected {expected_dim}")
    vectors = np.frombuffer(data, dtype="<f4", offset=header).reshape(count, dim)

    idx = Path(index_path) if index_path else _index_path(path)
    if not idx.is_file():
        raise FormatError(f"missing index file {idx}")
    keys = []
    for lineno, line in enumerate(idx.read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"{idx}:{lineno}: expected person,camera,frame")
        keys.append((parts[0], int(parts[1]), int(parts[2])))
    if len(keys) != count:
        raise FormatError(f"{idx}: {len(keys)} rows for {count} vectors")
    return {key: vectors[i] for i, key in enumerate(keys)}


def pool(features, mode: str = "max") -> np.ndarray:
    """Element-wise aggregation of frame vectors into one descriptor.

    ``max`` keeps the strongest response per entry, ``average`` the mean,
    and ``first_frame`` copies the first vector (the no-pooling baseline).
    """
    if mode not in POOLING_MODES:
        raise ValueError(f"unknown pooling mode {mode!r}")
    rows = [np.asarray(f, dtype=np.float64) for f in features]
    if not rows:
        raise EmptyPool("no feature vectors to pool")
    dim = rows[0].shape
    for r in rows[1:]:
        if r.shape != dim:
            raise DimMismatch(f"vector dims differ: {r.shape} vs {dim}")
    if mode == "max":
        return np.maximum.reduce(rows)
    if mode == "average":
        return np.mean(rows, axis=0)
    return rows[0].copy()


def describe_sequence(seq: FrameSequence, strategy: SamplingStrategy,
                      extractor: Extractor, mode: str, rng: RngHandle,
                      keep: int = DEFAULT_KEEP) -> list[CycleDescriptor]:
    """Full per-sequence pipeline: cycles, sampling, extraction, pooling.

    Emits one descriptor per sampled frame group in temporal order.  For
    the random baselines a failed cycle detection just means one group;
    for ``representative`` it propagates as NoCycleFound.
    """
    cycles = []
    if strategy.needs_cycles:
        try:
            regulated = regulate_fep(compute_fep(seq).raw, keep=keep)
            cycles = detect_cycles(regulated)
        except NoCycleFound:
            if strategy.variant == "representative":
                raise
    groups = sample_frames(seq, cycles, strategy, rng)
    out = []
    for ordinal, group in enumerate(groups):
        pooled = pool(extractor.vectors(seq, group), mode)
        out.append(CycleDescriptor(
            values=pooled,
            source=(seq.person_id, seq.camera_id, ordinal)))
    return out
