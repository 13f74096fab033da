"""Synthetic walking-sequence generator for desk-scale experiments.

Each identity gets one sequence per camera.  A frame is a colored torso
block over a two-bar "legs" region whose gray level takes a step of
sinusoidally varying size every frame, so the lower-half motion energy is
an exact raised cosine with the requested stride period.  A second
identity color, a "bag", swings into view only near the low-energy phase
of the stride, so part of the identity evidence is scattered across
frames the way salient appearance details are in real sequences.  Random
background-colored occluder blocks hide the upper body in some frames,
simulating partial occlusion without touching the motion signal.

The second camera applies a fixed global color shift and each sequence
starts at a random stride phase.  Ground-truth extrema positions of the
motion-energy profile are returned for cycle-detection tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, Frame, FrameSequence, RngHandle

# The backdrop and the legs carry enough chroma to pin their hue bin:
# near-gray pixels would get an arbitrary hue under noise, which turns
# into a systematic cross-camera histogram difference once the camera
# shift is applied.
BACKGROUND = (215, 190, 175)
LEG_TINT = (1.0, 0.85, 0.70)
CAMERA2_SHIFT = (6, -3, -6)

# Legs brightness walk: step size base + amplitude, staying in range
STEP_BASE = 6.0
STEP_AMP = 60.0
LEG_GRAY_LO, LEG_GRAY_HI = 80.0, 225.0


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic two-camera walking dataset."""

    identities: int = 20
    frames: int = 64
    period: int = 16
    height: int = 64
    width: int = 32
    noise: float = 0.0       # uniform pixel noise, fraction of STEP_AMP
    occlusion: float = 0.15  # per-frame probability of an upper-half block
    seed: int = 0

    def __post_init__(self):
        if self.period < 4:
            raise ValueError("period must be >= 4")
        if self.frames < 2 * self.period:
            raise ValueError("need at least two full cycles of frames")
        if self.identities < 1:
            raise ValueError("need at least one identity")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")


@dataclass(frozen=True)
class SynthResult:
    dataset: Dataset
    extrema: dict  # (person_id, camera_id) -> ground-truth extrema indices


def _hsv_to_rgb(h: float, s: float, v: float) -> tuple[int, int, int]:
    i = int(h * 6.0) % 6
    f = h * 6.0 - int(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    r, g, b = [(v, t, p), (q, v, p), (p, v, t),
               (p, q, v), (t, p, v), (v, p, q)][i]
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


# (hue_bin, sat_bin) combos on an 8x8 histogram grid, ordered so that the
# low-saturation tail (most sensitive to the camera shift) alternates hues.
_COLOR_GRID = ([(h, 7) for h in range(8)] + [(h, 5) for h in range(8)]
               + [(h, 3) for h in (0, 2, 4, 6, 1, 3, 5, 7)])


def identity_colors(index: int) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
    """Torso and bag colors for one identity, at hue-saturation bin centers.

    Bin centers keep each color in its histogram bin under pixel noise
    and the fixed cross-camera shift.  Bag colors live on saturation rows
    the torsos never use, so the two cues occupy disjoint bins.
    """
    hue_bin, sat_bin = _COLOR_GRID[index % len(_COLOR_GRID)]
    torso = _hsv_to_rgb((hue_bin + 0.5) / 8.0, (sat_bin + 0.5) / 8.0, 0.85)
    # Bag hues skip bin 0, which the backdrop occupies in its stripe.
    bag_sat = 2 if sat_bin in (7, 3) else 1
    bag_hue = 1 + (hue_bin + 2) % 7
    bag = _hsv_to_rgb((bag_hue + 0.5) / 8.0, (bag_sat + 0.5) / 8.0, 0.85)
    return torso, bag


def _step_sizes(n_frames: int, period: int, phase: int) -> np.ndarray:
    t = np.arange(n_frames - 1, dtype=np.float64)
    return STEP_BASE + STEP_AMP * (1 + np.cos(2 * math.pi * (t + phase) / period)) / 2


def _leg_grays(steps: np.ndarray, start: float = 120.0) -> np.ndarray:
    grays = np.empty(len(steps) + 1)
    grays[0] = start
    direction = 1.0
    for t, s in enumerate(steps):
        if not LEG_GRAY_LO <= grays[t] + direction * s <= LEG_GRAY_HI:
            direction = -direction
        grays[t + 1] = grays[t] + direction * s
    return grays


def ground_truth_extrema(n_frames: int, period: int, phase: int) -> list[int]:
    """Interior extrema indices of the energy profile cos(2pi (t+phase)/P).

    The profile has length n_frames - 1; extrema land wherever t + phase
    is a multiple of half the period, excluding the profile endpoints.
    """
    length = n_frames - 1
    out = []
    k = math.ceil(2 * phase / period)
    while True:
        t = int(round(k * period / 2.0 - phase))
        if t > length - 2:
            break
        if t >= 1:
            out.append(t)
        k += 1
    return out


def _render_sequence(spec: SynthSpec, person: str, camera: int,
                     torso_rgb, bag_rgb, phase: int,
                     rng: RngHandle) -> FrameSequence:
    h, w, n = spec.height, spec.width, spec.frames
    gen = rng.generator()

    steps = _step_sizes(n, spec.period, phase)
    grays = np.rint(_leg_grays(steps)).astype(np.int16)

    # Regions are kept clear of the 6-stripe boundaries of the rescaled
    # 128-row frame so the torso, the bag, and the legs land in disjoint
    # stripes: torso in 0-1, bag in 2, legs in 3-5.
    torso_rows = slice(2 * h // 32, 10 * h // 32)
    torso_half_lo, torso_half_hi = 1, 5 * w // 16
    bag_rows = slice(11 * h // 32, 15 * h // 32)
    bag_max = 3 * w // 16
    leg_rows = slice(9 * h // 16, 31 * h // 32)
    leg_cols = (slice(w // 4 - 2, w // 4 + 2),
                slice(3 * w // 4 - 2, 3 * w // 4 + 2))

    if camera == 2:
        shift = np.array(CAMERA2_SHIFT, dtype=np.int16)
        torso_rgb = tuple(np.clip(np.array(torso_rgb) + shift, 0, 255))
        bag_rgb = tuple(np.clip(np.array(bag_rgb) + shift, 0, 255))
        bg = tuple(np.clip(np.array(BACKGROUND) + shift, 0, 255))
    else:
        bg = BACKGROUND

    # Occlusions come in bursts of consecutive frames (a pillar or a
    # passer-by) and vary in extent from a third to the full width.
    occluded = np.zeros(n, dtype=bool)
    occ_cols = np.zeros(n, dtype=int)
    t = 0
    while t < n:
        if not occluded[t] and gen.random() < spec.occlusion / 5.5:
            length = int(gen.integers(4, 8))
            cols = int(gen.integers(5 * w // 16, w + 1))
            occluded[t:t + length] = True
            occ_cols[t:t + length] = cols
            t += length
        else:
            t += 1
    noise_amp = int(round(spec.noise * STEP_AMP))

    frames = []
    for t in range(n):
        img = np.empty((h, w, 3), dtype=np.int16)
        img[:, :] = bg

        # The silhouette is narrowest where the legs cross (energy maximum)
        # and widest where they are apart (energy minimum), so every
        # sampled half-stride contains both the strongest torso view and
        # the most exposed background.
        swing = (1 - math.cos(2 * math.pi * (t + phase) / spec.period)) / 2
        half = int(round(torso_half_lo
                         + (torso_half_hi - torso_half_lo) * swing))
        img[torso_rows, w // 2 - half:w // 2 + half] = torso_rgb

        # The bag swings out toward the same low-energy phase; the sharp
        # profile keeps it hidden behind the body for most of the cycle,
        # so it only shows up in frames near the energy minimum.
        reach = int(round(bag_max * swing ** 5))
        if reach > 0:
            lo, hi = w // 2 - torso_half_hi, w // 2 + torso_half_hi
            img[bag_rows, max(0, lo - reach):lo] = bag_rgb
            img[bag_rows, hi:min(w, hi + reach)] = bag_rgb

        leg_rgb = tuple(int(round(grays[t] * f)) for f in LEG_TINT)
        for cols in leg_cols:
            img[leg_rows, cols] = leg_rgb

        # A background-colored block hides part of the torso and bag:
        # identity evidence goes missing rather than being replaced by a
        # new strong response, which is what element-wise max pooling is
        # built to absorb.
        if occluded[t]:
            img[:h // 2, :occ_cols[t]] = bg

        if noise_amp > 0:
            img += gen.integers(-noise_amp, noise_amp + 1,
                                size=img.shape, dtype=np.int16)
        frames.append(Frame(np.clip(img, 0, 255).astype(np.uint8)))
    return FrameSequence(person_id=person, camera_id=camera,
                         frames=tuple(frames))


def generate_synthetic(spec: SynthSpec) -> SynthResult:
    """Build a two-camera dataset with known stride phase per sequence."""
    root = RngHandle(spec.seed)
    sequences = []
    extrema = {}
    for camera in (1, 2):
        for i in range(spec.identities):
            person = f"p{i:03d}"
            torso, bag = identity_colors(i)
            rng = root.child("seq", camera, person)
            phase = int(rng.generator().integers(0, spec.period))
            sequences.append(_render_sequence(
                spec, person, camera, torso, bag, phase,
                rng.child("pixels")))
            extrema[(person, camera)] = ground_truth_extrema(
                spec.frames, spec.period, phase)
    return SynthResult(dataset=Dataset(sequences=tuple(sequences)),
                       extrema=extrema)
