"""Motion-energy profile, frequency-domain regularization, and frame sampling.

The per-transition motion energy of a walking sequence is approximately
sinusoidal: maxima where the legs overlap, minima where they are furthest
apart.  The raw profile is noisy, so it is reconstructed from its few
dominant DFT frequencies before extrema are located.  Each interval
between two adjacent extrema (one step) is treated as a walking cycle,
and representative frames are sampled at equal index spacing across it.

Baseline strategies (random over the whole sequence, one draw per equal
segment, all frames, random draws per tracklet half) share the same
sampling entry point so they can be swapped in experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FrameSequence, RngHandle
from .errors import InsufficientFrames, NoCycleFound, SignalTooShort

# Default count of dominant positive-frequency bins kept by regulate_fep.
# A single bin smooths well but quantizes the stride frequency to the DFT
# grid, which can drag extrema several frames off target for periods that
# fall between bins; three bins keep enough spectral leakage to localize
# extrema within one frame at desk-scale sequence lengths.
DEFAULT_KEEP = 3

#: Strategy variant names, as accepted by :class:`SamplingStrategy`.
VARIANTS = ("representative", "random_whole", "equal_segments",
            "all_frames", "random_halves")


@dataclass(frozen=True)
class FepSignal:
    """Motion-energy profile: one value per frame transition."""

    raw: np.ndarray
    regulated: np.ndarray | None = None

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.float64)
        object.__setattr__(self, "raw", raw)
        if self.regulated is not None:
            reg = np.asarray(self.regulated, dtype=np.float64)
            if reg.shape != raw.shape:
                raise ValueError("regulated length must match raw length")
            object.__setattr__(self, "regulated", reg)

    def __len__(self) -> int:
        return len(self.raw)


@dataclass(frozen=True)
class WalkingCycle:
    """One step: the interval between a regulated maximum and minimum."""

    max_index: int
    min_index: int

    @property
    def span(self) -> tuple[int, int]:
        """Inclusive frame-index interval covered by the cycle."""
        lo, hi = sorted((self.max_index, self.min_index))
        return (lo, hi)

    @property
    def span_length(self) -> int:
        lo, hi = self.span
        return hi - lo + 1


@dataclass(frozen=True)
class SamplingStrategy:
    """Frame selection strategy plus its per-group frame budget K."""

    variant: str
    k: int = 4

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def needs_cycles(self) -> bool:
        return self.variant in ("representative", "random_whole",
                                "equal_segments")


def compute_fep(seq: FrameSequence) -> FepSignal:
    """Sum of absolute luma differences over the lower half of each frame.

    Only rows at or below height/2 contribute: leg motion drives the gait
    signal, and ignoring the upper body suppresses appearance noise.
    """
    lumas = np.stack([f.luma() for f in seq.frames])
    lower = lumas[:, (seq.frames[0].height + 1) // 2:, :]
    raw = np.abs(np.diff(lower, axis=0)).sum(axis=(1, 2))
    return FepSignal(raw=raw)


def regulate_fep(raw: np.ndarray, keep: int = DEFAULT_KEEP) -> np.ndarray:
    """Reconstruct a signal from its ``keep`` dominant frequencies.

    The mean is removed, the spectrum of the centered signal is zeroed
    except for the ``keep`` largest-magnitude positive-frequency bins
    (conjugate symmetry is preserved implicitly by the real transform),
    and the mean is added back after inversion.  With ``keep`` at least
    the number of positive bins this is an identity to float precision.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or len(raw) < 4:
        raise SignalTooShort(f"need >= 4 samples, got {raw.shape}")
    if keep < 1:
        raise ValueError("keep must be >= 1")

    mean = raw.mean()
    spectrum = np.fft.rfft(raw - mean)
    mags = np.abs(spectrum[1:])
    order = np.argsort(-mags, kind="stable")[:keep]
    mask = np.zeros(len(spectrum), dtype=bool)
    mask[order + 1] = True
    spectrum[~mask] = 0.0
    return np.fft.irfft(spectrum, n=len(raw)) + mean


def _extrema(values: np.ndarray) -> list[tuple[int, int]]:
    """Interior strict extrema as (index, sign); sign +1 max, -1 min.

    A flat run counts as a single extremum at its midpoint (ties toward
    the earlier index).  Runs touching either end of the signal are not
    extrema.
    """
    n = len(values)
    found = []
    start = 0
    while start < n:
        end = start
        while end + 1 < n and values[end + 1] == values[start]:
            end += 1
        if start > 0 and end < n - 1:
            left, right, v = values[start - 1], values[end + 1], values[start]
            if left < v and right < v:
                found.append(((start + end) // 2, +1))
            elif left > v and right > v:
                found.append(((start + end) // 2, -1))
        start = end + 1
    return found


def detect_cycles(regulated: np.ndarray) -> list[WalkingCycle]:
    """Pair adjacent extrema of the regulated profile into walking cycles.

    Strict interior extrema alternate between maxima and minima; every
    adjacent (max, min) or (min, max) pair is one step, so ``m`` extrema
    yield ``m - 1`` cycles ordered by time.
    """
    regulated = np.asarray(regulated, dtype=np.float64)
    if regulated.size == 0:
        raise NoCycleFound("empty signal")
    ext = _extrema(regulated)
    if len(ext) < 2:
        raise NoCycleFound(f"{len(ext)} extrema, need at least one max-min pair")
    cycles = []
    for (i, si), (j, sj) in zip(ext, ext[1:]):
        assert si != sj, "extrema must alternate"
        if si > 0:
            cycles.append(WalkingCycle(max_index=i, min_index=j))
        else:
            cycles.append(WalkingCycle(max_index=j, min_index=i))
    return cycles


def _representative_indices(cycle: WalkingCycle, k: int) -> list[int]:
    if k > cycle.span_length:
        raise InsufficientFrames(
            f"k={k} exceeds cycle span of {cycle.span_length} frames")
    if k == 1:
        return [cycle.max_index]
    points = np.linspace(cycle.max_index, cycle.min_index, k)
    return sorted(int(round(p)) for p in points)


def sample_frames(seq: FrameSequence, cycles: list[WalkingCycle],
                  strategy: SamplingStrategy,
                  rng: RngHandle) -> list[list[int]]:
    """Select frame-index groups for descriptor extraction.

    One group is returned per walking cycle (``representative``,
    ``random_whole``, ``equal_segments``), per tracklet half
    (``random_halves``), or for the whole sequence (``all_frames``).
    Groups are sorted and duplicate-free.
    """
    n = len(seq)
    k = strategy.k
    gen = rng.generator()

    if strategy.variant == "representative":
        return [_representative_indices(c, k) for c in cycles]

    if strategy.variant == "all_frames":
        return [list(range(n))]

    if strategy.variant == "random_whole":
        if k > n:
            raise InsufficientFrames(f"k={k} exceeds {n} frames")
        groups = max(1, len(cycles))
        return [sorted(gen.choice(n, size=k, replace=False).tolist())
                for _ in range(groups)]

    if strategy.variant == "equal_segments":
        if k > n:
            raise InsufficientFrames(f"k={k} segments exceed {n} frames")
        bounds = [(i * n) // k for i in range(k + 1)]
        groups = max(1, len(cycles))
        out = []
        for _ in range(groups):
            out.append([int(gen.integers(bounds[i], bounds[i + 1]))
                        for i in range(k)])
        return out

    # random_halves: first half gets the extra draw when k is odd
    half = n // 2
    draws = (k - k // 2, k // 2)
    spans = ((0, half), (half, n))
    out = []
    for count, (lo, hi) in zip(draws, spans):
        if count > hi - lo:
            raise InsufficientFrames(
                f"{count} draws exceed half of {n} frames")
        picks = gen.choice(hi - lo, size=count, replace=False) + lo
        out.append(sorted(picks.tolist()))
    return out
