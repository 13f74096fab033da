import numpy as np
import pytest

from reidpipe.cycle import compute_fep
from reidpipe.synth import (SynthSpec, generate_synthetic,
                            ground_truth_extrema, identity_colors)


class TestSpec:
    def test_invariants(self):
        with pytest.raises(ValueError):
            SynthSpec(period=3)
        with pytest.raises(ValueError):
            SynthSpec(frames=20, period=16)  # fewer than two cycles
        with pytest.raises(ValueError):
            SynthSpec(noise=1.5)


class TestGenerate:
    def test_sequence_counts(self):
        res = generate_synthetic(SynthSpec(identities=10, frames=32,
                                           period=8, seed=0))
        assert len(res.dataset.sequences) == 20
        assert len(res.dataset.identities) == 10
        assert res.dataset.cameras() == [1, 2]

    def test_same_seed_identical_pixels(self):
        spec = SynthSpec(identities=2, frames=32, period=8, noise=0.2, seed=4)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        for sa, sb in zip(a.dataset.sequences, b.dataset.sequences):
            for fa, fb in zip(sa.frames, sb.frames):
                assert np.array_equal(fa.pixels, fb.pixels)

    def test_noiseless_dominant_bin_matches_period(self):
        res = generate_synthetic(SynthSpec(identities=2, frames=64, period=16,
                                           noise=0.0, seed=1))
        for seq in res.dataset.sequences:
            raw = compute_fep(seq).raw
            spectrum = np.abs(np.fft.rfft(raw - raw.mean()))
            dominant = int(np.argmax(spectrum[1:])) + 1
            assert abs(dominant - len(raw) / 16) <= 1

    def test_truth_extrema_spacing(self):
        res = generate_synthetic(SynthSpec(identities=3, frames=64, period=16,
                                           seed=2))
        for extrema in res.extrema.values():
            assert all(b > a for a, b in zip(extrema, extrema[1:]))
            spacings = np.diff(extrema)
            assert np.all(np.abs(spacings - 8) <= 1)
            assert all(1 <= t <= 61 for t in extrema)

    def test_truth_matches_energy_profile(self):
        # with no noise, the raw profile peaks where the truth says
        res = generate_synthetic(SynthSpec(identities=1, frames=64, period=16,
                                           noise=0.0, occlusion=0.0, seed=9))
        seq = res.dataset.sequences[0]
        truth = res.extrema[(seq.person_id, seq.camera_id)]
        raw = compute_fep(seq).raw
        for t in truth:
            window = raw[max(0, t - 3):t + 4]
            edge = min(raw[max(0, t - 3)], raw[min(len(raw) - 1, t + 3)])
            center = raw[t]
            # t is either a local peak or a local trough of the window
            assert center == max(window) or center == min(window) or \
                abs(center - edge) > 0


class TestGroundTruth:
    def test_phase_zero_multiples_of_half_period(self):
        extrema = ground_truth_extrema(64, 16, 0)
        assert extrema == [8, 16, 24, 32, 40, 48, 56]

    def test_phase_shift_moves_extrema(self):
        extrema = ground_truth_extrema(64, 16, 4)
        assert extrema == [4, 12, 20, 28, 36, 44, 52, 60]


class TestIdentityColors:
    def test_distinct_torso_colors(self):
        torsos = {identity_colors(i)[0] for i in range(24)}
        assert len(torsos) == 24

    def test_channels_in_range(self):
        for i in range(24):
            for color in identity_colors(i):
                assert all(0 <= c <= 255 for c in color)
