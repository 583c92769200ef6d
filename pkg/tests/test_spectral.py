import numpy as np
import pytest

from bridgewatch.errors import SpectrumError
from bridgewatch.spectral import (
    Spectrum,
    band_energy,
    fft_magnitude,
    spectral_centroid,
    spectrum_rows,
    welch_psd,
)


def tone(f, rate=64, seconds=12.0, amp=1.0, phase=0.0):
    t = np.arange(int(seconds * rate)) / rate
    return amp * np.sin(2 * np.pi * f * t + phase)


class TestFftMagnitude:
    def test_low_lateral_mode_peak(self):
        s = fft_magnitude(tone(1.4), 64)
        peak = s.freqs[np.argmax(s.power)]
        df = s.freqs[1] - s.freqs[0]
        assert abs(peak - 1.4) <= df
        assert s.power.max() == 1.0

    def test_dc_only(self):
        s = fft_magnitude(np.full(256, 3.0), 64)
        assert s.freqs[np.argmax(s.power)] == 0.0

    def test_two_tone_equal_heights(self):
        a = tone(3.5) + tone(14.0)
        s = fft_magnitude(a, 64)
        df = s.freqs[1] - s.freqs[0]
        for f in (3.5, 14.0):
            win = (s.freqs > f - 1.0) & (s.freqs < f + 1.0)
            peak_f = s.freqs[win][np.argmax(s.power[win])]
            assert abs(peak_f - f) <= df
        h1 = s.power[(s.freqs > 2.5) & (s.freqs < 4.5)].max()
        h2 = s.power[(s.freqs > 13.0) & (s.freqs < 15.0)].max()
        assert h1 == pytest.approx(h2, rel=0.05)

    def test_too_short(self):
        with pytest.raises(SpectrumError):
            fft_magnitude(np.ones(4), 64)


class TestWelch:
    def test_white_noise_flat(self):
        rng = np.random.default_rng(0)
        acc = np.zeros(0)
        psds = []
        for _ in range(20):
            s = welch_psd(rng.normal(size=64 * 60), 64)
            psds.append(s.power)
        mean_psd = np.mean(psds, axis=0)
        s0 = welch_psd(rng.normal(size=64 * 60), 64)
        interior = (s0.freqs >= 0.5) & (s0.freqs < 32.0)
        ratio = mean_psd[interior].max() / mean_psd[interior].min()
        assert ratio < 3.0

    def test_parseval_rectangular(self):
        rng = np.random.default_rng(1)
        a = rng.normal(0, 0.3, size=64 * 120)
        s = welch_psd(a, 64, window="boxcar", detrend=False)
        df = s.freqs[1] - s.freqs[0]
        assert float((s.power * df).sum()) == pytest.approx(np.var(a), rel=0.05)

    def test_tone_peak_bin(self):
        s = welch_psd(tone(8.0, seconds=30), 64)
        assert s.freqs[np.argmax(s.power)] == pytest.approx(8.0, abs=s.freqs[1])

    def test_short_segment_rejected(self):
        with pytest.raises(SpectrumError):
            welch_psd(np.ones(64), 64, seg_len_s=8)

    def test_variance_reduction(self):
        rng = np.random.default_rng(2)
        bin_var_1 = []
        bin_var_5 = []
        for _ in range(50):
            one = welch_psd(rng.normal(size=64 * 8), 64)          # single segment
            five = welch_psd(rng.normal(size=64 * 24), 64)        # 5 averaged (50% overlap)
            bin_var_1.append(one.power[10])
            bin_var_5.append(five.power[10])
        assert np.var(bin_var_5) < np.var(bin_var_1)


class TestCentroid:
    def test_single_tone(self):
        s = welch_psd(tone(8.0, seconds=40), 64)
        assert spectral_centroid(s) == pytest.approx(8.0, abs=2 * (s.freqs[1] - s.freqs[0]))

    def test_symmetric_two_tone(self):
        s = welch_psd(tone(6.0, seconds=40) + tone(10.0, seconds=40), 64)
        assert spectral_centroid(s) == pytest.approx(8.0, abs=0.3)

    def test_zero_power(self):
        with pytest.raises(SpectrumError):
            spectral_centroid(Spectrum(np.array([0.0, 1.0]), np.array([0.0, 0.0]), "peak"))

    def test_monotone_in_frequency(self):
        prev = 0.0
        for f in (4.0, 8.0, 12.0, 20.0):
            c = spectral_centroid(welch_psd(tone(f, seconds=40), 64))
            assert c > prev
            prev = c


class TestBandEnergy:
    def test_tone_in_band(self):
        s = welch_psd(tone(9.0, seconds=40), 64)
        lo_band, hi_band = band_energy(s, [(8.0, 10.0), (12.0, 16.0)])
        assert lo_band > 0.9
        assert hi_band < 0.05

    def test_partition_sums_to_one(self):
        rng = np.random.default_rng(3)
        s = welch_psd(rng.normal(size=64 * 60), 64)
        fr = band_energy(s, [(0.0, 8.0), (8.0, 16.0), (16.0, 32.0)])
        assert sum(fr) == pytest.approx(1.0, abs=1e-9)

    def test_inverted_band(self):
        s = welch_psd(tone(9.0, seconds=16), 64)
        with pytest.raises(SpectrumError):
            band_energy(s, [(10.0, 8.0)])

    def test_rows_export(self):
        s = fft_magnitude(tone(2.0), 64)
        rows = spectrum_rows(s)
        assert len(rows) == len(s.freqs)
        f0, p0 = rows[0].split(",")
        assert float(f0) == s.freqs[0]


class TestEciCentroidConcordance:
    def test_rank_correlation_over_crossings(self):
        # per-second frequency-content indicator tracks the power-weighted
        # spectral centroid across healthy and damaged crossings
        from scipy.stats import spearmanr
        from bridgewatch.indicators import eci as eci_op
        from bridgewatch.simulator import (DamageSpec, Vehicle, default_bridge,
                                           sensor_response, synth_crossing_group)
        bridge = default_bridge(seed=1, sensors=["I"])
        meta = bridge.sensors["I"]
        healthy = DamageSpec(kind="healthy")
        failed = DamageSpec(kind="bearing_failed", severity=1.0, onset_s=0.0, ramp_s=0.0)
        ecis, centroids = [], []
        for k in range(8):
            for dmg in (healthy, failed):
                resp = synth_crossing_group(bridge, [Vehicle(2.0, 40.0, 60.0)], dmg,
                                            seed=300 + k)
                z = sensor_response(bridge, meta, resp)[:, 2]
                for s in range(len(z) // 64):
                    seg = z[s * 64:(s + 1) * 64]
                    if np.mean(np.abs(seg)) < 0.01:   # skip noise-floor seconds
                        continue
                    ecis.append(eci_op(seg))
                    m = fft_magnitude(seg, 64)
                    centroids.append(spectral_centroid(
                        Spectrum(m.freqs, m.power ** 2, "peak")))
        rho = spearmanr(ecis, centroids).statistic
        assert len(ecis) > 50
        assert rho > 0.8
