"""Frequency-domain diagnostics: magnitude FFT, averaged PSD, centroid, bands."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sps

from .errors import SpectrumError


@dataclass
class Spectrum:
    freqs: np.ndarray            # Hz, strictly increasing, 0..rate/2
    power: np.ndarray            # non-negative; normalisation per `norm`
    norm: str                    # "peak" (unit max) or "density" (PSD)
    source: dict = field(default_factory=dict)   # sensor/direction/time-range/method

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if len(self.freqs) != len(self.power):
            raise SpectrumError("freqs and power length mismatch")
        if np.any(np.diff(self.freqs) <= 0):
            raise SpectrumError("freqs must be strictly increasing")
        if np.any(self.power < 0):
            raise SpectrumError("power must be non-negative")


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def fft_magnitude(segment: np.ndarray, rate: float, source: dict | None = None) -> Spectrum:
    """One-sided magnitude spectrum, zero-padded to a power of two, unit peak."""
    a = np.asarray(segment, dtype=float)
    if len(a) < 8:
        raise SpectrumError(f"segment too short for FFT ({len(a)} < 8 samples)")
    nfft = _next_pow2(len(a))
    mag = np.abs(np.fft.rfft(a, n=nfft))
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    freqs = np.fft.rfftfreq(nfft, d=1.0 / rate)
    return Spectrum(freqs, mag, "peak", dict(source or {}, method="fft"))


def welch_psd(segment: np.ndarray, rate: float, seg_len_s: float = 8.0,
              overlap_s: float = 4.0, window: str = "hann",
              detrend: str | bool = "constant", source: dict | None = None) -> Spectrum:
    """Averaged overlapped periodogram (density scaling).

    Defaults: 8 s segments with 4 s overlap, Hann window.  Pass
    window="boxcar" for the rectangular mode where Parseval holds directly.
    """
    a = np.asarray(segment, dtype=float)
    nperseg = int(round(seg_len_s * rate))
    noverlap = int(round(overlap_s * rate))
    if len(a) < nperseg:
        raise SpectrumError(
            f"segment ({len(a) / rate:.3g} s) shorter than one Welch segment ({seg_len_s} s)")
    freqs, psd = sps.welch(a, fs=rate, window=window, nperseg=nperseg,
                           noverlap=noverlap, detrend=detrend, scaling="density")
    return Spectrum(freqs, psd, "density",
                    dict(source or {}, method="welch", seg_len_s=seg_len_s,
                         overlap_s=overlap_s, window=window))


def spectral_centroid(s: Spectrum) -> float:
    """Power-weighted mean frequency."""
    total = float(s.power.sum())
    if total <= 0.0:
        raise SpectrumError("zero total power: centroid undefined")
    return float((s.freqs * s.power).sum() / total)


def band_energy(s: Spectrum, bands: list[tuple[float, float]]) -> list[float]:
    """Fraction of total power in each [lo, hi) band.

    The upper edge is included for a band reaching the top of the spectrum,
    so fractions over a full partition sum to one.
    """
    total = float(s.power.sum())
    if total <= 0.0:
        raise SpectrumError("zero total power")
    fmax = s.freqs[-1]
    out = []
    for lo, hi in bands:
        if hi <= lo:
            raise SpectrumError(f"inverted band bounds [{lo}, {hi}]")
        mask = (s.freqs >= lo) & (s.freqs < hi)
        if hi >= fmax:
            mask |= s.freqs == fmax
        out.append(float(s.power[mask].sum() / total))
    return out


def spectrum_rows(s: Spectrum) -> list[str]:
    """CSV rows `freq_hz,power` for plot export."""
    return [f"{float(f)!r},{float(p)!r}" for f, p in zip(s.freqs, s.power)]
