"""Acceleration-to-displacement conversion and added-mass frequency shift."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as spi
from scipy import signal as sps

from .errors import InsufficientDataError

# Each zero-phase 2nd-order high-pass stage is designed at this fraction of
# the nominal cutoff so the combined (two-stage, forward-backward) chain has
# its -3 dB point at the nominal cutoff instead of attenuating well above it.
_STAGE_CUTOFF_FRACTION = 0.7


@dataclass
class DisplacementSeries:
    rate: float
    values: np.ndarray        # mm, zero-mean by construction
    highpass_cutoff: float    # Hz, nominal


def _cumtrapz_corrected(x: np.ndarray, dt: float) -> np.ndarray:
    # trapezoid rule underestimates tones near Nyquist (-10% at Fs/8 after
    # double integration); the Euler-Maclaurin end-point correction removes
    # the bulk of that bias
    y = spi.cumulative_trapezoid(x, dx=dt, initial=0.0)
    dxdt = np.gradient(x, dt)
    return y - (dt * dt / 12.0) * (dxdt - dxdt[0])


def double_integrate(acc: np.ndarray, rate: float, cutoff_hz: float = 0.5) -> DisplacementSeries:
    """Displacement (mm) from acceleration by filtered double integration.

    Chain: linear detrend -> integrate -> zero-phase 2nd-order high-pass ->
    integrate -> high-pass -> remove residual mean.  The cutoff must sit
    below the lowest structural frequency of interest.
    """
    a = np.asarray(acc, dtype=float)
    min_len = int(math.ceil(4.0 / cutoff_hz * rate))
    if len(a) < min_len:
        raise InsufficientDataError(
            f"segment of {len(a) / rate:.3g} s too short for cutoff {cutoff_hz} Hz "
            f"(needs >= {4.0 / cutoff_hz:.3g} s)")
    dt = 1.0 / rate
    sos = sps.butter(2, _STAGE_CUTOFF_FRACTION * cutoff_hz, btype="highpass",
                     fs=rate, output="sos")

    vel = sps.sosfiltfilt(sos, _cumtrapz_corrected(sps.detrend(a, type="linear"), dt))
    disp = sps.sosfiltfilt(sos, _cumtrapz_corrected(vel, dt))
    disp = (disp - disp.mean()) * 1000.0
    return DisplacementSeries(rate, disp, cutoff_hz)


def added_mass_frequency(f: float, m_struct: float, m_added: float) -> float:
    """Natural frequency of the structure carrying an extra mass (tonnes)."""
    if m_struct <= 0 or m_added < 0:
        raise ValueError("masses must be positive (added mass >= 0)")
    return f * math.sqrt(m_struct / (m_struct + m_added))
