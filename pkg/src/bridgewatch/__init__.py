"""Streaming structural-health-monitoring engine for an instrumented bridge.

Raw multi-rate sensor telemetry is aligned into the bridge's global
coordinate frame, reduced to additive per-second vibration indicators,
screened by percentile thresholds and an isolation forest, and archived in
an append-only store that a read-only HTTP inspection API serves.  A
modal-superposition simulator generates healthy and damaged scenarios for
end-to-end validation.
"""

__version__ = "0.1.0"

GRAVITY = 9.80665  # m/s^2, standard gravity
