"""
Numerically stable kernels for the piecewise-exponential membrane segments.

A segment obeys dv/dt = A - B*v for a width dt, so that
v_end = v_start*exp(-B*dt) + A*(1 - exp(-B*dt))/B. The helpers below
evaluate the B-dependent factors without cancellation when B*dt is small
and fall back to the exact linear limit once B <= B_TOL.
"""
import numpy as np

B_TOL = 1e-12
_SERIES_CUTOFF = 1e-3


def relaxation_gain(b: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """(1 - exp(-b*dt)) / b, equal to dt in the b -> 0 limit."""
    b = np.asarray(b, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    linear = b <= B_TOL
    safe_b = np.where(linear, 1.0, b)
    return np.where(linear, dt, -np.expm1(-safe_b * dt) / safe_b)


def relaxation_curvature(b: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """(1 - exp(-x)*(1 + x)) / b**2 with x = b*dt, equal to dt**2/2 as b -> 0."""
    b = np.asarray(b, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    x = b * dt
    small = (b <= B_TOL) | (x < _SERIES_CUTOFF)
    safe_b = np.where(small, 1.0, b)
    safe_x = np.where(small, 1.0, x)
    exact = (-np.expm1(-safe_x) - safe_x * np.exp(-safe_x)) / (safe_b * safe_b)
    xs = np.where(small, x, 0.0)
    series = dt * dt * (0.5 - xs / 3.0 + xs * xs / 8.0 - xs * xs * xs / 30.0)
    return np.where(small, series, exact)


def decay(b: np.ndarray, dt: np.ndarray) -> np.ndarray:
    """exp(-b*dt), treating b <= B_TOL as exactly 1."""
    b = np.asarray(b, dtype=np.float64)
    dt = np.asarray(dt, dtype=np.float64)
    return np.where(b <= B_TOL, 1.0, np.exp(-np.where(b <= B_TOL, 0.0, b) * dt))
