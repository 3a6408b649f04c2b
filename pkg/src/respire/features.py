"""Respiratory spectrum and harmonic feature extraction."""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import hann
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import FEATURE_NAMES, principal_angle
from .exceptions import DegenerateFundamentalError, NoPeakError, ParameterError

MIN_SAMPLES = 64
DEFAULT_BAND = (0.1, 0.5)

FEATURE_TABLE_HEADER = [
    "participant", "radar", "theta_deg", "f0_hz",
    "x1_mm", "x2", "x3_rad", "x4", "x5_rad", "status",
]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided amplitude-calibrated spectrum (mm)."""

    freqs: np.ndarray
    values: np.ndarray
    scaling: str = "amplitude"

    @property
    def magnitude(self):
        return np.abs(self.values)


@dataclass(frozen=True)
class FeatureVector:
    x1: float
    x2: float
    x3: float
    x4: float
    x5: float
    f0: float
    x0: float = field(default=1.0, repr=False)

    def as_array(self, with_constant=False):
        values = [self.x1, self.x2, self.x3, self.x4, self.x5]
        return np.array([self.x0] + values if with_constant else values)


def _window(n, kind):
    if kind in (None, "none"):
        return np.ones(n)
    if kind == "hann":
        # periodic form: integer-bin leakage of an on-grid tone is exactly zero
        return hann(n, sym=False)
    raise ParameterError(f"unknown window {kind!r}")


def _prepare(d, window):
    x = d.samples
    if x.size < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    w = _window(x.size, window)
    return (x - x.mean()) * w, 2.0 / w.sum()


def asd(d, window="hann", zero_pad_factor=1):
    """Amplitude spectral density of a displacement waveform.

    The record is demeaned and optionally Hann-windowed; the transform is
    scaled by ``2 / sum(window)`` so that an on-grid sinusoid of amplitude A
    reads exactly A at its frequency.
    """
    if int(zero_pad_factor) != zero_pad_factor or zero_pad_factor < 1:
        raise ParameterError("zero_pad_factor must be a positive integer")
    xw, scale = _prepare(d, window)
    nfft = xw.size * int(zero_pad_factor)
    values = scale * np.fft.rfft(xw, n=nfft)
    freqs = np.fft.rfftfreq(nfft, d=1.0 / d.fs_slow)
    return Spectrum(freqs, values)


def estimate_f0(spec, band=DEFAULT_BAND):
    """Respiratory fundamental: spectral peak in ``band`` with parabolic refinement.

    The three log-magnitude samples around the peak bin are fitted with a
    parabola; peaks on the band edge are returned unrefined.
    """
    lo, hi = band
    if not (0 <= lo < hi) or hi > spec.freqs[-1] or lo < spec.freqs[0]:
        raise ParameterError(f"band {band} outside spectrum support")
    mag = spec.magnitude
    idx = np.flatnonzero((spec.freqs >= lo) & (spec.freqs <= hi))
    if idx.size == 0:
        raise ParameterError(f"no spectral bins inside band {band}")
    in_band = mag[idx]
    peak = in_band.max()
    if not peak > 0 or np.ptp(in_band) <= 1e-12 * peak:
        raise NoPeakError(f"spectrum is flat over {band} Hz")

    k = idx[np.argmax(in_band)]
    df = spec.freqs[1] - spec.freqs[0]
    if k == idx[0] or k == idx[-1] or min(mag[k - 1], mag[k + 1]) <= 0:
        return float(spec.freqs[k])
    a, b, c = np.log(mag[k - 1 : k + 2])
    denom = a - 2.0 * b + c
    delta = 0.0 if denom >= 0 else 0.5 * (a - c) / denom
    return float(spec.freqs[k] + delta * df)


def goertzel(x, omega):
    """Single-bin DFT ``sum_n x[n] exp(-j omega n)`` by the Goertzel recursion."""
    coeff = 2.0 * math.cos(omega)
    s1 = s2 = 0.0
    for value in x:
        s0 = value + coeff * s1 - s2
        s2, s1 = s1, s0
    y = complex(s1 - math.cos(omega) * s2, math.sin(omega) * s2)
    return y * complex(math.cos(omega * (len(x) - 1)), -math.sin(omega * (len(x) - 1)))


def dtft_at(d, f, window="hann"):
    """Calibrated D(f) at an arbitrary frequency ``0 < f < fs/2``.

    Uses the same demeaning, window and scaling as :func:`asd`, so the value
    coincides with the ASD wherever ``f`` falls on the FFT grid.
    """
    if not 0 < f < d.fs_slow / 2:
        raise ParameterError(f"frequency {f} Hz outside (0, {d.fs_slow / 2}) Hz")
    xw, scale = _prepare(d, window)
    return scale * goertzel(xw.tolist(), 2.0 * np.pi * f / d.fs_slow)


def extract_features(d, window="hann", zero_pad_factor=8, band=DEFAULT_BAND):
    """Harmonic feature vector of one displacement waveform.

    ``x1 = |D(f0)|``; ``x2, x3`` are the modulus and phase of ``D(2f0)/D(f0)``;
    ``x4, x5`` those of ``D(3f0)/D(f0)``. The phase of ``D(f0)`` itself depends
    on the uncontrolled breathing phase and is never reported.
    """
    f0 = estimate_f0(asd(d, window, zero_pad_factor), band)
    if not 3 * f0 < d.fs_slow / 2:
        raise ParameterError(f"third harmonic {3 * f0} Hz is above Nyquist")
    d1 = dtft_at(d, f0, window)
    if abs(d1) == 0:
        raise DegenerateFundamentalError(f"|D(f0)| = 0 at f0 = {f0} Hz")
    r2 = dtft_at(d, 2 * f0, window) / d1
    r3 = dtft_at(d, 3 * f0, window) / d1
    return FeatureVector(
        x1=abs(d1),
        x2=abs(r2),
        x3=float(principal_angle(np.angle(r2))),
        x4=abs(r3),
        x5=float(principal_angle(np.angle(r3))),
        f0=f0,
    )


class HarmonicFeatures(TransformerMixin, BaseEstimator):
    """Displacement waveforms to an ``(n, 5)`` matrix of x1..x5.

    The fundamental estimated for each waveform during the last ``transform``
    is kept in ``f0_``.
    """

    def __init__(self, window="hann", zero_pad_factor=8, band=DEFAULT_BAND):
        self.window = window
        self.zero_pad_factor = zero_pad_factor
        self.band = band

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        vectors = [extract_features(d, self.window, self.zero_pad_factor, self.band) for d in X]
        self.f0_ = np.array([v.f0 for v in vectors])
        return np.array([v.as_array() for v in vectors]).reshape(-1, len(FEATURE_NAMES))

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


@dataclass(eq=False)
class FeatureTable:
    """Feature rows with ground truth, as stored in the feature-table CSV."""

    participant: np.ndarray
    radar: np.ndarray
    theta: np.ndarray
    f0: np.ndarray
    X: np.ndarray
    status: list

    @property
    def valid(self):
        return np.array([s == "ok" for s in self.status], dtype=bool)

    def __len__(self):
        return len(self.status)

    def subset(self, mask):
        mask = np.asarray(mask)
        return FeatureTable(self.participant[mask], self.radar[mask], self.theta[mask],
                            self.f0[mask], self.X[mask],
                            [s for s, keep in zip(self.status, mask) if keep])

    @classmethod
    def from_rows(cls, rows):
        """Build from ``(participant, radar, theta, FeatureVector | None, status)`` tuples."""
        nan5 = [np.nan] * 5
        return cls(
            participant=np.array([r[0] for r in rows], dtype=int),
            radar=np.array([r[1] for r in rows], dtype=int),
            theta=np.array([r[2] for r in rows], dtype=float),
            f0=np.array([r[3].f0 if r[3] is not None else np.nan for r in rows], dtype=float),
            X=np.array([r[3].as_array() if r[3] is not None else nan5 for r in rows],
                       dtype=float).reshape(-1, 5),
            status=[r[4] for r in rows],
        )


def _fmt(value):
    # repr round-trips float64 exactly, keeping file handoffs lossless
    return "" if not np.isfinite(value) else repr(float(value))


def feature_table_to_csv(table):
    """Feature table as CSV text (the exact bytes written by :func:`write_feature_table`)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(FEATURE_TABLE_HEADER)
    for i in range(len(table)):
        writer.writerow([
            int(table.participant[i]), int(table.radar[i]), _fmt(table.theta[i]),
            _fmt(table.f0[i]), *(_fmt(v) for v in table.X[i]), table.status[i],
        ])
    return buf.getvalue()


def write_feature_table(table, path):
    text = feature_table_to_csv(table)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return text


def read_feature_table(path):
    def num(text):
        return float(text) if text != "" else np.nan

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURE_TABLE_HEADER:
            raise ParameterError(f"unexpected feature table header {header}")
        rows = list(reader)
    return FeatureTable(
        participant=np.array([int(r[0]) for r in rows], dtype=int),
        radar=np.array([int(r[1]) for r in rows], dtype=int),
        theta=np.array([num(r[2]) for r in rows], dtype=float),
        f0=np.array([num(r[3]) for r in rows], dtype=float),
        X=np.array([[num(v) for v in r[4:9]] for r in rows], dtype=float).reshape(-1, 5),
        status=[r[9] for r in rows],
    )
