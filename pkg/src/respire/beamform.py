"""Digital beamforming over the virtual array and polar/Cartesian regridding."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ParameterError

DEFAULT_AZIMUTH_GRID = np.arange(-60.0, 61.0, 1.0)


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear (virtual) array.

    The default is the 12-element virtual array of a 3 Tx / 4 Rx MIMO radar
    at 79 GHz with half-wavelength pitch.
    """

    n_elements: int = 12
    spacing_wavelengths: float = 0.5
    lambda_m: float = 3.8e-3
    taper_sll_db: float = -30.0
    taper_nbar: int = 4

    def __post_init__(self):
        if self.n_elements < 1:
            raise ParameterError(f"n_elements must be >= 1, got {self.n_elements}")
        if not self.spacing_wavelengths > 0:
            raise ParameterError("spacing_wavelengths must be positive")
        if not self.lambda_m > 0:
            raise ParameterError("lambda_m must be positive")

    def taper(self):
        if self.n_elements == 1:
            return np.ones(1)
        nbar = min(self.taper_nbar, self.n_elements // 2)
        return taylor_taper(self.n_elements, self.taper_sll_db, nbar)


@dataclass(frozen=True, eq=False)
class RadarImage:
    """Complex image with axes ``[range, azimuth, slow time]``.

    For ``grid_kind == "cartesian"`` the first axis is y (m) and the second
    is x (m); ``range_axis`` and ``azimuth_axis`` then hold those coordinates.
    """

    data: np.ndarray
    range_axis: np.ndarray
    azimuth_axis: np.ndarray
    fs_slow: float
    grid_kind: str = "polar"

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ParameterError(f"image data must be 3-D, got shape {data.shape}")
        r = np.asarray(self.range_axis, dtype=np.float64)
        a = np.asarray(self.azimuth_axis, dtype=np.float64)
        if data.shape[:2] != (r.size, a.size):
            raise ParameterError(
                f"axes ({r.size}, {a.size}) do not match data shape {data.shape[:2]}"
            )
        for name, axis in (("range_axis", r), ("azimuth_axis", a)):
            if axis.size > 1 and not np.all(np.diff(axis) > 0):
                raise ParameterError(f"{name} must be strictly increasing")
        if self.grid_kind not in ("polar", "cartesian"):
            raise ParameterError(f"unknown grid_kind {self.grid_kind!r}")
        object.__setattr__(self, "range_axis", r)
        object.__setattr__(self, "azimuth_axis", a)

    @property
    def n_slow(self):
        return self.data.shape[2]


def taylor_taper(n, sll_db=-30.0, nbar=4):
    """Taylor amplitude taper normalized to unit peak.

    Parameters
    ----------
    n : int
        Number of elements.
    sll_db : float
        Design sidelobe level in dB, negative (e.g. -30).
    nbar : int
        Number of nearly constant-level sidelobes adjacent to the mainlobe,
        ``1 <= nbar <= n / 2``.
    """
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if n == 1:
        return np.ones(1)
    if not sll_db < 0:
        raise ParameterError(f"sll_db must be negative, got {sll_db}")
    if int(nbar) != nbar or not 1 <= nbar <= n / 2:
        raise ParameterError(f"nbar must be an integer in [1, {n / 2}], got {nbar}")
    nbar = int(nbar)

    ratio = 10.0 ** (-sll_db / 20.0)
    a = np.arccosh(ratio) / np.pi
    sigma2 = nbar**2 / (a**2 + (nbar - 0.5) ** 2)
    ms = np.arange(1, nbar)

    coeffs = np.empty(nbar - 1)
    for i, m in enumerate(ms):
        num = np.prod(1.0 - m**2 / (sigma2 * (a**2 + (ms - 0.5) ** 2)))
        others = ms[ms != m]
        den = 2.0 * np.prod(1.0 - m**2 / others**2)
        coeffs[i] = (-1.0) ** (m + 1) * num / den

    xi = (np.arange(n) - (n - 1) / 2.0) / n
    w = 1.0 + 2.0 * np.cos(2.0 * np.pi * np.outer(xi, ms)) @ coeffs
    # exact palindrome regardless of rounding in the cosine sum
    w = 0.5 * (w + w[::-1])
    return w / w.max()


def steer_weights(phi_deg, taper, spacing_wavelengths=0.5):
    """Complex weights ``alpha_n * exp(j*pi*(n-1)*sin(phi))``.

    ``phi_deg`` may be a scalar or an array of azimuths; the element index is
    the last axis of the result. The phase increment generalizes to
    ``2*pi*spacing*sin(phi)`` for pitches other than half a wavelength.
    """
    taper = np.asarray(taper, dtype=np.float64)
    phi = np.deg2rad(np.asarray(phi_deg, dtype=np.float64))
    if np.any(np.abs(phi) >= np.pi / 2):
        raise ParameterError("azimuth must lie strictly inside (-90, 90) degrees")
    n = np.arange(taper.size)
    return taper * np.exp(2j * np.pi * spacing_wavelengths * n * np.sin(phi)[..., None])


def form_image(cube, azimuth_grid=None, array=None):
    """Beamform a range-profile cube into a polar radar image.

    Computes, for every range bin, azimuth and slow-time sample, the weighted
    coherent sum of the element signals.
    """
    array = array or ArrayConfig(n_elements=cube.n_elements, lambda_m=cube.lambda_m)
    if cube.n_elements != array.n_elements:
        raise ParameterError(
            f"cube has {cube.n_elements} elements, array config expects {array.n_elements}"
        )
    grid = DEFAULT_AZIMUTH_GRID if azimuth_grid is None else np.asarray(azimuth_grid, float)
    if grid.size == 0:
        raise ParameterError("azimuth grid is empty")

    weights = steer_weights(grid, array.taper(), array.spacing_wavelengths)  # [az, n]
    # [range, element, slow] so the batched product lands in [range, azimuth, slow]
    per_range = np.ascontiguousarray(cube.data.transpose(2, 0, 1))
    return RadarImage(
        data=weights @ per_range,
        range_axis=cube.range_axis,
        azimuth_axis=grid,
        fs_slow=cube.fs_slow,
        grid_kind="polar",
    )


def _nearest_index(axis, values):
    """Nearest grid index per value, -1 where the value is beyond half a cell of the edges."""
    axis = np.asarray(axis)
    if axis.size == 1:
        idx = np.zeros(np.shape(values), dtype=int)
        return np.where(np.isclose(values, axis[0]), idx, -1)
    pos = np.searchsorted(axis, values)
    pos = np.clip(pos, 1, axis.size - 1)
    left, right = axis[pos - 1], axis[pos]
    idx = np.where(values - left <= right - values, pos - 1, pos)
    half_lo = 0.5 * (axis[1] - axis[0])
    half_hi = 0.5 * (axis[-1] - axis[-2])
    outside = (values < axis[0] - half_lo) | (values > axis[-1] + half_hi)
    return np.where(outside, -1, idx)


def polar_to_cartesian(image, x_axis, y_axis):
    """Nearest-neighbour regridding onto ``(x, y) = (-r sin(phi), r cos(phi))``.

    Cells with no polar source within half a grid step are zero.
    """
    if image.grid_kind != "polar":
        raise ParameterError("polar_to_cartesian expects a polar image")
    x_axis = np.asarray(x_axis, dtype=np.float64)
    y_axis = np.asarray(y_axis, dtype=np.float64)
    yy, xx = np.meshgrid(y_axis, x_axis, indexing="ij")
    r = np.hypot(xx, yy)
    phi = np.rad2deg(np.arctan2(-xx, yy))

    ri = _nearest_index(image.range_axis, r)
    ai = _nearest_index(image.azimuth_axis, phi)
    valid = (ri >= 0) & (ai >= 0)

    out = np.zeros((y_axis.size, x_axis.size, image.n_slow), dtype=image.data.dtype)
    out[valid] = image.data[ri[valid], ai[valid]]
    return RadarImage(out, y_axis, x_axis, image.fs_slow, grid_kind="cartesian")


def polar_to_xy(r, phi_deg):
    """Cartesian position of a polar grid point."""
    phi = np.deg2rad(phi_deg)
    return -r * np.sin(phi), r * np.cos(phi)


class Beamformer(TransformerMixin, BaseEstimator):
    """Turn a sequence of range-profile cubes into polar radar images.

    Stateless; ``fit`` only validates parameters so the transformer can sit
    at the head of a :class:`sklearn.pipeline.Pipeline`.
    """

    def __init__(self, azimuth_grid=None, n_elements=12, spacing_wavelengths=0.5,
                 lambda_m=3.8e-3, taper_sll_db=-30.0, taper_nbar=4):
        self.azimuth_grid = azimuth_grid
        self.n_elements = n_elements
        self.spacing_wavelengths = spacing_wavelengths
        self.lambda_m = lambda_m
        self.taper_sll_db = taper_sll_db
        self.taper_nbar = taper_nbar

    def _array(self):
        return ArrayConfig(self.n_elements, self.spacing_wavelengths, self.lambda_m,
                           self.taper_sll_db, self.taper_nbar)

    def fit(self, X=None, y=None):
        self.array_ = self._array()
        return self

    def transform(self, X):
        array = getattr(self, "array_", None) or self._array()
        return [form_image(cube, self.azimuth_grid, array) for cube in X]
