"""Synthetic radar scenes: respiratory displacement and range-compressed element signals.

The generator stands in for recorded subjects. A record is fully determined
by its configuration and a seed; randomness is drawn from
:class:`numpy.random.SeedSequence` children so scenes can be produced in any
order, or in parallel, without changing their content.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .beamform import ArrayConfig
from .displacement import DisplacementWaveform
from .exceptions import ConfigurationError, ParameterError

LAMBDA_M = 3.8e-3
RANGE_BIN_M = 0.044
FS_SLOW = 10.0
DURATION_S = 40.0
DEFAULT_THETAS = tuple(range(0, 181, 10))


@dataclass(frozen=True)
class RespirationParams:
    """Three-harmonic respiration model.

    ``d(t) = sum_k a_k sin(2 pi k f0 t + psi_k) + drift(t) + noise(t)`` in mm.
    """

    f0: float = 0.25
    a1: float = 1.0
    a2: float = 0.0
    a3: float = 0.0
    psi1: float = 0.0
    psi2: float = 0.0
    psi3: float = 0.0
    drift_sigma: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0.1 <= self.f0 <= 0.5:
            raise ParameterError(f"f0 must lie in [0.1, 0.5] Hz, got {self.f0}")
        if self.a1 < 0 or self.a2 < 0 or self.a3 < 0:
            raise ParameterError("harmonic amplitudes must be non-negative")
        if self.drift_sigma < 0 or self.noise_sigma < 0:
            raise ParameterError("noise and drift scales must be non-negative")

    @property
    def amplitudes(self):
        return np.array([self.a1, self.a2, self.a3])

    @property
    def phases(self):
        return np.array([self.psi1, self.psi2, self.psi3])


def _shape(kind, theta, width):
    """Monotone map of [0, 180] deg onto [0, 1].

    ``linear``: proportional. ``transition``: tanh step centred on 90 deg with
    the given width (deg), rescaled to hit 0, 1/2 and 1 at 0, 90 and 180 deg.
    ``front``: ``1 - (1 - t)^width``, most of the change on the front side.
    """
    t = theta / 180.0
    if kind == "linear":
        return t
    if kind == "transition":
        return 0.5 + 0.5 * np.tanh((theta - 90.0) / width) / np.tanh(90.0 / width)
    if kind == "front":
        return 1.0 - (1.0 - t) ** width
    raise ParameterError(f"unknown profile shape {kind!r}")


@dataclass(frozen=True)
class FeatureAnchor:
    """Front (0 deg) and back (180 deg) mean and spread of one feature."""

    front: float
    back: float
    front_sd: float
    back_sd: float
    shape: str = "linear"
    width: float = 1.0

    def mean(self, theta):
        return self.front + (self.back - self.front) * _shape(self.shape, theta, self.width)


@dataclass(frozen=True)
class ProfileAnchors:
    """Orientation dependence of the respiratory harmonics.

    Means and spreads per feature come from the front-facing and back-facing
    class statistics of measured records (x1 in mm, x2/x4 ratios, x3/x5 rad).
    Spreads are interpolated with the fundamental's transition shape and
    multiplied by ``jitter_scale``: the class spreads already pool the
    orientation trend and subject-to-subject differences, so they overstate
    per-record noise.
    """

    a1: FeatureAnchor = FeatureAnchor(1.09, 0.54, 0.31, 0.19, "transition", 15.0)
    ratio2: FeatureAnchor = FeatureAnchor(0.33, 0.51, 0.15, 0.25, "front", 4.0)
    phase2: FeatureAnchor = FeatureAnchor(-0.57, -0.55, 0.97, 1.18, "transition", 15.0)
    ratio3: FeatureAnchor = FeatureAnchor(0.18, 0.32, 0.08, 0.16, "front", 4.0)
    phase3: FeatureAnchor = FeatureAnchor(-0.22, 0.13, 1.02, 1.55, "transition", 15.0)
    jitter_scale: float = 0.25

    def spread_weight(self, theta):
        return _shape(self.a1.shape, theta, self.a1.width)

    @classmethod
    def linear(cls, jitter_scale=1.0):
        """All anchors interpolated linearly in angle."""
        base = cls()
        lin = {
            name: replace(getattr(base, name), shape="linear", width=1.0)
            for name in ("a1", "ratio2", "phase2", "ratio3", "phase3")
        }
        return cls(**lin, jitter_scale=jitter_scale)


DEFAULT_ANCHORS = ProfileAnchors()


def _check_theta(theta):
    if not 0.0 <= theta <= 180.0:
        raise ParameterError(f"theta must lie in [0, 180] deg, got {theta}")


def orientation_profile(theta, anchors=DEFAULT_ANCHORS, jitter_seed=None, f0=0.25,
                        drift_sigma=0.0, noise_sigma=0.0):
    """Respiration parameters for a body orientation ``theta`` (deg).

    Without ``jitter_seed`` the anchor means are returned and all harmonic
    phases are zero. With a seed, each quantity receives Gaussian jitter
    (amplitudes clamped positive), the breathing phase ``psi1`` is uniform on
    [-pi, pi) and the higher harmonics keep the anchored relative phases
    ``psi_k - psi1``.
    """
    _check_theta(theta)
    a1 = anchors.a1.mean(theta)
    r2 = anchors.ratio2.mean(theta)
    r3 = anchors.ratio3.mean(theta)
    p2 = anchors.phase2.mean(theta)
    p3 = anchors.phase3.mean(theta)
    psi1 = 0.0

    if jitter_seed is not None:
        rng = np.random.default_rng(jitter_seed)
        u = anchors.spread_weight(theta)
        scale = anchors.jitter_scale

        def sd(anchor):
            return scale * (anchor.front_sd + (anchor.back_sd - anchor.front_sd) * u)

        a1 = max(a1 + rng.normal(0.0, sd(anchors.a1)), 0.05 * a1)
        r2 = max(r2 + rng.normal(0.0, sd(anchors.ratio2)), 0.0)
        r3 = max(r3 + rng.normal(0.0, sd(anchors.ratio3)), 0.0)
        p2 = p2 + rng.normal(0.0, sd(anchors.phase2))
        p3 = p3 + rng.normal(0.0, sd(anchors.phase3))
        psi1 = rng.uniform(-np.pi, np.pi)

    # harmonics must stay below the fundamental so the spectral peak is f0
    r2, r3 = min(r2, 0.95), min(r3, 0.95)
    return RespirationParams(
        f0=f0, a1=a1, a2=r2 * a1, a3=r3 * a1,
        psi1=psi1, psi2=psi1 + p2, psi3=psi1 + p3,
        drift_sigma=drift_sigma, noise_sigma=noise_sigma,
    )


def gen_waveform(params, duration_s=DURATION_S, fs_slow=FS_SLOW, seed=None):
    """Sample the respiration model; drift is a Brownian path ending with std ``drift_sigma``."""
    n = int(round(duration_s * fs_slow))
    if n < 64:
        raise ParameterError(f"record of {n} samples is shorter than 64")
    if not fs_slow > 6.0 * params.f0:
        raise ParameterError("fs_slow must exceed 6*f0 to resolve the third harmonic")
    t = np.arange(n) / fs_slow
    k = np.arange(1, 4)[:, None]
    d = params.amplitudes @ np.sin(2.0 * np.pi * k * params.f0 * t + params.phases[:, None])

    if params.drift_sigma > 0 or params.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        steps = rng.normal(0.0, 1.0, n)
        noise = rng.normal(0.0, 1.0, n)
        d = d + params.drift_sigma / np.sqrt(n) * np.cumsum(steps)
        d = d + params.noise_sigma * noise
    return DisplacementWaveform(d, fs_slow, lambda_m=LAMBDA_M)


@dataclass(frozen=True)
class SceneConfig:
    """One radar's view of one record."""

    theta: float = 0.0
    target_range: float = 1.0
    target_azimuth: float = 0.0
    clutter: tuple = ()
    snr_db: float = None
    duration_s: float = DURATION_S
    fs_slow: float = FS_SLOW
    n_range_bins: int = 32
    range_bin_m: float = RANGE_BIN_M
    target_amplitude: float = 1.0

    def __post_init__(self):
        _check_theta(self.theta)
        if self.target_amplitude < 0:
            raise ParameterError("target_amplitude must be non-negative")
        if not self.duration_s > 0:
            raise ParameterError("duration_s must be positive")
        if not self.fs_slow > 0:
            raise ParameterError("fs_slow must be positive")
        if self.n_range_bins < 1 or not self.range_bin_m > 0:
            raise ParameterError("range grid must have positive size and spacing")
        object.__setattr__(self, "clutter", tuple(
            (float(r), float(az), complex(amp)) for r, az, amp in self.clutter
        ))

    @property
    def n_slow(self):
        return int(round(self.duration_s * self.fs_slow))

    def range_bin(self, r):
        idx = int(round(r / self.range_bin_m))
        if not 0 <= idx < self.n_range_bins:
            raise ConfigurationError(
                f"range {r} m outside simulated window "
                f"[0, {(self.n_range_bins - 0.5) * self.range_bin_m:.3f}) m"
            )
        return idx


@dataclass(frozen=True, eq=False)
class RangeProfileCube:
    """Complex range-compressed signals, axes ``[element, slow time, range bin]``."""

    data: np.ndarray
    range_bin_m: float = RANGE_BIN_M
    lambda_m: float = LAMBDA_M
    fs_slow: float = FS_SLOW

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.ndim != 3:
            raise ParameterError(f"cube must be 3-D, got shape {data.shape}")
        if not self.range_bin_m > 0:
            raise ParameterError("range_bin_m must be positive")
        if not np.all(np.isfinite(data)):
            raise ParameterError("cube holds non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n_elements(self):
        return self.data.shape[0]

    @property
    def n_slow(self):
        return self.data.shape[1]

    @property
    def n_range(self):
        return self.data.shape[2]

    @property
    def range_axis(self):
        return np.arange(self.n_range) * self.range_bin_m


def _element_phase(n_elements, spacing_wavelengths, azimuth_deg):
    # conjugate of the beamforming steering phase, so steering to the target azimuth is coherent
    n = np.arange(n_elements)
    return -2.0 * np.pi * spacing_wavelengths * n * np.sin(np.deg2rad(azimuth_deg))


def gen_cube(scene, waveform, array=None, seed=None):
    """Element signals for a scene.

    The target occupies its nearest range bin with
    ``s_n(t) = exp(j [4 pi (r0 + d(t)) / lambda - pi (n-1) sin(phi)])``; clutter
    reflectors add time-constant terms in their own bins; complex white noise
    sets the per-element echo SNR relative to a unit-amplitude target.
    ``snr_db=None`` disables noise.
    """
    array = array or ArrayConfig()
    if len(waveform) != scene.n_slow:
        raise ParameterError(
            f"waveform has {len(waveform)} samples, scene expects {scene.n_slow}"
        )
    lam = array.lambda_m
    data = np.zeros((array.n_elements, scene.n_slow, scene.n_range_bins), dtype=np.complex128)

    r_bin = scene.range_bin(scene.target_range)
    path = scene.target_range + 1e-3 * waveform.samples
    steer = _element_phase(array.n_elements, array.spacing_wavelengths, scene.target_azimuth)
    data[:, :, r_bin] = scene.target_amplitude * np.exp(
        1j * (4.0 * np.pi * path[None, :] / lam + steer[:, None]))

    for r, az, amp in scene.clutter:
        c_bin = scene.range_bin(r)
        phase = 4.0 * np.pi * r / lam + _element_phase(array.n_elements,
                                                       array.spacing_wavelengths, az)
        data[:, :, c_bin] += (amp * np.exp(1j * phase))[:, None]

    if scene.snr_db is not None and np.isfinite(scene.snr_db):
        rng = np.random.default_rng(seed)
        sigma = np.sqrt(10.0 ** (-scene.snr_db / 10.0) / 2.0)
        data += sigma * (rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape))
    return RangeProfileCube(data, scene.range_bin_m, lam, scene.fs_slow)


@dataclass(frozen=True)
class RadarGeometry:
    """Placement of one radar relative to the subject."""

    target_range: float
    target_azimuth: float
    clutter: tuple = ()


DEFAULT_RADARS = (
    RadarGeometry(1.00, 0.0, ((0.62, -35.0, 2.0 + 1.0j), (1.30, 12.0, -3.0j))),
    RadarGeometry(0.97, -24.0, ((0.70, 30.0, 1.5 - 0.5j), (1.25, -8.0, 2.5))),
    RadarGeometry(1.03, 21.0, ((0.58, 5.0, -2.0j), (1.35, -30.0, 3.0 + 1.0j))),
)


@dataclass(frozen=True)
class DatasetConfig:
    """Knobs of the synthetic cohort.

    Each participant draws once a multiplicative amplitude factor
    (lognormal, ``participant_sigma``) and a resting breathing rate uniform
    on ``f0_range``; each record adds ``f0_jitter`` (Hz) to that rate.
    """

    anchors: ProfileAnchors = DEFAULT_ANCHORS
    participant_sigma: float = 0.15
    f0_range: tuple = (0.2, 0.33)
    f0_jitter: float = 0.01
    drift_sigma: float = 0.05
    noise_sigma: float = 0.02
    snr_db: float = 20.0
    duration_s: float = DURATION_S
    fs_slow: float = FS_SLOW
    n_range_bins: int = 32
    target_amplitude: float = 1.0


@dataclass(frozen=True)
class Scene:
    """One labelled record of the synthetic dataset.

    Signals are produced on demand; a 285-scene cohort of cubes would
    otherwise hold several hundred megabytes.
    """

    participant: int
    radar: int
    theta: float
    config: SceneConfig
    params: RespirationParams
    seed: tuple = field(default=())

    def _rng_seeds(self):
        children = np.random.SeedSequence(entropy=self.seed[0], spawn_key=self.seed[1:]).spawn(2)
        return children

    def waveform(self):
        wave_seed, _ = self._rng_seeds()
        return gen_waveform(self.params, self.config.duration_s, self.config.fs_slow, wave_seed)

    def cube(self, array=None, waveform=None):
        _, cube_seed = self._rng_seeds()
        return gen_cube(self.config, waveform or self.waveform(), array, cube_seed)

    @property
    def scene_id(self):
        return f"p{self.participant}_r{self.radar}_t{int(round(self.theta)):03d}"


def gen_dataset(n_participants=5, thetas=DEFAULT_THETAS, radars=DEFAULT_RADARS, seed=0,
                config=None):
    """Labelled scenes for every participant x radar x orientation."""
    config = config or DatasetConfig()
    thetas = list(thetas)
    radars = list(radars)
    if not thetas:
        raise ParameterError("thetas must be non-empty")
    if n_participants < 1 or not radars:
        raise ParameterError("need at least one participant and one radar")
    for theta in thetas:
        _check_theta(theta)

    root = int(seed)
    scenes = []
    for p in range(n_participants):
        prng = np.random.default_rng(np.random.SeedSequence(root, spawn_key=(p,)))
        amp_factor = float(np.exp(prng.normal(0.0, config.participant_sigma)))
        f0_base = float(prng.uniform(*config.f0_range))
        for r, geom in enumerate(radars):
            for i, theta in enumerate(thetas):
                key = (p, r, i)
                srng = np.random.default_rng(np.random.SeedSequence(root, spawn_key=key + (0,)))
                f0 = float(np.clip(f0_base + srng.normal(0.0, config.f0_jitter), 0.1, 0.5))
                base = orientation_profile(
                    float(theta), config.anchors,
                    jitter_seed=np.random.SeedSequence(root, spawn_key=key + (1,)),
                    f0=f0, drift_sigma=config.drift_sigma, noise_sigma=config.noise_sigma,
                )
                params = replace(base, a1=base.a1 * amp_factor, a2=base.a2 * amp_factor,
                                 a3=base.a3 * amp_factor)
                scene_cfg = SceneConfig(
                    theta=float(theta), target_range=geom.target_range,
                    target_azimuth=geom.target_azimuth, clutter=geom.clutter,
                    snr_db=config.snr_db, duration_s=config.duration_s,
                    fs_slow=config.fs_slow, n_range_bins=config.n_range_bins,
                    target_amplitude=config.target_amplitude,
                )
                scenes.append(Scene(p, r, float(theta), scene_cfg, params, (root,) + key + (2,)))
    return scenes
