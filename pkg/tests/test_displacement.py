import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from respire.beamform import RadarImage, form_image
from respire.displacement import (
    ClutterConfig,
    DisplacementExtractor,
    DisplacementWaveform,
    extract_displacement,
    locate_target,
    remove_clutter,
    unwrap,
    waveform_from_csv,
    waveform_to_csv,
    wrap,
)
from respire.exceptions import NoTargetError, ParameterError, UndefinedPhaseError
from respire.scene import RespirationParams, SceneConfig, gen_cube, gen_waveform, orientation_profile


def _image(data, fs=10.0):
    data = np.asarray(data, dtype=complex)
    return RadarImage(data, np.arange(data.shape[0]) * 0.044,
                      np.arange(data.shape[1], dtype=float) - data.shape[1] // 2, fs)


def test_unwrap_worked_example():
    np.testing.assert_allclose(unwrap([3.0, -3.0]), [3.0, 6.283185307179586 - 3.0], atol=1e-12)
    assert unwrap([3.0, -3.0])[1] == pytest.approx(3.2832, abs=1e-4)


def test_constant_quarter_turn_phase_is_0475_mm():
    image = _image(np.full((1, 1, 64), 1j))
    d = extract_displacement(image, (0, 0), lambda_m=3.8e-3)
    np.testing.assert_allclose(d.samples, 3.8 / (4 * np.pi) * np.pi / 2)
    assert d.samples[0] == pytest.approx(0.475, abs=1e-12)


steps = arrays(np.float64, st.integers(2, 300),
               elements=st.floats(-np.pi + 1e-6, np.pi - 1e-6, allow_nan=False))


@given(steps, st.floats(-50, 50))
def test_unwrap_inverts_wrap_up_to_the_first_sample_class(increments, start):
    phi = start + np.concatenate([[0.0], np.cumsum(increments[1:])])
    recovered = unwrap(wrap(phi))
    offset = recovered[0] - phi[0]
    turns = offset / (2 * np.pi)
    assert abs(turns - round(turns)) < 1e-9
    np.testing.assert_allclose(recovered - offset, phi, atol=1e-9)


@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-1e3, 1e3)))
def test_wrap_lands_in_principal_interval(phases):
    w = wrap(phases)
    assert np.all(w > -np.pi - 1e-12) and np.all(w <= np.pi + 1e-12)
    k = (phases - w) / (2 * np.pi)
    np.testing.assert_allclose(k, np.round(k), atol=1e-6)


def test_unwrap_rejects_empty_series():
    with pytest.raises(ParameterError):
        unwrap([])


def test_full_record_clutter_removal_zeroes_static_cells():
    rng = np.random.default_rng(1)
    static = np.repeat(rng.normal(size=(3, 4, 1)) + 1j, 80, axis=2)
    cleaned = remove_clutter(_image(static))
    assert np.allclose(cleaned.data, 0)


def test_sliding_clutter_removal_matches_direct_trailing_mean():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(2, 3, 70)) + 1j * rng.normal(size=(2, 3, 70))
    cleaned = remove_clutter(_image(data), ClutterConfig(window_T_s=1.2, mode="sliding"))
    width = 12
    expected = np.empty_like(data)
    for t in range(70):
        lo = max(0, t + 1 - width)
        expected[..., t] = data[..., t] - data[..., lo:t + 1].mean(axis=-1)
    np.testing.assert_allclose(cleaned.data, expected, atol=1e-12)


def test_clutter_window_longer_than_record_is_rejected():
    with pytest.raises(ParameterError):
        remove_clutter(_image(np.ones((1, 1, 64))), ClutterConfig(window_T_s=100.0))
    with pytest.raises(ParameterError):
        ClutterConfig(mode="sliding")


def test_locate_target_tie_break_prefers_low_indices():
    data = np.zeros((3, 3, 8), dtype=complex)
    data[2, 0] = 1.0
    data[1, 2] = 1.0
    data[1, 1] = 1.0
    (ri, ai), _ = locate_target(_image(data))
    assert (ri, ai) == (1, 1)


def test_locate_target_on_empty_image_fails():
    with pytest.raises(NoTargetError):
        locate_target(_image(np.zeros((2, 2, 8))))


def test_zero_magnitude_samples_are_reported():
    data = np.ones((1, 1, 10), dtype=complex)
    data[0, 0, [3, 7]] = 0
    with pytest.raises(UndefinedPhaseError) as info:
        extract_displacement(_image(data), (0, 0))
    assert info.value.indices == [3, 7]
    assert "3, 7" in str(info.value)


def test_waveform_csv_round_trip(tmp_path):
    d = DisplacementWaveform(np.random.default_rng(3).normal(size=100), 10.0)
    path = tmp_path / "d.csv"
    text = waveform_to_csv(d, path)
    assert text.splitlines()[0] == "t_s,d_mm"
    back = waveform_from_csv(path)
    assert back.fs_slow == 10.0
    np.testing.assert_allclose(back.samples, d.samples, rtol=1e-8)


def _scene_waveform(theta=0.0, f0=0.25, drift=0.0, noise=0.0):
    params = orientation_profile(theta, jitter_seed=11, f0=f0, drift_sigma=drift,
                                 noise_sigma=noise)
    return gen_waveform(params, seed=4)


def test_noise_free_scene_recovers_displacement():
    clutter = ((0.62, -35.0, 2 + 1j), (1.30, 12.0, -3j))
    scene = SceneConfig(theta=0.0, target_range=1.0, target_azimuth=-24.0, clutter=clutter)
    truth = _scene_waveform(drift=0.05)
    image = form_image(gen_cube(scene, truth))
    d = DisplacementExtractor().fit().extract_one(image)
    err = (d.samples - d.samples.mean()) - (truth.samples - truth.samples.mean())
    assert np.sqrt(np.mean(err**2)) <= 1e-6
    assert d.origin_cell == pytest.approx((scene.range_bin(1.0) * 0.044, -24.0))


def test_clutter_removed_phase_source_distorts_small_motion():
    scene = SceneConfig(theta=0.0, target_range=1.0)
    truth = _scene_waveform()
    image = form_image(gen_cube(scene, truth))
    raw = DisplacementExtractor(phase_source="raw").extract_one(image)
    suppressed = DisplacementExtractor(phase_source="clutter_removed").extract_one(image)
    def spread(x):
        return np.ptp(x.samples)
    assert spread(raw) == pytest.approx(spread(truth), rel=1e-6)
    assert abs(spread(suppressed) - spread(truth)) > 0.05


def test_missing_target_echo_is_not_mistaken_for_a_target():
    scene = SceneConfig(target_amplitude=0.0, snr_db=20.0,
                        clutter=((0.62, -35.0, 2 + 1j),))
    image = form_image(gen_cube(scene, _scene_waveform(), seed=0))
    with pytest.raises(NoTargetError):
        DisplacementExtractor().extract_one(image)


def test_noisy_scene_still_passes_detection():
    scene = SceneConfig(target_range=1.0, snr_db=20.0)
    image = form_image(gen_cube(scene, _scene_waveform(noise=0.02, drift=0.05), seed=0))
    d = DisplacementExtractor().extract_one(image)
    assert len(d) == 400


def test_extractor_parameters_are_validated():
    with pytest.raises(ParameterError):
        DisplacementExtractor(phase_source="magic").fit()
    assert DisplacementExtractor(clutter_mode="sliding", clutter_window_s=5.0).get_params()[
        "clutter_window_s"] == 5.0


def test_displacement_sign_follows_range():
    # increasing range gives increasing phase and positive displacement
    samples = np.linspace(0.0, 0.5, 400)
    scene = SceneConfig()
    image = form_image(gen_cube(scene, DisplacementWaveform(samples, 10.0)))
    d = DisplacementExtractor().extract_one(image)
    assert d.samples[-1] - d.samples[0] == pytest.approx(0.5, abs=1e-9)


def test_respiration_params_roundtrip_through_chain():
    params = RespirationParams(f0=0.3, a1=1.2, a2=0.2, a3=0.1)
    truth = gen_waveform(params)
    image = form_image(gen_cube(SceneConfig(), truth))
    d = DisplacementExtractor().transform([image])[0]
    np.testing.assert_allclose(d.samples - d.samples[0], truth.samples - truth.samples[0],
                               atol=1e-9)
