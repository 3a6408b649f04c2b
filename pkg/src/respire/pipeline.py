"""Pipeline configuration and the in-process signal chain shared by the CLI.

A :data:`DEFAULT_CONFIG`-shaped JSON document drives every stage. It is
validated against :data:`CONFIG_SCHEMA` (unknown keys rejected) before any
work starts, and its canonical hash is embedded in every artifact.
"""

import copy
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

import jsonschema
import numpy as np

from ._validation import FEATURE_NAMES, check_mask
from .beamform import ArrayConfig, form_image
from .containers import read_cube
from .displacement import DisplacementExtractor
from .evaluation import BenchmarkConfig, run_benchmark
from .exceptions import (
    ConfigurationError,
    ContainerError,
    DegenerateFundamentalError,
    NoPeakError,
    NoTargetError,
    ParameterError,
    RespireError,
    UndefinedPhaseError,
)
from .features import FeatureTable, extract_features, feature_table_to_csv
from .model import fit_hier
from .scene import DEFAULT_RADARS, DEFAULT_THETAS, DatasetConfig, ProfileAnchors, gen_dataset

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
SEED_ENV = "RESPIRE_SEED"
DEFAULT_SEED = 0

DEFAULT_CONFIG = {
    "format_version": FORMAT_VERSION,
    "seed": None,
    "jobs": 1,
    "simulate": {
        "participants": 5,
        "radars": len(DEFAULT_RADARS),
        "thetas": [float(t) for t in DEFAULT_THETAS],
        "duration_s": 40.0,
        "fs_slow_hz": 10.0,
        "n_range_bins": 32,
        "snr_db": 20.0,
        "noise_sigma_mm": 0.02,
        "drift_sigma_mm": 0.05,
        "participant_sigma": 0.15,
        "f0_range_hz": [0.2, 0.33],
        "f0_jitter_hz": 0.01,
        "profile": "shaped",
        "jitter_scale": 0.25,
        "target_amplitude": 1.0,
    },
    "array": {
        "n_elements": 12,
        "spacing_wavelengths": 0.5,
        "lambda_m": 3.8e-3,
        "taper_sll_db": -30.0,
        "taper_nbar": 4,
    },
    "beamform": {"azimuth_min_deg": -60.0, "azimuth_max_deg": 60.0, "azimuth_step_deg": 1.0},
    "displacement": {
        "clutter_mode": "full-record",
        "clutter_window_s": None,
        "phase_source": "raw",
        "detection_ratio": 10.0,
    },
    "features": {"window": "hann", "zero_pad_factor": 8, "f0_band_hz": [0.1, 0.5]},
    "model": {
        "gamma": 0.05,
        "step1_features": ["x1"],
        "step2_features": ["x1", "x2", "x4", "x5"],
        "partition": "truth",
        "penalize_intercept": True,
        "class_boundary_deg": 90.0,
    },
    "evaluate": {
        "k": 5,
        "methods": ["a", "b", "c", "d"],
        "roc_featuresets": [["x1"], ["x2"], ["x4"], ["x5"], ["x1", "x2", "x4", "x5"]],
    },
    "io": {
        "dataset_dir": "dataset",
        "features_csv": "features.csv",
        "model_json": "model.json",
        "report_dir": "report",
    },
}


def _obj(properties):
    return {
        "type": "object",
        "properties": properties,
        "additionalProperties": False,
        "required": list(properties),
    }


_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_MASK = {
    "type": "array",
    "items": {"enum": list(FEATURE_NAMES)},
    "minItems": 1,
    "uniqueItems": True,
}

CONFIG_SCHEMA = _obj({
    "format_version": {"const": FORMAT_VERSION},
    "seed": {"type": ["integer", "null"], "minimum": 0},
    "jobs": _POS_INT,
    "simulate": _obj({
        "participants": _POS_INT,
        "radars": {"type": "integer", "minimum": 1, "maximum": len(DEFAULT_RADARS)},
        "thetas": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 180},
                   "minItems": 1},
        "duration_s": _POS,
        "fs_slow_hz": _POS,
        "n_range_bins": _POS_INT,
        "snr_db": {"type": ["number", "null"]},
        "noise_sigma_mm": _NONNEG,
        "drift_sigma_mm": _NONNEG,
        "participant_sigma": _NONNEG,
        "f0_range_hz": {"type": "array", "items": {"type": "number", "minimum": 0.1,
                                                   "maximum": 0.5},
                        "minItems": 2, "maxItems": 2},
        "f0_jitter_hz": _NONNEG,
        "profile": {"enum": ["shaped", "linear"]},
        "jitter_scale": _NONNEG,
        "target_amplitude": _NONNEG,
    }),
    "array": _obj({
        "n_elements": _POS_INT,
        "spacing_wavelengths": _POS,
        "lambda_m": _POS,
        "taper_sll_db": {"type": "number", "exclusiveMaximum": 0},
        "taper_nbar": _POS_INT,
    }),
    "beamform": _obj({
        "azimuth_min_deg": {"type": "number", "exclusiveMinimum": -90},
        "azimuth_max_deg": {"type": "number", "exclusiveMaximum": 90},
        "azimuth_step_deg": _POS,
    }),
    "displacement": _obj({
        "clutter_mode": {"enum": ["full-record", "sliding"]},
        "clutter_window_s": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "phase_source": {"enum": ["raw", "clutter_removed"]},
        "detection_ratio": _NONNEG,
    }),
    "features": _obj({
        "window": {"enum": ["hann", "none"]},
        "zero_pad_factor": _POS_INT,
        "f0_band_hz": {"type": "array", "items": _POS, "minItems": 2, "maxItems": 2},
    }),
    "model": _obj({
        "gamma": _NONNEG,
        "step1_features": _MASK,
        "step2_features": _MASK,
        "partition": {"enum": ["truth", "classifier"]},
        "penalize_intercept": {"type": "boolean"},
        "class_boundary_deg": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 180},
    }),
    "evaluate": _obj({
        "k": _POS_INT,
        "methods": {"type": "array", "items": {"enum": ["a", "b", "c", "d"]}, "minItems": 1,
                    "uniqueItems": True},
        "roc_featuresets": {"type": "array", "items": _MASK},
    }),
    "io": _obj({
        "dataset_dir": {"type": "string"},
        "features_csv": {"type": "string"},
        "model_json": {"type": "string"},
        "report_dir": {"type": "string"},
    }),
})


def _merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_config(config):
    """Raise :class:`ConfigurationError` unless ``config`` satisfies the schema."""
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"invalid config at {where}: {exc.message}") from None
    lo, hi = config["features"]["f0_band_hz"]
    if not lo < hi:
        raise ConfigurationError("features.f0_band_hz must be increasing")
    lo, hi = config["simulate"]["f0_range_hz"]
    if not lo <= hi:
        raise ConfigurationError("simulate.f0_range_hz must be non-decreasing")
    bf = config["beamform"]
    if not bf["azimuth_min_deg"] <= bf["azimuth_max_deg"]:
        raise ConfigurationError("beamform azimuth range is empty")
    if config["displacement"]["clutter_mode"] == "sliding" \
            and config["displacement"]["clutter_window_s"] is None:
        raise ConfigurationError("sliding clutter removal needs displacement.clutter_window_s")
    return config


def load_config(path=None, overrides=None, environ=None):
    """Defaults, then the JSON file at ``path``, then ``overrides``; validated.

    The seed falls back to the ``RESPIRE_SEED`` environment variable and then
    to 0 when neither the file nor the overrides set it.
    """
    environ = os.environ if environ is None else environ
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigurationError("config document must be a JSON object")
        config = _merge(config, doc)
    if overrides:
        config = _merge(config, overrides)
    if config.get("seed") is None:
        raw = environ.get(SEED_ENV)
        if raw is not None and raw.strip() != "":
            try:
                config["seed"] = int(raw)
            except ValueError:
                raise ConfigurationError(f"{SEED_ENV}={raw!r} is not an integer") from None
        else:
            config["seed"] = DEFAULT_SEED
    return _normalize(validate_config(config), DEFAULT_CONFIG)


def _normalize(config, defaults):
    # ints where the defaults hold floats would otherwise change the config hash
    out = {}
    for key, value in config.items():
        default = defaults.get(key)
        if isinstance(value, dict):
            out[key] = _normalize(value, default)
        elif isinstance(default, float) and isinstance(value, int):
            out[key] = float(value)
        elif isinstance(value, list) and value and all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value) \
                and isinstance(default, list) and any(isinstance(v, float) for v in default):
            out[key] = [float(v) for v in value]
        else:
            out[key] = value
    return out


def canonical_json(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(config):
    """SHA-256 of the settings that determine outputs (io paths and jobs excluded)."""
    relevant = {k: v for k, v in config.items() if k not in ("io", "jobs")}
    return hashlib.sha256(canonical_json(relevant).encode()).hexdigest()


def sha256_text(text):
    return hashlib.sha256(text.encode()).hexdigest()


def dataset_config(config):
    sim = config["simulate"]
    anchors = ProfileAnchors() if sim["profile"] == "shaped" else ProfileAnchors.linear()
    anchors = ProfileAnchors(**{**{n: getattr(anchors, n) for n in
                                   ("a1", "ratio2", "phase2", "ratio3", "phase3")},
                                "jitter_scale": sim["jitter_scale"]})
    return DatasetConfig(
        anchors=anchors,
        participant_sigma=sim["participant_sigma"],
        f0_range=tuple(sim["f0_range_hz"]),
        f0_jitter=sim["f0_jitter_hz"],
        drift_sigma=sim["drift_sigma_mm"],
        noise_sigma=sim["noise_sigma_mm"],
        snr_db=sim["snr_db"],
        duration_s=sim["duration_s"],
        fs_slow=sim["fs_slow_hz"],
        n_range_bins=sim["n_range_bins"],
        target_amplitude=sim["target_amplitude"],
    )


def array_config(config, n_elements=None, lambda_m=None):
    arr = config["array"]
    return ArrayConfig(
        n_elements=arr["n_elements"] if n_elements is None else n_elements,
        spacing_wavelengths=arr["spacing_wavelengths"],
        lambda_m=arr["lambda_m"] if lambda_m is None else lambda_m,
        taper_sll_db=arr["taper_sll_db"],
        taper_nbar=arr["taper_nbar"],
    )


def make_scenes(config):
    sim = config["simulate"]
    try:
        return gen_dataset(
            n_participants=sim["participants"],
            thetas=sim["thetas"],
            radars=DEFAULT_RADARS[:sim["radars"]],
            seed=config["seed"],
            config=dataset_config(config),
        )
    except (ParameterError, ConfigurationError) as exc:
        raise ConfigurationError(str(exc)) from None


def azimuth_grid(config):
    bf = config["beamform"]
    n = int(np.floor((bf["azimuth_max_deg"] - bf["azimuth_min_deg"]) / bf["azimuth_step_deg"]
                     + 1e-9)) + 1
    return bf["azimuth_min_deg"] + bf["azimuth_step_deg"] * np.arange(n)


def benchmark_config(config):
    model, ev = config["model"], config["evaluate"]
    return BenchmarkConfig(
        k=ev["k"],
        seed=config["seed"],
        methods=tuple(ev["methods"]),
        gamma=model["gamma"],
        step1_features=check_mask(model["step1_features"]),
        harmonic_features=check_mask(model["step2_features"]),
        partition=model["partition"],
        penalize_intercept=model["penalize_intercept"],
        class_boundary=model["class_boundary_deg"],
        roc_featuresets=tuple(check_mask(fs) for fs in ev["roc_featuresets"]),
    )


# Exceptions that leave a scene without a usable respiratory fundamental.
_NO_FUNDAMENTAL = (NoTargetError, NoPeakError, DegenerateFundamentalError)


def status_for(exc):
    """Row status tag for a per-scene failure."""
    if isinstance(exc, _NO_FUNDAMENTAL):
        return "degenerate-fundamental"
    if isinstance(exc, UndefinedPhaseError):
        return "undefined-phase"
    if isinstance(exc, (ContainerError, OSError)):
        return "corrupt-container"
    return "invalid-input"


def cube_features(cube, config):
    """Beamform, locate, extract d(t) and compute the harmonic features of one cube."""
    array = array_config(config, n_elements=cube.n_elements, lambda_m=cube.lambda_m)
    image = form_image(cube, azimuth_grid(config), array)
    disp = config["displacement"]
    extractor = DisplacementExtractor(
        clutter_mode=disp["clutter_mode"],
        clutter_window_s=disp["clutter_window_s"],
        phase_source=disp["phase_source"],
        lambda_m=cube.lambda_m,
        detection_ratio=disp["detection_ratio"],
    ).fit()
    waveform = extractor.extract_one(image)
    feat = config["features"]
    return extract_features(waveform, feat["window"], feat["zero_pad_factor"],
                            tuple(feat["f0_band_hz"]))


def _guarded(cube_source, config):
    """``(FeatureVector | None, status, message)``; never raises for per-scene problems."""
    try:
        cube = cube_source()
        return cube_features(cube, config), "ok", ""
    except (RespireError, OSError) as exc:
        return None, status_for(exc), f"{type(exc).__name__}: {exc}"


def _scene_task(args):
    scene, config = args
    return _guarded(lambda: scene.cube(array_config(config)), config)


def _file_task(args):
    path, config = args
    return _guarded(lambda: read_cube(path), config)


def run_tasks(task, items, config, jobs):
    payload = [(item, config) for item in items]
    if jobs <= 1 or len(payload) <= 1:
        return [task(p) for p in payload]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map keeps submission order, so results never depend on scheduling
        return list(pool.map(task, payload, chunksize=max(1, len(payload) // (4 * jobs))))


def features_from_scenes(scenes, config, jobs=1):
    """Feature table of simulated scenes, computed in memory."""
    results = run_tasks(_scene_task, scenes, config, jobs)
    rows = [(s.participant, s.radar, s.theta, fv, status)
            for s, (fv, status, _) in zip(scenes, results)]
    return FeatureTable.from_rows(rows), [msg for _, _, msg in results]


def features_from_files(entries, config, jobs=1):
    """Feature table from ``(participant, radar, theta, cube_path)`` entries."""
    results = run_tasks(_file_task, [e[3] for e in entries], config, jobs)
    rows = [(p, r, t, fv, status) for (p, r, t, _), (fv, status, _) in zip(entries, results)]
    return FeatureTable.from_rows(rows), [msg for _, _, msg in results]


def train_model(table, config, dataset_hash):
    """Hierarchical model fitted on the valid rows, with provenance attached."""
    valid = table.subset(table.valid)
    m = config["model"]
    model = fit_hier(valid.X, valid.theta, check_mask(m["step1_features"]),
                     check_mask(m["step2_features"]), m["gamma"], m["class_boundary_deg"],
                     m["partition"], m["penalize_intercept"])
    model.provenance = {
        "config_hash": config_hash(config),
        "dataset_hash": dataset_hash,
        "n_samples": len(valid),
        "seed": config["seed"],
    }
    return model


def evaluate_table(table, config, dataset_hash):
    report = run_benchmark(table, benchmark_config(config))
    report.metadata.update({
        "config_hash": config_hash(config),
        "dataset_hash": dataset_hash,
        "seed": config["seed"],
    })
    return report


def run_pipeline(config, jobs=None):
    """Simulate, extract, train and evaluate in one process, without files.

    Returns a dict with the feature table, its CSV text and hash, the model
    and the evaluation report.
    """
    jobs = config["jobs"] if jobs is None else jobs
    table, _ = features_from_scenes(make_scenes(config), config, jobs)
    csv_text = feature_table_to_csv(table)
    dataset_hash = sha256_text(csv_text)
    return {
        "table": table,
        "features_csv": csv_text,
        "dataset_hash": dataset_hash,
        "model": train_model(table, config, dataset_hash),
        "report": evaluate_table(table, config, dataset_hash),
    }
