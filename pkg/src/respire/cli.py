"""Command-line driver: ``respire simulate | extract | train | evaluate | report``.

Every stage reads and writes files so intermediates can be inspected. Flags
mirror the leaves of the pipeline config (``simulate.snr_db`` becomes
``--snr-db``); ``--config`` loads a JSON override file first.

Exit codes: 0 success, 1 the stage ran but its data were unusable (for
``extract``: every scene failed), 2 configuration or usage error.
"""

import argparse
import json
import logging
import os
import sys

from .containers import write_cube
from .displacement import waveform_to_csv
from .evaluation import format_summary, write_bundle
from .exceptions import ConfigurationError, RespireError
from .features import read_feature_table, write_feature_table
from .pipeline import (
    DEFAULT_CONFIG,
    array_config,
    config_hash,
    evaluate_table,
    features_from_files,
    load_config,
    make_scenes,
    run_tasks,
    sha256_text,
    train_model,
)

log = logging.getLogger("respire")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
MANIFEST = "manifest.json"


class StageError(Exception):
    """A stage failed on its input data (exit code 1)."""


def _dump(doc):
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _read_text(path):
    with open(path, newline="") as fh:
        return fh.read()


def _provenance_path(features_csv):
    return os.path.splitext(features_csv)[0] + ".provenance.json"


# -- flags --------------------------------------------------------------------

def _float_or_none(text):
    return None if text.lower() in ("none", "null") else float(text)


def _bool(text):
    value = text.lower()
    if value in ("1", "true", "yes"):
        return True
    if value in ("0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true/false, got {text!r}")


def _list_of(item):
    def parse(text):
        return [item(v.strip()) for v in text.split(",") if v.strip()]
    return parse


def _featuresets(text):
    return [_list_of(str)(part) for part in text.split(";") if part.strip()]


def _parser_for(default):
    if isinstance(default, bool):
        return _bool, "BOOL"
    if isinstance(default, int):
        return int, "INT"
    if isinstance(default, float) or default is None:
        return _float_or_none, "NUM"
    if isinstance(default, str):
        return str, "STR"
    if default and isinstance(default[0], list):
        return _featuresets, "A,B;C"
    if default and isinstance(default[0], str):
        return _list_of(str), "A,B"
    return _list_of(float), "X,Y"


def _leaves(doc, prefix=()):
    for key, value in doc.items():
        if isinstance(value, dict):
            yield from _leaves(value, prefix + (key,))
        elif key != "format_version":
            yield prefix + (key,), value


FLAG_PATHS = {"--" + path[-1].replace("_", "-"): path for path, _ in _leaves(DEFAULT_CONFIG)}


def _add_config_flags(parser):
    parser.add_argument("--config", metavar="PATH", help="JSON config overriding the defaults")
    groups = {}
    for flag, path in FLAG_PATHS.items():
        default = DEFAULT_CONFIG
        for key in path:
            default = default[key]
        group_name = path[0] if len(path) > 1 else "general"
        if group_name not in groups:
            groups[group_name] = parser.add_argument_group(f"{group_name} settings")
        kind, metavar = (int, "INT") if path == ("seed",) else _parser_for(default)
        groups[group_name].add_argument(
            flag, dest="cfg:" + ".".join(path), type=kind, metavar=metavar,
            default=argparse.SUPPRESS, help=f"{'.'.join(path)} (default {default!r})",
        )


def _overrides(args):
    overrides = {}
    for name, value in vars(args).items():
        if not name.startswith("cfg:"):
            continue
        node = overrides
        *parents, leaf = name[4:].split(".")
        for key in parents:
            node = node.setdefault(key, {})
        node[leaf] = value
    return overrides


def build_parser():
    parser = argparse.ArgumentParser(
        prog="respire",
        description="Body-orientation estimation from radar-measured respiration.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "simulate": "generate a synthetic dataset (RPC1 cubes, displacement CSVs, manifest)",
        "extract": "compute the feature table of a dataset",
        "train": "fit the two-step model on a feature table",
        "evaluate": "cross-validated benchmark of the estimation methods",
        "report": "print a text summary of an evaluation report",
    }
    for name, text in helps.items():
        _add_config_flags(sub.add_parser(name, help=text, description=text))
    return parser


# -- stages -------------------------------------------------------------------

def _simulate_task(args):
    (scene, cube_path, csv_path), config = args
    waveform = scene.waveform()
    waveform_to_csv(waveform, csv_path)
    write_cube(scene.cube(array_config(config), waveform), cube_path)
    return None


def cmd_simulate(config):
    out = config["io"]["dataset_dir"]
    scenes = make_scenes(config)
    try:
        os.makedirs(os.path.join(out, "cubes"), exist_ok=True)
        os.makedirs(os.path.join(out, "displacement"), exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create dataset directory {out}: {exc}") from None

    entries, work = [], []
    for scene in scenes:
        cube_rel = f"cubes/{scene.scene_id}.rpc"
        csv_rel = f"displacement/{scene.scene_id}.csv"
        work.append((scene, os.path.join(out, cube_rel), os.path.join(out, csv_rel)))
        p = scene.params
        entries.append({
            "id": scene.scene_id,
            "participant": scene.participant,
            "radar": scene.radar,
            "theta_deg": scene.theta,
            "cube": cube_rel,
            "displacement_csv": csv_rel,
            "seed": list(scene.seed),
            "target_range_m": scene.config.target_range,
            "target_azimuth_deg": scene.config.target_azimuth,
            "respiration": {
                "f0_hz": p.f0, "a1_mm": p.a1, "a2_mm": p.a2, "a3_mm": p.a3,
                "psi1_rad": p.psi1, "psi2_rad": p.psi2, "psi3_rad": p.psi3,
                "drift_sigma_mm": p.drift_sigma, "noise_sigma_mm": p.noise_sigma,
            },
        })
    try:
        run_tasks(_simulate_task, work, config, config["jobs"])
    except OSError as exc:
        raise ConfigurationError(f"cannot write dataset under {out}: {exc}") from None

    manifest = {
        "artifact": "dataset-manifest",
        "format_version": config["format_version"],
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "config": {k: v for k, v in config.items() if k not in ("io", "jobs")},
        "n_scenes": len(entries),
        "scenes": entries,
    }
    _write_text(os.path.join(out, MANIFEST), _dump(manifest))
    log.info("simulate: wrote %d scenes to %s", len(entries), out)
    return EXIT_OK


def _load_manifest(dataset_dir):
    if not os.path.isdir(dataset_dir):
        raise ConfigurationError(f"dataset directory {dataset_dir} does not exist")
    path = os.path.join(dataset_dir, MANIFEST)
    if not os.path.exists(path):
        leftovers = [f for f in os.listdir(dataset_dir) if f != ".gitkeep"]
        if leftovers:
            raise ConfigurationError(f"{dataset_dir} has no {MANIFEST}")
        return None, ""
    text = _read_text(path)
    try:
        manifest = json.loads(text)
        scenes = manifest["scenes"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed manifest {path}: {exc}") from None
    return scenes, text


def cmd_extract(config):
    dataset_dir = config["io"]["dataset_dir"]
    out = config["io"]["features_csv"]
    scenes, manifest_text = _load_manifest(dataset_dir)
    scenes = scenes or []
    if not scenes:
        log.warning("extract: dataset %s holds no scenes; writing an empty table", dataset_dir)

    entries = [(int(s["participant"]), int(s["radar"]), float(s["theta_deg"]),
                os.path.join(dataset_dir, s["cube"])) for s in scenes]
    table, messages = features_from_files(entries, config, config["jobs"])
    csv_text = write_feature_table(table, out)

    errors = []
    for scene, status, message in zip(scenes, table.status, messages):
        if status != "ok":
            log.warning("extract: %s (%s): %s", scene["id"], status, message)
            errors.append({"id": scene["id"], "file": scene["cube"], "status": status,
                           "message": message})
    n_valid = int(table.valid.sum())
    provenance = {
        "artifact": "feature-table-provenance",
        "config_hash": config_hash(config),
        "seed": config["seed"],
        "manifest_hash": sha256_text(manifest_text) if manifest_text else None,
        "dataset_hash": sha256_text(csv_text),
        "n_rows": len(table),
        "n_valid": n_valid,
        "errors": errors,
    }
    _write_text(_provenance_path(out), _dump(provenance))
    log.info("extract: %d rows (%d valid) written to %s", len(table), n_valid, out)
    if scenes and n_valid == 0:
        log.error("extract: every scene failed")
        return EXIT_PARTIAL
    return EXIT_OK


def _load_table(config):
    path = config["io"]["features_csv"]
    try:
        text = _read_text(path)
    except OSError as exc:
        raise ConfigurationError(f"cannot read feature table {path}: {exc}") from None
    try:
        table = read_feature_table(path)
    except (RespireError, ValueError, IndexError) as exc:
        raise StageError(f"malformed feature table {path}: {exc}") from None
    return table, sha256_text(text)


def cmd_train(config):
    table, dataset_hash = _load_table(config)
    model = train_model(table, config, dataset_hash)
    _write_text(config["io"]["model_json"], model.to_json())
    log.info("train: model written to %s (beta1 = %.4f)", config["io"]["model_json"],
             model.beta[1])
    return EXIT_OK


def cmd_evaluate(config):
    table, dataset_hash = _load_table(config)
    report = evaluate_table(table, config, dataset_hash)
    try:
        write_bundle(report, config["io"]["report_dir"])
    except OSError as exc:
        raise ConfigurationError(f"cannot write report bundle: {exc}") from None
    log.info("evaluate: %s", format_summary(report.methods))
    return EXIT_OK


def format_report(doc):
    """Human-readable summary of a report JSON document."""
    meta = doc.get("metadata", {})
    conf = doc["confusion"]
    counts, pct = conf["counts"], conf["percent"]
    lines = [
        f"config {meta.get('config_hash', '?')}  seed {meta.get('seed', '?')}",
        f"dataset {meta.get('dataset_hash', '?')}  n={meta.get('n_samples', '?')}  "
        f"k={meta.get('k', '?')}",
        format_summary(doc["methods"]),
        "",
        "step-1 confusion (rows estimated, columns actual; % of actual):",
        f"  front  {counts[0][0]:4d} ({pct[0][0]:5.1f}%)  {counts[0][1]:4d} ({pct[0][1]:5.1f}%)",
        f"  back   {counts[1][0]:4d} ({pct[1][0]:5.1f}%)  {counts[1][1]:4d} ({pct[1][1]:5.1f}%)",
        f"  accuracy {100 * conf['accuracy']:.1f}%  "
        f"balanced {100 * conf['balanced_accuracy']:.1f}%",
        "",
        "AUC: " + ", ".join(f"{k} {v:.3f}" for k, v in sorted(doc["auc_by_featureset"].items())),
        "p-values: " + ", ".join(f"{k} {v:.3g}" for k, v in sorted(doc["pvalues"].items())),
    ]
    if meta.get("train_equals_test"):
        lines.append("warning: k=1, training and test sets coincide")
    return "\n".join(lines) + "\n"


def cmd_report(config):
    report_dir = config["io"]["report_dir"]
    path = os.path.join(report_dir, "report.json")
    try:
        doc = json.loads(_read_text(path))
    except OSError as exc:
        raise ConfigurationError(f"cannot read report {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise StageError(f"malformed report {path}: {exc}") from None
    text = format_report(doc)
    _write_text(os.path.join(report_dir, "report.txt"), text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="respire %(levelname)s %(message)s", stream=sys.stderr)
    try:
        config = load_config(args.config, _overrides(args))
        return COMMANDS[args.command](config)
    except ConfigurationError as exc:
        log.error("%s: %s", args.command, exc)
        return EXIT_CONFIG
    except (StageError, RespireError) as exc:
        log.error("%s: %s", args.command, exc)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
