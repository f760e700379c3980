"""Command-line entry point: ``ineeg synth | extract | ablate | report``.

All commands share one experiment directory (``--out``)::

    <out>/recordings/<subject>/   recording bundles written by ``synth``
    <out>/features/               feature store written by ``extract``
    <out>/results/                grid rows and summary tables from ``ablate``

Exit codes: 0 success, 1 usage or configuration error, 2 when some grid
cells failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .ablation import (
    best_per_model_window,
    read_results_jsonl,
    render_csv,
    render_subject_table,
    render_table,
    run_ablation,
    write_results_jsonl,
)
from .data_model import CANONICAL_BANDS, MANIFEST_NAME, PRECISIONS, TRIALS_NAME, RecordingFormatError, \
    find_bundles, load_recording, save_recording, validate_recording
from .dataset import CANONICAL_WINDOWS, Condition, FeatureMask, enumerate_feature_masks
from .evaluation import DEFAULT_K, DEFAULT_REPEATS
from .features import CURVE_LENGTH_MODES, FeaturizedRecording, featurize_recording
from .models import DEFAULT_MODELS, ModelFamily, ModelSpec
from .preprocess import default_filter
from .synth import SynthProfile, generate_recording

logger = logging.getLogger("ineeg")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2

INDEX_NAME = "index.json"
RESULTS_NAME = "results.jsonl"


class ConfigError(Exception):
    """Invalid configuration, arguments or missing inputs (exit code 1)."""


@dataclass
class ExperimentConfig:
    out: str = "experiment"
    input: str | None = None  # recording bundles; defaults to <out>/recordings
    conditions: list = field(default_factory=lambda: [c.value for c in Condition])
    windows: list = field(default_factory=lambda: list(CANONICAL_WINDOWS))
    models: list = field(default_factory=lambda: [{"family": f.value, "params": {}} for f in DEFAULT_MODELS])
    masks: object = "all"
    k: int = DEFAULT_K
    seed: int = 0
    repeats: int = DEFAULT_REPEATS
    pairing: str = "fold"
    balance_scope: str = "condition"
    curve_length: str = "line"
    jobs: int | None = None  # None: all available processors
    precision: str = "float32"
    synth: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.k, int) or self.k < 2:
            raise ConfigError(f"k must be an integer >= 2, got {self.k!r}")
        if not self.windows or not all(isinstance(w, int) and w >= 1 for w in self.windows):
            raise ConfigError(f"windows must be a non-empty list of positive integers, got {self.windows!r}")
        if not self.conditions:
            raise ConfigError("conditions must not be empty")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.pairing not in ("fold", "sample"):
            raise ConfigError("pairing must be 'fold' or 'sample'")
        if self.balance_scope not in ("condition", "subject"):
            raise ConfigError("balance_scope must be 'condition' or 'subject'")
        if self.curve_length not in CURVE_LENGTH_MODES:
            raise ConfigError(f"curve_length must be one of {CURVE_LENGTH_MODES}")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            self.condition_list()
            self.mask_list()
            self.model_specs()
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def condition_list(self) -> list[Condition]:
        return [Condition.parse(c) for c in self.conditions]

    def mask_list(self) -> list[FeatureMask]:
        if self.masks == "all":
            return enumerate_feature_masks()
        if isinstance(self.masks, str) or not self.masks:
            raise ValueError(f"masks must be 'all' or a non-empty list of mask names, got {self.masks!r}")
        return [FeatureMask.from_name(m) for m in self.masks]

    def model_specs(self) -> list[ModelSpec]:
        specs = []
        for m in self.models:
            if isinstance(m, str):
                m = {"family": m}
            specs.append(ModelSpec(ModelFamily(m["family"]), dict(m.get("params", {})), self.seed))
        if not specs:
            raise ValueError("models must not be empty")
        return specs

    def synth_profile(self) -> SynthProfile:
        try:
            return SynthProfile.from_dict({"seed": self.seed, **self.synth})
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid synth profile: {exc}") from None

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def recordings_dir(self) -> Path:
        return Path(self.input) if self.input else self.out_dir / "recordings"

    @property
    def features_dir(self) -> Path:
        return self.out_dir / "features"

    @property
    def results_dir(self) -> Path:
        return self.out_dir / "results"


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file {args.config} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    if args.out is not None:
        data["out"] = args.out
    if args.seed is not None:
        data["seed"] = args.seed
    if args.jobs is not None:
        data["jobs"] = args.jobs
    if args.condition:
        data["conditions"] = [c for v in args.condition for c in _split(v)]
    if args.windows:
        try:
            data["windows"] = [int(w) for w in _split(args.windows)]
        except ValueError:
            raise ConfigError(f"--windows expects comma-separated integers, got {args.windows!r}") from None
    if args.masks:
        data["masks"] = "all" if args.masks.strip() == "all" else _split(args.masks)
    if args.models:
        configured = {m["family"] if isinstance(m, dict) else m: m for m in data.get("models", [])}
        data["models"] = [configured.get(name, {"family": name}) for name in _split(args.models)]
    return ExperimentConfig.from_dict(data)


# -------------------------------------------------------------------- commands


def cmd_synth(cfg: ExperimentConfig) -> int:
    profile = cfg.synth_profile()
    root = cfg.recordings_dir
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {root}: {exc}") from None
    for i in range(profile.n_subjects):
        rec = generate_recording(profile, i)
        try:
            save_recording(rec, root / rec.subject_id, cfg.precision)
        except OSError as exc:
            raise ConfigError(f"cannot write bundle under {root}: {exc}") from None
        counts = rec.label_counts()
        print(f"{rec.subject_id}: {len(rec.trials)} trials, " + ", ".join(
            f"{label.value} {n}" for label, n in counts.items()))
    (root / "profile.json").write_text(json.dumps(profile.to_dict(), indent=2, sort_keys=True) + "\n")
    print(f"wrote {profile.n_subjects} recording bundles to {root}")
    return EXIT_OK


def extraction_settings(cfg: ExperimentConfig, rate: float) -> dict:
    """Everything besides the input bytes that determines the feature store."""
    filt = default_filter(rate)
    return {
        "code_version": __version__,
        "filter": {"kind": filt.kind, "order": filt.order, "low_hz": filt.low_hz, "high_hz": filt.high_hz,
                   "rate": filt.rate, "sos": filt.sos.tolist()},
        "bands": [[b.name, b.low_hz, b.high_hz] for b in CANONICAL_BANDS],
        "curve_length": cfg.curve_length,
    }


def bundle_hash(bundle: Path, settings: dict) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(settings, sort_keys=True).encode())
    for name in (MANIFEST_NAME, TRIALS_NAME):
        with open(bundle / name, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()


def _read_index(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except (FileNotFoundError, json.JSONDecodeError):
        return {"subjects": {}}


def cmd_extract(cfg: ExperimentConfig) -> int:
    bundles = find_bundles(cfg.recordings_dir)
    if not bundles:
        raise ConfigError(f"no recording bundles under {cfg.recordings_dir}; "
                          f"run `ineeg synth --out {cfg.out}` or set `input` in the config")
    store = cfg.features_dir
    store.mkdir(parents=True, exist_ok=True)
    index_path = store / INDEX_NAME
    index = _read_index(index_path)
    entries = {}
    hits = 0
    for bundle in bundles:
        try:
            rate = json.loads((bundle / MANIFEST_NAME).read_text())["sampling_rate_hz"]
            settings = extraction_settings(cfg, float(rate))
            digest = bundle_hash(bundle, settings)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{bundle}: unreadable bundle ({exc})") from None
        previous = next((e for e in index.get("subjects", {}).values()
                         if e.get("bundle") == str(bundle) and e.get("hash") == digest), None)
        if previous is not None and (store / previous["file"]).exists():
            entries[previous["subject_id"]] = previous
            hits += 1
            continue
        try:
            rec = load_recording(bundle)
        except RecordingFormatError as exc:
            raise ConfigError(f"{bundle}: {exc}") from None
        violations = validate_recording(rec)
        if violations:
            report = "\n".join(f"  {v}" for v in violations)
            raise ConfigError(f"{bundle}: {len(violations)} validation failure(s)\n{report}")
        feats = featurize_recording(rec, curve_length=cfg.curve_length)
        fname = f"{rec.subject_id}.npz"
        feats.save(store / fname)
        entries[rec.subject_id] = {
            "subject_id": rec.subject_id,
            "bundle": str(bundle),
            "hash": digest,
            "file": fname,
            "n_trials": feats.n_trials,
            "n_segments": feats.total_segments,
            "settings": settings,
        }
        print(f"{rec.subject_id}: {feats.n_trials} trials, {feats.total_segments} segments")
    new_index = {"format": "ineeg-features", "subjects": dict(sorted(entries.items())),
                 "total_segments": sum(e["n_segments"] for e in entries.values())}
    if hits == len(bundles) and new_index == index:
        print(f"feature store {store} is up to date ({hits} subjects cached)")
        return EXIT_OK
    index_path.write_text(json.dumps(new_index, indent=2, sort_keys=True) + "\n")
    print(f"feature store {store}: {len(entries)} subjects ({hits} cached), "
          f"{new_index['total_segments']} segment rows")
    return EXIT_OK


def load_feature_store(store: Path) -> list[FeaturizedRecording]:
    index_path = store / INDEX_NAME
    if not index_path.exists():
        raise ConfigError(f"feature store not found at {store}; run `ineeg extract --out {store.parent}` first")
    try:
        index = json.loads(index_path.read_text())
        return [FeaturizedRecording.load(store / e["file"]) for _, e in sorted(index["subjects"].items())]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"feature store {store} is unreadable ({exc}); re-run `ineeg extract`") from None


def write_summaries(results, out: Path, conditions) -> str:
    best = best_per_model_window(results)
    text = "\n\n".join(render_table(best, c) for c in conditions)
    subjects = render_subject_table(best)
    (out / "summary.txt").write_text(text + "\n")
    (out / "summary.csv").write_text(render_csv(best, conditions))
    if subjects:
        (out / "subjects.txt").write_text(subjects + "\n")
    return text


def cmd_ablate(cfg: ExperimentConfig) -> int:
    feats = load_feature_store(cfg.features_dir)
    if not feats:
        raise ConfigError(f"feature store {cfg.features_dir} is empty; re-run `ineeg extract`")
    models = cfg.model_specs()
    conditions = cfg.condition_list()
    masks = cfg.mask_list()
    total = len(conditions) * len(models) * len(cfg.windows) * len(masks)
    step = max(1, total // 20)

    def progress(done, n):
        if done % step == 0 or done == n:
            logger.info("%d / %d cells", done, n)

    results = []
    for cond in conditions:
        results += run_ablation(feats, cond, models, cfg.windows, cfg.seed, masks, cfg.k, cfg.repeats,
                                cfg.jobs or os.cpu_count() or 1, cfg.balance_scope, cfg.pairing, progress)
    out = cfg.results_dir
    out.mkdir(parents=True, exist_ok=True)
    write_results_jsonl(results, out / RESULTS_NAME)
    print(write_summaries(results, out, [c.value for c in conditions]))
    failed = [r for r in results if r.failed]
    print(f"\n{len(results)} cells written to {out / RESULTS_NAME}, {len(failed)} failed")
    for r in failed[:10]:
        print(f"  failed: {r.condition} {r.model} W={r.window} {r.mask.name}: {r.error}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(cfg: ExperimentConfig, results_path: str | None) -> int:
    path = Path(results_path) if results_path else cfg.results_dir / RESULTS_NAME
    if not path.exists():
        raise ConfigError(f"results file {path} not found; run `ineeg ablate` first")
    try:
        results = read_results_jsonl(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not results:
        raise ConfigError(f"results file {path} is empty")
    conditions = [c.value for c in Condition if any(r.condition == c.value for r in results)]
    best = best_per_model_window(results)
    print("\n\n".join(render_table(best, c) for c in conditions))
    subjects = render_subject_table(best)
    if subjects:
        print("\nPer-subject accuracy of the Personalised rows\n" + subjects)
    return EXIT_OK


# ------------------------------------------------------------------ entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its keys")
    common.add_argument("--out", help="experiment directory")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--condition", action="append",
                        help="Generalised and/or Personalised (repeat or comma-separate)")
    common.add_argument("--windows", help="comma-separated window sizes, e.g. 2,4,8,16")
    common.add_argument("--masks", help="'all' or comma-separated mask names, e.g. Mean,Mean-SD-Curve")
    common.add_argument("--models", help="comma-separated model families, e.g. RandomForest,SVM,AdaBoost")
    common.add_argument("--jobs", type=int, help="parallel worker processes (default: all processors)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = _Parser(prog="ineeg", description="EEG information-need prediction pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic cohort of recording bundles")
    sub.add_parser("extract", parents=[common], help="preprocess and featurize every bundle")
    sub.add_parser("ablate", parents=[common], help="run the model x window x feature-mask grid")
    rep = sub.add_parser("report", parents=[common], help="render summary tables from grid results")
    rep.add_argument("results", nargs="?", help="results JSONL (default: <out>/results/results.jsonl)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "synth":
            return cmd_synth(cfg)
        if args.command == "extract":
            return cmd_extract(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg)
        return cmd_report(cfg, args.results)
    except ConfigError as exc:
        print(f"ineeg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def config_template() -> dict:
    """Default configuration as a JSON-ready dict."""
    return asdict(ExperimentConfig())
