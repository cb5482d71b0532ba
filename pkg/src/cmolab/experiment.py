"""Config-driven experiment grids: build data, train (method x seed) cells, report tables.

Configs are TOML; results persist as a JSON manifest that can be re-rendered
without recomputation. Cells are independent and may run in parallel
processes; the manifest is rewritten atomically after every completed cell.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .datasets import Dataset, LongTailSpec, build_longtail_profile, load_dataset, save_dataset
from .metrics import MetricsReport, evaluate
from .mixing import MixVariant
from .samplers import WeightStrategy
from .synth import ContextShiftSpec, synth_context_shift
from .training import TrainConfig, shot_partition, train

MANIFEST_VERSION = 1
METRIC_KEYS = ("overall", "many", "medium", "few", "mean_max_conf", "ece")


class ConfigError(ValueError):
    """Invalid experiment configuration, with field context in the message."""


@dataclass
class MethodSpec:
    name: str
    overrides: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    dataset: dict
    defaults: dict
    methods: list[MethodSpec]
    seeds: list[int]
    out_dir: str = "runs"


@dataclass
class ResultsManifest:
    dataset_hash: str
    dataset: dict
    methods: list[str]
    seeds: list[int]
    records: list[dict] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "dataset_hash": self.dataset_hash,
            "dataset": self.dataset,
            "methods": self.methods,
            "seeds": self.seeds,
            "records": self.records,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ResultsManifest":
        return cls(
            dataset_hash=d["dataset_hash"],
            dataset=d["dataset"],
            methods=list(d["methods"]),
            seeds=list(d["seeds"]),
            records=list(d["records"]),
            version=d.get("version", MANIFEST_VERSION),
        )


def save_manifest(manifest: ResultsManifest, path: str | Path) -> Path:
    """Atomic write: serialize to a temp file, then rename over the target."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(manifest.to_dict(), indent=1, sort_keys=True))
    os.replace(tmp, path)
    return path


def load_manifest(path: str | Path) -> ResultsManifest:
    return ResultsManifest.from_dict(json.loads(Path(path).read_text()))


# --- config parsing ---------------------------------------------------------


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing field {key!r} in [{where}]")
    return table[key]


def parse_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error in {path}: {e}") from e
    return config_from_tables(raw)


def config_from_tables(raw: dict) -> ExperimentConfig:
    dataset = _require(raw, "dataset", "top level")
    methods_raw = _require(raw, "methods", "top level")
    seeds = [int(s) for s in _require(raw, "seeds", "top level")]
    if not seeds:
        raise ConfigError("field 'seeds' must list at least one seed")
    if not methods_raw:
        raise ConfigError("field 'methods' must list at least one method")
    methods = []
    for i, m in enumerate(methods_raw):
        if "name" not in m:
            raise ConfigError(f"method #{i} is missing field 'name'")
        overrides = {k: v for k, v in m.items() if k != "name"}
        methods.append(MethodSpec(name=str(m["name"]), overrides=overrides))
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ConfigError(f"method names must be unique, got {names}")
    return ExperimentConfig(
        dataset=dict(dataset),
        defaults=dict(raw.get("defaults", {})),
        methods=methods,
        seeds=seeds,
        out_dir=str(raw.get("out_dir", "runs")),
    )


def _parse_weighting(value) -> WeightStrategy:
    if isinstance(value, (int, float)):
        return WeightStrategy.power(float(value))
    if value == "effective_number":
        return WeightStrategy.effective_number()
    raise ConfigError(f"field 'weighting' must be a power exponent or 'effective_number', got {value!r}")


def resolve_train_config(defaults: dict, overrides: dict, seed: int) -> TrainConfig:
    merged = dict(defaults)
    merged.update(overrides)
    merged["seed"] = seed
    drw = merged.get("drw_epoch")
    if drw == "auto":
        merged["drw_epoch"] = int(round(0.8 * int(merged.get("epochs", 0))))
    if "weighting" in merged:
        merged["weighting"] = _parse_weighting(merged["weighting"])
    for key in ("decay_epochs", "hidden_sizes", "conv_channels", "blur_kernel_sizes", "blur_sigma"):
        if key in merged:
            merged[key] = tuple(merged[key])
    if "variant" in merged:
        try:
            merged["variant"] = MixVariant(merged["variant"])
        except ValueError as e:
            raise ConfigError(f"field 'variant': {e}") from e
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown train config fields: {sorted(unknown)}")
    try:
        return TrainConfig(**merged)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid train config: {e}") from e


def config_to_dict(cfg: TrainConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["variant"] = cfg.variant.value
    d["weighting"] = {"kind": cfg.weighting.kind, "exponent": cfg.weighting.exponent}
    for key in ("decay_epochs", "hidden_sizes", "conv_channels", "blur_kernel_sizes", "blur_sigma"):
        d[key] = list(d[key])
    return d


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    w = d["weighting"]
    d["weighting"] = (
        WeightStrategy.effective_number() if w["kind"] == "effective_number"
        else WeightStrategy.power(w["exponent"])
    )
    d["variant"] = MixVariant(d["variant"])
    for key in ("decay_epochs", "hidden_sizes", "conv_channels", "blur_kernel_sizes", "blur_sigma"):
        d[key] = tuple(d[key])
    return TrainConfig(**d)


# --- dataset construction ---------------------------------------------------


def build_benchmark_data(block: dict, rng: np.random.Generator | None = None) -> tuple[Dataset, Dataset]:
    kind = block.get("kind", "context_shift")
    if kind != "context_shift":
        raise ConfigError(f"unknown dataset kind {kind!r} (supported: context_shift)")
    try:
        lt = LongTailSpec(
            num_classes=int(_require(block, "classes", "dataset")),
            n_max=int(_require(block, "n_max", "dataset")),
            rho=float(_require(block, "rho", "dataset")),
        )
        spec = ContextShiftSpec(
            num_classes=lt.num_classes,
            backgrounds=int(_require(block, "backgrounds", "dataset")),
            tail_exposure=int(_require(block, "tail_exposure", "dataset")),
            image_side=int(block.get("image_side", 32)),
            channels=int(block.get("channels", 3)),
            noise=float(block.get("noise", 0.03)),
            test_per_class=int(block.get("test_per_class", 20)),
            head_threshold=block.get("head_threshold"),
        )
    except ValueError as e:
        raise ConfigError(f"invalid [dataset] block: {e}") from e
    hist = build_longtail_profile(lt)
    if rng is None:
        rng = np.random.default_rng(int(block.get("seed", 0)))
    return synth_context_shift(spec, hist, rng)


def make_data(config: ExperimentConfig, out_dir: Path) -> tuple[Path, Path, str]:
    """Build and persist the train/test splits; returns paths and content hash."""
    data_dir = out_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = build_benchmark_data(config.dataset)
    train_path = save_dataset(train_ds, data_dir / "train.cmo")
    test_path = save_dataset(test_ds, data_dir / "test.cmo")
    digest = hashlib.sha1(train_path.read_bytes() + test_path.read_bytes()).hexdigest()
    return train_path, test_path, digest


# --- cell execution ----------------------------------------------------------


def _cell_hash(cfg_dict: dict, dataset_hash: str) -> str:
    blob = json.dumps({"config": cfg_dict, "dataset": dataset_hash}, sort_keys=True)
    return hashlib.sha1(blob.encode()).hexdigest()


def run_cell(train_path: str, test_path: str, cfg_dict: dict) -> tuple[MetricsReport, dict]:
    """Train and evaluate one grid cell from persisted data."""
    train_ds = load_dataset(train_path)
    test_ds = load_dataset(test_path)
    cfg = config_from_dict(cfg_dict)
    model, history = train(cfg, train_ds)
    groups = shot_partition(cfg, train_ds)
    report_ = evaluate(model, test_ds, groups)
    return report_, history.to_dict()


def _cell_worker(args: tuple) -> dict:
    method, seed, cfg_dict, cell_hash, train_path, test_path = args
    record = {
        "method": method,
        "seed": seed,
        "cell_hash": cell_hash,
        "config": cfg_dict,
        "status": "ok",
        "error": None,
        "metrics": None,
        "history": None,
    }
    try:
        report_, history = run_cell(train_path, test_path, cfg_dict)
        record["metrics"] = report_.to_dict()
        record["history"] = history
    except Exception as e:  # noqa: BLE001 - cell failures must not abort the grid
        record["status"] = "failed"
        record["error"] = f"{type(e).__name__}: {e}\n{traceback.format_exc()}"
    return record


def run(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    jobs: int = 1,
    resume: bool = False,
    log=print,
) -> ResultsManifest:
    """Execute every (method, seed) cell; failures are recorded, not raised."""
    out = Path(out_dir) if out_dir is not None else Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_path, test_path, dataset_hash = make_data(config, out)
    manifest_path = out / "manifest.json"

    cells = []
    for method in config.methods:
        for seed in config.seeds:
            cfg = resolve_train_config(config.defaults, method.overrides, seed)
            cfg_dict = config_to_dict(cfg)
            cells.append((method.name, seed, cfg_dict, _cell_hash(cfg_dict, dataset_hash)))

    done: dict[tuple[str, int], dict] = {}
    if resume and manifest_path.exists():
        previous = load_manifest(manifest_path)
        valid_hashes = {(m, s): h for m, s, _cfg, h in cells}
        for rec in previous.records:
            key = (rec["method"], rec["seed"])
            if rec.get("status") == "ok" and valid_hashes.get(key) == rec.get("cell_hash"):
                done[key] = rec

    manifest = ResultsManifest(
        dataset_hash=dataset_hash,
        dataset=config.dataset,
        methods=[m.name for m in config.methods],
        seeds=list(config.seeds),
        records=list(done.values()),
    )
    _sort_records(manifest)
    save_manifest(manifest, manifest_path)

    todo = [
        (m, s, cfg_dict, h, str(train_path), str(test_path))
        for m, s, cfg_dict, h in cells
        if (m, s) not in done
    ]
    log(f"grid: {len(cells)} cells, {len(done)} resumed, {len(todo)} to run (jobs={jobs})")

    def finish(record: dict):
        manifest.records.append(record)
        _sort_records(manifest)
        save_manifest(manifest, manifest_path)
        tag = record["status"]
        extra = ""
        if tag == "ok":
            extra = f" overall={record['metrics']['overall']:.4f}"
        log(f"cell {record['method']}/seed{record['seed']}: {tag}{extra}")

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_cell_worker, args) for args in todo]
            for fut in as_completed(futures):
                finish(fut.result())
    else:
        for args in todo:
            finish(_cell_worker(args))
    return manifest


def _sort_records(manifest: ResultsManifest):
    order = {name: i for i, name in enumerate(manifest.methods)}
    manifest.records.sort(key=lambda r: (order.get(r["method"], len(order)), r["seed"]))


# --- reporting ---------------------------------------------------------------


def _method_stats(manifest: ResultsManifest) -> list[dict]:
    rows = []
    for name in manifest.methods:
        recs = [r for r in manifest.records if r["method"] == name and r["status"] == "ok"]
        row = {"method": name, "seeds": len(recs)}
        for key in METRIC_KEYS:
            vals = [r["metrics"][key] for r in recs if r["metrics"][key] is not None]
            if vals:
                row[f"{key}_mean"] = float(np.mean(vals))
                row[f"{key}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            else:
                row[f"{key}_mean"] = None
                row[f"{key}_std"] = None
        rows.append(row)
    baseline = rows[0] if rows else None
    for row in rows:
        if baseline and row["overall_mean"] is not None and baseline["overall_mean"] is not None:
            row["delta_overall"] = row["overall_mean"] - baseline["overall_mean"]
        else:
            row["delta_overall"] = None
    return rows


def report(manifest: ResultsManifest, fmt: str = "txt") -> str:
    """Per-method mean +- std table with a delta-vs-baseline (first method) column."""
    rows = _method_stats(manifest)
    baseline = manifest.methods[0] if manifest.methods else "?"
    if fmt == "csv":
        header = ["method", "seeds"]
        for key in METRIC_KEYS:
            header += [f"{key}_mean", f"{key}_std"]
        header.append(f"delta_overall_vs_{baseline}")
        lines = [",".join(header)]
        for row in rows:
            cells = [row["method"], str(row["seeds"])]
            for key in METRIC_KEYS:
                for suffix in ("_mean", "_std"):
                    v = row[key + suffix]
                    cells.append("" if v is None else f"{v:.6f}")
            d = row["delta_overall"]
            cells.append("" if d is None else f"{d:+.6f}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt != "txt":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [f"# mean +- std over seeds; delta vs baseline = first method ({baseline})"]
    head = f"{'method':<14}{'seeds':>6}"
    for key in METRIC_KEYS:
        head += f"{key:>20}"
    head += f"{'delta_overall':>16}"
    lines.append(head)
    for row in rows:
        line = f"{row['method']:<14}{row['seeds']:>6}"
        for key in METRIC_KEYS:
            m, s = row[f"{key}_mean"], row[f"{key}_std"]
            cell = "-" if m is None else f"{m:.4f} +- {s:.4f}"
            line += f"{cell:>20}"
        d = row["delta_overall"]
        line += f"{'-' if d is None else f'{d:+.4f}':>16}"
        lines.append(line)
    return "\n".join(lines) + "\n"
