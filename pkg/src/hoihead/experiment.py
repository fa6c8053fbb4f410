"""Experiment harness: data synthesis, (init x loss x gamma) sweeps, reports.

Every run is a pure function of its configuration: derived seeds come from a
seed tree, floats are written with ``repr``, and no timestamps enter the
output files, so re-running a config reproduces every byte.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .classifier import LinearClassifier, forward_logits_matrix, init_classifier, serialize_classifier
from .data import Dataset, DatasetSpec, generate_dataset
from .embeddings import EmbeddingTable, compositional_embeddings, load_embeddings
from .evaluation import MeanApResult, mean_ap
from .losses import positive_weights_from_counts
from .taxonomy import FrequencyBands, Taxonomy, build_taxonomy, serialize_taxonomy, tag_frequency_bands
from .training import TrainConfig, TrainReport, train

# Seed-tree branch ids, one per derived random stream.
_BRANCH_TAXONOMY = 0
_BRANCH_EMBEDDINGS = 1
_BRANCH_TRAIN_DATA = 2
_BRANCH_TEST_DATA = 3
_BRANCH_INIT = 4
_BRANCH_TRAIN = 5


def derive_seed(seed: int, branch: int) -> int:
    """Independent child seed for one branch of an experiment."""
    return int(np.random.SeedSequence(entropy=seed, spawn_key=(branch,)).generate_state(1)[0])


@dataclass(frozen=True)
class TaxonomyConfig:
    n_verbs: int = 117
    n_objects: int = 80
    n_classes: int = 600
    pairing: str = "uniform"


@dataclass(frozen=True)
class EmbeddingConfig:
    dim: int = 64
    noise_scale: float = 0.1
    source: str = "synthetic"  # "synthetic" or "file"
    path: str | None = None
    normalize: bool = True


@dataclass(frozen=True)
class DataConfig:
    n_train: int = 30000
    n_test: int = 6000
    zipf_exponent: float = 1.0
    cooccur_max: int = 3
    cooccur_prob: float = 0.5
    feature_noise: float = 0.6


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of a sweep; the cell grid is init x loss x gamma."""

    taxonomy: TaxonomyConfig = field(default_factory=TaxonomyConfig)
    embeddings: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(min_count=40))
    bands: tuple[int, ...] = (1, 5, 10)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    init_grid: tuple[str, ...] = ("embedding",)
    loss_grid: tuple[str, ...] = ("lse_sign",)
    gamma_grid: tuple[float, ...] = (100.0,)

    def cells(self) -> list[tuple[str, str, float]]:
        return list(itertools.product(self.init_grid, self.loss_grid, self.gamma_grid))

    def validate(self) -> None:
        if not self.seeds:
            raise ValueError("config field 'seeds' must list at least one seed")
        if self.embeddings.source not in ("synthetic", "file"):
            raise ValueError("config field 'embeddings.source' must be 'synthetic' or 'file'")
        if self.embeddings.source == "file" and not self.embeddings.path:
            raise ValueError("config field 'embeddings.path' is required with source='file'")
        if self.data.n_train < 1 or self.data.n_test < 1:
            raise ValueError("config fields 'data.n_train' and 'data.n_test' must be positive")


def config_to_dict(config: ExperimentConfig) -> dict:
    return asdict(config)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build a config from a (possibly partial) JSON document; unknown keys
    are rejected so typos fail loudly."""
    base = ExperimentConfig()

    def merge(section, cls, defaults):
        if section is None:
            return defaults
        known = {f for f in defaults.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(section) - known
        if unknown:
            raise ValueError(f"unknown config keys in {cls}: {sorted(unknown)}")
        return replace(defaults, **section)

    known_top = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known_top
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    cfg = ExperimentConfig(
        taxonomy=merge(raw.get("taxonomy"), "taxonomy", base.taxonomy),
        embeddings=merge(raw.get("embeddings"), "embeddings", base.embeddings),
        data=merge(raw.get("data"), "data", base.data),
        train=merge(raw.get("train"), "train", base.train),
        bands=tuple(raw.get("bands", base.bands)),
        seeds=tuple(raw.get("seeds", base.seeds)),
        init_grid=tuple(raw.get("init_grid", base.init_grid)),
        loss_grid=tuple(raw.get("loss_grid", base.loss_grid)),
        gamma_grid=tuple(float(g) for g in raw.get("gamma_grid", base.gamma_grid)),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class SeedInputs:
    """Everything one seed's cells share: taxonomy, embeddings, data, bands."""

    seed: int
    taxonomy: Taxonomy
    embeddings: EmbeddingTable
    train_data: Dataset
    test_data: Dataset
    bands: FrequencyBands


def build_seed_inputs(config: ExperimentConfig, seed: int) -> SeedInputs:
    tax = build_taxonomy(
        config.taxonomy.n_verbs,
        config.taxonomy.n_objects,
        config.taxonomy.n_classes,
        pairing=config.taxonomy.pairing,
        seed=derive_seed(seed, _BRANCH_TAXONOMY),
    )
    if config.embeddings.source == "file":
        emb = load_embeddings(config.embeddings.path, tax, normalize=config.embeddings.normalize)
    else:
        emb = compositional_embeddings(
            tax,
            config.embeddings.dim,
            noise_scale=config.embeddings.noise_scale,
            seed=derive_seed(seed, _BRANCH_EMBEDDINGS),
        )
    base_spec = dict(
        zipf_exponent=config.data.zipf_exponent,
        cooccur_max=config.data.cooccur_max,
        cooccur_prob=config.data.cooccur_prob,
        feature_noise=config.data.feature_noise,
        dim=emb.dim,
    )
    train_data = generate_dataset(
        DatasetSpec(n_samples=config.data.n_train, **base_spec),
        tax,
        emb,
        seed=derive_seed(seed, _BRANCH_TRAIN_DATA),
    )
    test_data = generate_dataset(
        DatasetSpec(n_samples=config.data.n_test, **base_spec),
        tax,
        emb,
        seed=derive_seed(seed, _BRANCH_TEST_DATA),
    )
    bands = tag_frequency_bands(tax, train_data.train_counts, config.bands)
    return SeedInputs(seed, tax, emb, train_data, test_data, bands)


@dataclass
class CellResult:
    init: str
    loss: str
    gamma: float
    seed: int
    report: TrainReport
    initial_classifier: LinearClassifier

    @property
    def eval_result(self) -> MeanApResult:
        assert self.report.eval_result is not None
        return self.report.eval_result


def run_cell(
    config: ExperimentConfig,
    inputs: SeedInputs,
    init: str,
    loss: str,
    gamma: float,
) -> CellResult:
    classifier = init_classifier(
        inputs.taxonomy.n_classes,
        inputs.embeddings.dim,
        strategy=init,
        embeddings=inputs.embeddings,
        seed=derive_seed(inputs.seed, _BRANCH_INIT),
        gamma=gamma,
    )
    initial = classifier.copy()
    loss_params = dict(config.train.loss_params or {})
    if loss == "weighted_bce":
        loss_params["pos_weight"] = positive_weights_from_counts(
            inputs.train_data.train_counts, inputs.train_data.n_samples
        )
    train_config = replace(
        config.train,
        loss=loss,
        loss_params=loss_params,
        seed=derive_seed(inputs.seed, _BRANCH_TRAIN),
    )
    report = train(
        train_config,
        inputs.train_data,
        classifier,
        eval_dataset=inputs.test_data,
        bands=inputs.bands,
    )
    return CellResult(init, loss, gamma, inputs.seed, report, initial)


def cell_tag(init: str, loss: str, gamma: float) -> str:
    return f"init-{init}_loss-{loss}_gamma-{_fmt(gamma)}"


def _fmt(value: float) -> str:
    return f"{value:g}"


def render_report(result: CellResult, bands: FrequencyBands) -> str:
    """Structured text report for one cell run (no timing: byte-reproducible)."""
    lines = [
        f"cell init={result.init} loss={result.loss} gamma={_fmt(result.gamma)}",
        f"seed {result.seed}",
        f"epochs {len(result.report.epoch_losses)}",
    ]
    for epoch, (loss_v, lr_v) in enumerate(zip(result.report.epoch_losses, result.report.epoch_lrs)):
        lines.append(f"epoch {epoch} loss {repr(loss_v)} lr {repr(lr_v)}")
    ev = result.eval_result
    lines.append(f"map {repr(ev.overall)}")
    for t in bands.thresholds:
        v = ev.band_maps.get(t)
        lines.append(f"band_map {t} " + ("undefined" if v is None else repr(v)))
    lines.append(f"defined_classes {ev.n_defined}")
    lines.append("per_class_ap")
    for c, ap in enumerate(ev.per_class_ap):
        lines.append(f"{c} " + ("undefined" if np.isnan(ap) else repr(float(ap))))
    return "\n".join(lines) + "\n"


def render_trajectory_csv(result: CellResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "loss", "lr"])
    for epoch, (loss_v, lr_v) in enumerate(zip(result.report.epoch_losses, result.report.epoch_lrs)):
        writer.writerow([epoch, repr(loss_v), repr(lr_v)])
    return buf.getvalue()


def summarize(results: list[CellResult], bands: tuple[int, ...]) -> str:
    """Aggregate per-cell results over seeds into a CSV table.

    Band means skip seeds where the band was undefined; the *_seeds column
    records how many seeds contributed.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["init", "loss", "gamma", "seeds", "map_mean", "map_std"]
    for t in bands:
        header += [f"few@{t}_mean", f"few@{t}_std", f"few@{t}_seeds"]
    writer.writerow(header)
    keys = sorted({(r.init, r.loss, r.gamma) for r in results}, key=lambda k: (k[0], k[1], k[2]))
    for init, loss, gamma in keys:
        cell = [r for r in results if (r.init, r.loss, r.gamma) == (init, loss, gamma)]
        overall = np.array([r.eval_result.overall for r in cell])
        row = [init, loss, _fmt(gamma), len(cell), repr(float(overall.mean())), repr(float(overall.std()))]
        for t in bands:
            values = np.array(
                [r.eval_result.band_maps[t] for r in cell if r.eval_result.band_maps.get(t) is not None]
            )
            if values.size:
                row += [repr(float(values.mean())), repr(float(values.std())), values.size]
            else:
                row += ["na", "na", 0]
        writer.writerow(row)
    return buf.getvalue()


def run_experiment(config: ExperimentConfig, out_dir: str | Path) -> list[CellResult]:
    """Run the full sweep and write all report files under ``out_dir``.

    Layout: config.json (echo), summary.csv, and per cell and seed a
    directory with report.txt, trajectory.csv, and the classifier weights
    serialized before and after training.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    results: list[CellResult] = []
    for seed in config.seeds:
        inputs = build_seed_inputs(config, seed)
        labels = inputs.taxonomy.labels()
        if seed == config.seeds[0]:
            (out / "taxonomy.txt").write_text(serialize_taxonomy(inputs.taxonomy), encoding="utf-8")
        for init, loss, gamma in config.cells():
            result = run_cell(config, inputs, init, loss, gamma)
            cell_dir = out / "cells" / cell_tag(init, loss, gamma) / f"seed{seed}"
            cell_dir.mkdir(parents=True, exist_ok=True)
            (cell_dir / "report.txt").write_text(
                render_report(result, inputs.bands), encoding="utf-8"
            )
            (cell_dir / "trajectory.csv").write_text(render_trajectory_csv(result), encoding="utf-8")
            (cell_dir / "weights_initial.txt").write_text(
                serialize_classifier(result.initial_classifier, labels), encoding="utf-8"
            )
            (cell_dir / "weights_final.txt").write_text(
                serialize_classifier(result.report.classifier, labels), encoding="utf-8"
            )
            results.append(result)
    (out / "summary.csv").write_text(summarize(results, config.bands), encoding="utf-8")
    return results


def evaluate_classifier(
    classifier: LinearClassifier,
    dataset: Dataset,
    bands: FrequencyBands | None = None,
) -> MeanApResult:
    """Score a dataset with a fixed head and compute the AP report."""
    scores = forward_logits_matrix(classifier, dataset.features)
    return mean_ap(scores, dataset.labels, bands)
