"""Episodic evaluation: c-way/k-shot sampling, repeated seeded runs,
accuracy tables, confusion matrices, silhouette scores, calibration
histograms, and report emission.

Reproducibility contract: every episode seed is derived from the grid base
seed with a splitmix64 chain over (c, k, repeat), so cells are paired
across model sizes and augmentation/adapter modes and results do not
depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import adapter as adapter_mod
from .augment import load_image
from .backend import (
    Backend,
    MockBackend,
    MockWorldConfig,
    write_embedding_file,
)
from .embedding import as_batch, cosine_similarity, to_float32
from .enrollment import (
    EnrollmentConfig,
    PrototypeStore,
    enroll_image,
    fixed_clock,
)
from .errors import (
    DegenerateClustering,
    EmptyStore,
    EmptyTestSet,
    EmptyTrainSet,
    InsufficientExamples,
    IoError,
)
from .inference import InferenceConfig, classify_query

MASK64 = (1 << 64) - 1
SEED_MIXING_DOC = (
    "episode_seed = splitmix64 chain seeded by base_seed over (c, k, repeat); "
    "cells are paired across model sizes and augmentation/adapter modes"
)


def splitmix64(x: int) -> int:
    """One step of the splitmix64 generator (public-domain constants)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def mix_seed(base_seed: int, *parts: int) -> int:
    x = base_seed & MASK64
    for p in parts:
        x = splitmix64(x ^ (int(p) & MASK64))
    return x


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImageRecord:
    path: str
    cluttered: bool = False
    sighted: bool = True
    flash: Optional[bool] = None
    lit: Optional[bool] = None


@dataclass
class DatasetManifest:
    # label -> {"train": [...], "test": [...]}; insertion order is the
    # canonical label order used everywhere downstream
    objects: Dict[str, Dict[str, List[ImageRecord]]] = field(default_factory=dict)

    def labels(self) -> List[str]:
        return list(self.objects.keys())

    @staticmethod
    def from_json(doc: dict) -> "DatasetManifest":
        manifest = DatasetManifest()
        for label, split in doc["objects"].items():
            manifest.objects[label] = {
                part: [
                    ImageRecord(
                        path=rec["path"],
                        cluttered=bool(rec.get("flags", {}).get("cluttered", False)),
                        sighted=bool(rec.get("flags", {}).get("sighted", True)),
                        flash=rec.get("flags", {}).get("flash"),
                        lit=rec.get("flags", {}).get("lit"),
                    )
                    for rec in split.get(part, [])
                ]
                for part in ("train", "test")
            }
        return manifest

    def to_json(self) -> dict:
        return {
            "objects": {
                label: {
                    part: [
                        {
                            "path": rec.path,
                            "flags": {
                                "cluttered": rec.cluttered,
                                "sighted": rec.sighted,
                                "flash": rec.flash,
                                "lit": rec.lit,
                            },
                        }
                        for rec in split[part]
                    ]
                    for part in ("train", "test")
                }
                for label, split in self.objects.items()
            }
        }


def load_manifest(path) -> DatasetManifest:
    try:
        return DatasetManifest.from_json(json.loads(open(path).read()))
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc


def filter_train_images(manifest: DatasetManifest) -> DatasetManifest:
    """Keep only uncluttered, sighted-captured training images.

    Test lists are untouched: evaluation keeps all test images.
    """
    out = DatasetManifest()
    for label, split in manifest.objects.items():
        train = [r for r in split["train"] if not r.cluttered and r.sighted]
        if not train:
            raise EmptyTrainSet(f"label {label!r} has no eligible training images")
        if not split["test"]:
            raise EmptyTestSet(f"label {label!r} has no test images")
        out.objects[label] = {"train": train, "test": list(split["test"])}
    return out


# ---------------------------------------------------------------------------
# Episodes
# ---------------------------------------------------------------------------

@dataclass
class Episode:
    labels: List[str]                       # manifest order
    train: Dict[str, List[ImageRecord]]     # k records per label
    test: List[Tuple[str, ImageRecord]]     # all test images of chosen labels
    seed: int


def sample_episode(manifest: DatasetManifest, c: int, k: int, seed: int) -> Episode:
    """Draw c labels and k train images per label, deterministically in seed.

    Labels and per-label images are drawn without replacement; the chosen
    labels keep manifest order so stores are built identically for a seed.
    """
    labels = manifest.labels()
    if c > len(labels):
        raise InsufficientExamples(f"c={c} exceeds {len(labels)} labels")
    rng = np.random.default_rng(seed)
    chosen_idx = sorted(rng.choice(len(labels), size=c, replace=False).tolist())
    chosen = [labels[i] for i in chosen_idx]
    train: Dict[str, List[ImageRecord]] = {}
    for label in chosen:
        pool = manifest.objects[label]["train"]
        if k > len(pool):
            raise InsufficientExamples(
                f"label {label!r} has {len(pool)} eligible train images, k={k}"
            )
        picks = sorted(rng.choice(len(pool), size=k, replace=False).tolist())
        train[label] = [pool[i] for i in picks]
    test = [(label, rec) for label in chosen for rec in manifest.objects[label]["test"]]
    if not test:
        raise EmptyTestSet("episode has no test images")
    return Episode(labels=chosen, train=train, test=test, seed=seed)


# ---------------------------------------------------------------------------
# Image loaders
# ---------------------------------------------------------------------------

class MockImageLoader:
    """Renders mock:// records through the cell's mock backend, so pixel
    noise follows the backend's noise preset."""

    def __call__(self, path: str, backend: Backend) -> np.ndarray:
        if not path.startswith("mock://"):
            raise ValueError(f"not a mock record path: {path!r}")
        cls_str, inst_str = path[len("mock://"):].split("/")
        if not isinstance(backend, MockBackend):
            raise TypeError("mock records require a MockBackend")
        return backend.render(int(cls_str), int(inst_str))


class FileImageLoader:
    def __init__(self, root=None):
        self.root = root

    def __call__(self, path: str, backend: Backend) -> np.ndarray:
        full = path if self.root is None else os.path.join(self.root, path)
        return load_image(full)


def make_mock_manifest(num_classes: int, train_per_class: int = 12,
                       test_per_class: int = 5) -> DatasetManifest:
    """Synthetic manifest over mock:// records; use with MockImageLoader."""
    manifest = DatasetManifest()
    for cls in range(num_classes):
        label = f"object{cls:02d}"
        train = [
            ImageRecord(path=f"mock://{cls}/{1000 * cls + i}")
            for i in range(train_per_class)
        ]
        test = [
            ImageRecord(path=f"mock://{cls}/{500000 + 1000 * cls + i}",
                        cluttered=(i % 2 == 1))
            for i in range(test_per_class)
        ]
        manifest.objects[label] = {"train": train, "test": test}
    return manifest


# ---------------------------------------------------------------------------
# Mock backend factory and size presets
# ---------------------------------------------------------------------------

# Desk-scale stand-in for the model-size axis: smaller models get noisier
# embeddings so size trends are exercisable without real weights.
SIZE_NOISE_PRESETS = {"s": 0.45, "m": 0.30, "l": 0.15}


@dataclass(frozen=True)
class MockBackendFactory:
    num_classes: int = 19
    dim: int = 32
    seed: int = 0
    image_size: int = 64
    object_fraction: float = 0.5
    size_sigmas: Tuple[Tuple[str, float], ...] = tuple(sorted(SIZE_NOISE_PRESETS.items()))

    def config_for(self, model_size: str) -> MockWorldConfig:
        sigmas = dict(self.size_sigmas)
        if model_size not in sigmas:
            raise KeyError(f"no noise preset for model size {model_size!r}")
        return MockWorldConfig(
            num_classes=self.num_classes,
            dim=self.dim,
            noise_sigma=sigmas[model_size],
            seed=self.seed,
            image_size=self.image_size,
            object_fraction=self.object_fraction,
        )

    def __call__(self, model_size: str) -> MockBackend:
        return MockBackend(self.config_for(model_size), model_size=model_size)


def build_mock_adapter(backend: MockBackend, samples_per_class: int = 8,
                       text_corpus_size: int = 64,
                       epsilon: float = adapter_mod.DEFAULT_EPSILON
                       ) -> adapter_mod.WhitenColorTransform:
    """Deterministic adapter for mock runs: image stats from encoded renders,
    text stats from encoded synthetic vocabulary words."""
    cfg = backend.cfg
    img_rows = [
        backend.encode_image(backend.render(cls, 900000 + 1000 * cls + i))
        for cls in range(cfg.num_classes)
        for i in range(samples_per_class)
    ]
    txt_rows = [backend.encode_text(f"vocabulary word {i}") for i in range(text_corpus_size)]
    img_stats = adapter_mod.estimate_stats(np.stack(img_rows))
    txt_stats = adapter_mod.estimate_stats(np.stack(txt_rows))
    return adapter_mod.build_transform(img_stats, txt_stats, epsilon)


# ---------------------------------------------------------------------------
# Running episodes and grids
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    model_size: str
    c: int
    k: int
    use_augmentations: bool
    use_adapter: bool
    repeat: int
    seed: int
    accuracy: float
    correct: int
    total: int
    no_detection_rate: float
    per_query: List[dict]
    wall_time: float = 0.0


def run_episode(
    episode: Episode,
    backend: Backend,
    loader: Callable[[str, Backend], np.ndarray],
    enroll_cfg: EnrollmentConfig,
    infer_cfg: Optional[InferenceConfig] = None,
    adapter: Optional[adapter_mod.WhitenColorTransform] = None,
) -> Tuple[PrototypeStore, List[dict]]:
    """Enroll every train image into a fresh store, then classify every
    test image of the chosen labels. Returns the store and per-query rows."""
    infer_cfg = infer_cfg or InferenceConfig()
    store = PrototypeStore(dim=backend.descriptor.dim)
    clock = fixed_clock()
    for label in episode.labels:
        for rec in episode.train[label]:
            img = loader(rec.path, backend)
            enroll_image(store, label, img, backend, enroll_cfg,
                         adapter=adapter, label=label, clock=clock)
    if not episode.test:
        raise EmptyTestSet("episode has no test images")
    per_query = []
    for true_label, rec in episode.test:
        img = loader(rec.path, backend)
        result = classify_query(img, store, backend, infer_cfg)
        per_query.append(
            {
                "true": true_label,
                "predicted": result.predicted_id,
                "confidence": result.confidence,
            }
        )
    return store, per_query


@dataclass(frozen=True)
class ExperimentGrid:
    class_counts: Tuple[int, ...] = (2, 4, 9, 19)
    shot_counts: Tuple[int, ...] = (1, 3, 5, 10)
    repeats: int = 30
    base_seed: int = 0
    augmentation_modes: Tuple[bool, ...] = (False, True)
    adapter_modes: Tuple[bool, ...] = (False,)
    model_sizes: Tuple[str, ...] = ("s", "m", "l")

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True)
class _CellSpec:
    model_size: str
    c: int
    k: int
    aug: bool
    adapter: bool
    repeat: int
    seed: int


def _grid_cells(grid: ExperimentGrid) -> List[_CellSpec]:
    cells = []
    for size in grid.model_sizes:
        for c in grid.class_counts:
            for k in grid.shot_counts:
                for aug in grid.augmentation_modes:
                    for adp in grid.adapter_modes:
                        for r in range(grid.repeats):
                            cells.append(
                                _CellSpec(size, c, k, aug, adp, r,
                                          mix_seed(grid.base_seed, c, k, r))
                            )
    return cells


# process-local; adapters are deterministic in (factory, backend), so caching
# cannot change results, only skip rebuilding identical transforms
_ADAPTER_CACHE: Dict[tuple, adapter_mod.WhitenColorTransform] = {}


def _run_cell(args) -> RunResult:
    spec, manifest, backend_factory, loader, enroll_cfg, infer_cfg, adapter_factory = args
    backend = backend_factory(spec.model_size)
    adapter = None
    if spec.adapter:
        if adapter_factory is None:
            raise ValueError("grid enables the adapter but no adapter_factory given")
        key = (adapter_factory, backend.descriptor)
        adapter = _ADAPTER_CACHE.get(key)
        if adapter is None:
            adapter = adapter_factory(backend)
            _ADAPTER_CACHE[key] = adapter
    cfg = replace(enroll_cfg, use_augmentations=spec.aug,
                  adapter_enabled=spec.adapter)
    t0 = time.perf_counter()
    episode = sample_episode(manifest, spec.c, spec.k, spec.seed)
    _, per_query = run_episode(episode, backend, loader, cfg, infer_cfg, adapter)
    correct = sum(1 for q in per_query if q["predicted"] == q["true"])
    total = len(per_query)
    no_det = sum(1 for q in per_query if q["predicted"] is None)
    return RunResult(
        model_size=spec.model_size,
        c=spec.c,
        k=spec.k,
        use_augmentations=spec.aug,
        use_adapter=spec.adapter,
        repeat=spec.repeat,
        seed=spec.seed,
        accuracy=correct / total,
        correct=correct,
        total=total,
        no_detection_rate=no_det / total,
        per_query=per_query,
        wall_time=time.perf_counter() - t0,
    )


@dataclass
class CellAggregate:
    model_size: str
    c: int
    k: int
    use_augmentations: bool
    use_adapter: bool
    mean: float
    std: float
    n: int


def aggregate_results(results: Sequence[RunResult]) -> List[CellAggregate]:
    """Mean and sample standard deviation (ddof=1) per grid cell, in the
    deterministic cell order of the incoming results."""
    groups: Dict[tuple, List[RunResult]] = {}
    order = []
    for r in results:
        key = (r.model_size, r.c, r.k, r.use_augmentations, r.use_adapter)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for key in order:
        accs = np.asarray([r.accuracy for r in groups[key]], dtype=np.float64)
        std = float(np.std(accs, ddof=1)) if accs.size > 1 else 0.0
        out.append(
            CellAggregate(
                model_size=key[0], c=key[1], k=key[2],
                use_augmentations=key[3], use_adapter=key[4],
                mean=float(accs.mean()), std=std, n=int(accs.size),
            )
        )
    return out


def run_grid(
    grid: ExperimentGrid,
    manifest: DatasetManifest,
    backend_factory: Callable[[str], Backend],
    loader: Callable[[str, Backend], np.ndarray],
    adapter_factory: Optional[Callable[[Backend], adapter_mod.WhitenColorTransform]] = None,
    enroll_cfg: Optional[EnrollmentConfig] = None,
    infer_cfg: Optional[InferenceConfig] = None,
    jobs: int = 1,
) -> Tuple[List[RunResult], List[CellAggregate]]:
    """Evaluate every grid cell; results are identical for any job count.

    Cells are independent work units with their own seed streams; the
    aggregation is an ordered reduce over the deterministic cell list.
    """
    manifest = filter_train_images(manifest)
    enroll_cfg = enroll_cfg or EnrollmentConfig()
    infer_cfg = infer_cfg or InferenceConfig()
    cells = _grid_cells(grid)
    tasks = [
        (spec, manifest, backend_factory, loader, enroll_cfg, infer_cfg, adapter_factory)
        for spec in cells
    ]
    if jobs <= 1:
        results = [_run_cell(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunk = max(1, len(tasks) // (jobs * 8))
            results = list(pool.map(_run_cell, tasks, chunksize=chunk))
    return results, aggregate_results(results)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

NONE_LABEL = "<none>"


@dataclass
class ConfusionMatrix:
    labels: List[str]
    counts: np.ndarray  # (L, L+1) int; last column is "no prediction"

    def to_json(self) -> dict:
        return {"labels": self.labels, "none_column": NONE_LABEL,
                "counts": self.counts.tolist()}

    def render_text(self) -> str:
        width = max([len(l) for l in self.labels + [NONE_LABEL]] + [6])
        cols = self.labels + [NONE_LABEL]
        lines = [" " * width + " " + " ".join(f"{c:>{width}}" for c in cols)]
        for i, label in enumerate(self.labels):
            row = " ".join(f"{int(v):>{width}}" for v in self.counts[i])
            lines.append(f"{label:>{width}} {row}")
        return "\n".join(lines) + "\n"


def confusion(results: Sequence[RunResult],
              labels: Optional[Sequence[str]] = None) -> ConfusionMatrix:
    """Tally true-vs-predicted counts over all per-query rows."""
    queries = [q for r in results for q in r.per_query]
    if not queries:
        raise EmptyTestSet("no queries to tally")
    if labels is None:
        labels = sorted({q["true"] for q in queries})
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels) + 1), dtype=np.int64)
    for q in queries:
        row = index[q["true"]]
        pred = q["predicted"]
        col = index[pred] if pred in index else len(labels)
        counts[row, col] += 1
    return ConfusionMatrix(labels=list(labels), counts=counts)


@dataclass
class CalibrationHistogram:
    bin_edges: List[float]
    counts: List[int]

    def to_json(self) -> dict:
        return {"bin_edges": self.bin_edges, "counts": self.counts}

    def render_text(self) -> str:
        peak = max(self.counts) if self.counts else 0
        lines = []
        for i, count in enumerate(self.counts):
            bar = "#" * (0 if peak == 0 else round(40 * count / peak))
            lines.append(
                f"[{self.bin_edges[i]:.2f},{self.bin_edges[i + 1]:.2f}) {count:>6} {bar}"
            )
        return "\n".join(lines) + "\n"


def calibration(results: Sequence[RunResult], bins: int = 20) -> CalibrationHistogram:
    """Histogram of predicted confidence over misclassified queries only.

    Queries with no prediction are binned at confidence 0.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts = [0] * bins
    for r in results:
        for q in r.per_query:
            if q["predicted"] == q["true"]:
                continue
            conf = 0.0 if q["predicted"] is None else float(q["confidence"])
            idx = min(int(conf * bins), bins - 1)
            counts[idx] += 1
    edges = [i / bins for i in range(bins + 1)]
    return CalibrationHistogram(bin_edges=edges, counts=counts)


def silhouette(batch, labels: Sequence) -> float:
    """Mean silhouette score under cosine distance (1 - cosine similarity).

    Standard definition: s_i = (b_i - a_i) / max(a_i, b_i), with s_i = 0
    for points in singleton clusters.
    """
    rows = as_batch(batch)
    labels = list(labels)
    if rows.shape[0] != len(labels):
        raise ValueError("labels length must match batch rows")
    unique = sorted(set(labels), key=lambda x: str(x))
    if len(unique) < 2:
        raise DegenerateClustering("silhouette needs at least 2 clusters")
    n = rows.shape[0]
    norms = np.linalg.norm(rows, axis=1)
    unit = rows / norms[:, None]
    dist = 1.0 - np.clip(unit @ unit.T, -1.0, 1.0)
    members = {lab: [i for i, l in enumerate(labels) if l == lab] for lab in unique}
    scores = np.zeros(n)
    for i in range(n):
        own = members[labels[i]]
        if len(own) == 1:
            scores[i] = 0.0
            continue
        a = sum(dist[i, j] for j in own if j != i) / (len(own) - 1)
        b = min(
            sum(dist[i, j] for j in members[lab]) / len(members[lab])
            for lab in unique
            if lab != labels[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


# ---------------------------------------------------------------------------
# Exports and reports
# ---------------------------------------------------------------------------

def export_embeddings(store: PrototypeStore, path, labels_path=None) -> None:
    """Write all raw prototype embeddings as EMB1 plus a labels sidecar,
    for external projection tools."""
    if not store.prototypes:
        raise EmptyStore("cannot export an empty store")
    rows = []
    labels = []
    for proto in store.prototypes:
        for vec in proto.raw:
            rows.append(vec)
            labels.append(proto.label)
    write_embedding_file(path, to_float32(np.stack(rows)))
    side = labels_path if labels_path is not None else str(path) + ".labels.json"
    tmp = str(side) + ".tmp"
    try:
        with open(tmp, "w") as fh:
            fh.write(json.dumps({"labels": labels}))
        os.replace(tmp, side)
    except OSError as exc:
        raise IoError(f"cannot write labels sidecar {side}: {exc}") from exc


def csv_report_text(aggregates: Sequence[CellAggregate]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["size", "c", "k", "aug", "adapter", "mean", "std", "n"])
    for a in aggregates:
        writer.writerow(
            [a.model_size, a.c, a.k, int(a.use_augmentations), int(a.use_adapter),
             f"{a.mean:.6f}", f"{a.std:.6f}", a.n]
        )
    return buf.getvalue()


def json_report_text(grid: ExperimentGrid, results: Sequence[RunResult]) -> str:
    # wall_time is deliberately excluded: reports must be byte-identical
    # across reruns and worker counts
    doc = {
        "seed_mixing": SEED_MIXING_DOC,
        "grid": {
            "class_counts": list(grid.class_counts),
            "shot_counts": list(grid.shot_counts),
            "repeats": grid.repeats,
            "base_seed": grid.base_seed,
            "augmentation_modes": list(grid.augmentation_modes),
            "adapter_modes": list(grid.adapter_modes),
            "model_sizes": list(grid.model_sizes),
        },
        "results": [
            {
                "model_size": r.model_size,
                "c": r.c,
                "k": r.k,
                "aug": r.use_augmentations,
                "adapter": r.use_adapter,
                "repeat": r.repeat,
                "seed": r.seed,
                "accuracy": r.accuracy,
                "correct": r.correct,
                "total": r.total,
                "no_detection_rate": r.no_detection_rate,
                "per_query": r.per_query,
            }
            for r in results
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def render_table(aggregates: Sequence[CellAggregate]) -> str:
    """Table-1-style mean(std) grid, one block per (aug, adapter) mode."""
    sizes = []
    for a in aggregates:
        if a.model_size not in sizes:
            sizes.append(a.model_size)
    blocks: Dict[tuple, Dict[tuple, CellAggregate]] = {}
    for a in aggregates:
        blocks.setdefault((a.use_augmentations, a.use_adapter), {})[
            (a.c, a.k, a.model_size)
        ] = a
    lines = []
    for (aug, adp), cells in blocks.items():
        lines.append(
            f"augmentations={'on' if aug else 'off'} adapter={'on' if adp else 'off'}"
        )
        header = f"{'c':>4} {'k':>4}" + "".join(f" {s:>16}" for s in sizes)
        lines.append(header)
        cks = sorted({(c, k) for (c, k, _s) in cells})
        for c, k in cks:
            row = f"{c:>4} {k:>4}"
            for s in sizes:
                a = cells.get((c, k, s))
                cell = "-" if a is None else f"{100 * a.mean:.2f}% ({100 * a.std:.2f})"
                row += f" {cell:>16}"
            lines.append(row)
        lines.append("")
    return "\n".join(lines)


def write_reports(out_dir, grid: ExperimentGrid, results: Sequence[RunResult],
                  aggregates: Sequence[CellAggregate], bins: int = 20) -> Dict[str, str]:
    """Emit report.csv, report.json, confusion and calibration artifacts.

    All writes are atomic; returns the mapping of artifact name to path.
    """
    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    conf = confusion(results)
    calib = calibration(results, bins=bins)
    artifacts = {
        "report.csv": csv_report_text(aggregates),
        "report.json": json_report_text(grid, results),
        "confusion.json": json.dumps(conf.to_json(), sort_keys=True,
                                     separators=(",", ":")),
        "confusion.txt": conf.render_text(),
        "calibration.json": json.dumps(calib.to_json(), sort_keys=True,
                                       separators=(",", ":")),
        "calibration.txt": calib.render_text(),
    }
    paths = {}
    for name, text in artifacts.items():
        path = os.path.join(out_dir, name)
        tmp = path + ".tmp"
        try:
            with open(tmp, "w") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except OSError as exc:
            raise IoError(f"cannot write report {path}: {exc}") from exc
        paths[name] = path
    return paths
