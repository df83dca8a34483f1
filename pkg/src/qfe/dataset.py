"""Labeled circuit datasets: deterministic generation, labeling, and the JSONL format.

File layout (format ``qfe-ds/1``): the first line is the manifest object, each
following line is one record::

    {"format": "qfe-ds/1", "kind": "manifest", "count": N, "counts": {...},
     "config": {...}, "config_digest": "...", "label_histogram": {...}}
    {"index": 0, "seed": ..., "family": ..., "tiling": [[x0, y0, w, h], ...] | null,
     "shape": [depth, rows, cols, channels], "circuit": {...},
     "label": float | null, "label_kind": str | null, "stderr": float | null,
     "noise_digest": str | null}

Record ``i`` is generated from ``record_seed(master_seed, i)``, a splitmix64
mix of the two, so output does not depend on the number of workers.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from qfe.errors import ConfigError, DatasetFormatError
from qfe.lattice import (
    PALETTES,
    LatticeCircuit,
    Palette,
    Tiling,
    clifford_reducible_circuit,
    default_tiling_catalog,
    encode_one_hot,
    random_circuit,
    tiled_circuit,
)
from qfe.noise import (
    GATE_PAIR_ONLY,
    SimNoiseModel,
    StochasticModel,
    noise_digest,
    noise_from_dict,
    product_fidelity,
)
from qfe.simulator import DENSITY_LIMIT, STATEVECTOR_LIMIT, exact_fidelity, tiled_fidelity, trajectory_fidelity

FORMAT_VERSION = "qfe-ds/1"
FAMILIES = ("random", "clifford-reducible")
LABELERS = ("product-model", "exact-density", "trajectory", "tiled-product")
HISTOGRAM_BINS = 10

_MASK64 = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def record_seed(master_seed: int, index: int) -> int:
    """64-bit seed of record ``index``: splitmix64(splitmix64(master) + index)."""
    return splitmix64((splitmix64(int(master_seed) & _MASK64) + int(index)) & _MASK64)


def label_seed(seed: int) -> int:
    """Seed of a record's stochastic labeler, kept apart from its generator stream."""
    return splitmix64(seed ^ 0x6C61626C)


@dataclass
class DatasetConfig:
    family: str = "random"
    rows: int = 3
    cols: int = 3
    depth: int = 1
    count: int = 0
    palette: str = "clifford"
    two_qubit_fraction: float = 0.3
    pair_rate: float = 0.15
    tiled: bool = False
    tilings: list | None = None
    noise: dict | None = None
    labeler: str | None = None
    master_seed: int = 0
    shots: int = 4096
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.palette not in PALETTES:
            raise ConfigError(f"palette must be one of {sorted(PALETTES)}, got {self.palette!r}")
        if self.rows < 1 or self.cols < 1 or self.depth < 1:
            raise ConfigError("rows, cols and depth must be positive")
        if self.family == "clifford-reducible" and self.depth < 2:
            raise ConfigError("clifford-reducible circuits need depth >= 2")
        if self.count < 0:
            raise ConfigError("count must be non-negative")
        if self.workers < 1 or self.shots < 2:
            raise ConfigError("workers must be >= 1 and shots >= 2")
        if not 0 <= self.two_qubit_fraction <= 1 or not 0 <= self.pair_rate <= 1:
            raise ConfigError("two_qubit_fraction and pair_rate must lie in [0, 1]")
        for t in self.tiling_catalog():
            try:
                t.validate(self.rows, self.cols)
            except ValueError as exc:
                raise ConfigError(f"bad tiling {t.to_list()}: {exc}") from None
        if self.labeler is not None:
            check_labeler(self.labeler, self.noise_model(), self.rows, self.cols, self.tiled, self.tiling_catalog())

    def noise_model(self):
        if self.noise is None:
            return None
        return noise_from_dict(self.noise)

    def tiling_catalog(self) -> list[Tiling]:
        if not self.tiled:
            return []
        if self.tilings:
            return [Tiling(tuple(tuple(r) for r in t)) for t in self.tilings]
        return default_tiling_catalog(self.rows, self.cols)

    def generator_palette(self) -> Palette:
        return PALETTES[self.palette]

    def encoding_palette(self) -> Palette:
        p = self.generator_palette()
        if self.family == "clifford-reducible":
            return Palette(p.single, p.two, p.identity_weight, t_channels=True)
        return p

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown dataset config keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def check_labeler(labeler: str, noise, rows: int, cols: int, tiled: bool, catalog=()) -> None:
    """Raise ConfigError if ``labeler`` cannot handle the configuration."""
    n = rows * cols
    if labeler not in LABELERS:
        raise ConfigError(f"labeler must be one of {LABELERS}, got {labeler!r}")
    if labeler == "product-model":
        if not isinstance(noise, StochasticModel):
            raise ConfigError("product-model labeler needs a stochastic noise config")
        return
    if not isinstance(noise, SimNoiseModel):
        raise ConfigError(f"{labeler} labeler needs a sim noise config")
    if labeler == "exact-density" and n > DENSITY_LIMIT:
        raise ConfigError(f"exact-density labeling of {n} qubits exceeds the density-matrix limit of {DENSITY_LIMIT}")
    if labeler == "trajectory" and n > STATEVECTOR_LIMIT:
        raise ConfigError(f"trajectory labeling of {n} qubits exceeds the statevector limit of {STATEVECTOR_LIMIT}")
    if labeler == "tiled-product":
        if not tiled:
            raise ConfigError("tiled-product labeler needs tiled circuits")
        if noise.crosstalk_scope != GATE_PAIR_ONLY:
            raise ConfigError("tiled-product labeler needs gate-pair crosstalk scope")
        biggest = max((w * h for t in catalog for (_, _, w, h) in t.tiles), default=0)
        if biggest > DENSITY_LIMIT:
            raise ConfigError(f"tile of {biggest} qubits exceeds the density-matrix limit of {DENSITY_LIMIT}")


@dataclass
class LabeledCircuit:
    index: int
    seed: int
    family: str
    circuit: LatticeCircuit
    shape: tuple
    tiling: Tiling | None = None
    label: float | None = None
    label_kind: str | None = None
    stderr: float | None = None
    noise_digest: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "family": self.family,
            "tiling": self.tiling.to_list() if self.tiling is not None else None,
            "shape": list(self.shape),
            "circuit": self.circuit.to_dict(),
            "label": self.label,
            "label_kind": self.label_kind,
            "stderr": self.stderr,
            "noise_digest": self.noise_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabeledCircuit":
        tiling = d.get("tiling")
        label = d.get("label")
        if label is not None and not 0.0 <= label <= 1.0:
            raise DatasetFormatError(f"label {label} outside [0, 1]")
        return cls(
            index=int(d["index"]),
            seed=int(d["seed"]),
            family=str(d["family"]),
            circuit=LatticeCircuit.from_dict(d["circuit"]),
            shape=tuple(int(v) for v in d["shape"]),
            tiling=Tiling(tuple(tuple(t) for t in tiling)) if tiling is not None else None,
            label=None if label is None else float(label),
            label_kind=d.get("label_kind"),
            stderr=None if d.get("stderr") is None else float(d["stderr"]),
            noise_digest=d.get("noise_digest"),
        )

    def __eq__(self, other):
        return isinstance(other, LabeledCircuit) and self.to_dict() == other.to_dict()


@dataclass
class Dataset:
    config: DatasetConfig
    records: list = field(default_factory=list)

    def manifest(self) -> dict:
        counts: dict = {}
        for r in self.records:
            counts[r.family] = counts.get(r.family, 0) + 1
        return {
            "format": FORMAT_VERSION,
            "kind": "manifest",
            "count": len(self.records),
            "counts": counts,
            "config": self.config.to_dict(),
            "config_digest": self.config.digest(),
            "label_histogram": label_histogram([r.label for r in self.records]),
        }

    def labels(self) -> np.ndarray:
        if any(r.label is None for r in self.records):
            raise DatasetFormatError("dataset has unlabeled records")
        return np.array([r.label for r in self.records], dtype=float)

    def tensors(self, dtype=np.float32) -> np.ndarray:
        palette = self.config.encoding_palette()
        shape = (len(self.records), self.config.depth, self.config.rows, self.config.cols, palette.n_channels)
        out = np.zeros(shape, dtype=dtype)
        for k, r in enumerate(self.records):
            out[k] = encode_one_hot(r.circuit, palette)
        return out

    def subset(self, indices) -> "Dataset":
        return Dataset(self.config, [self.records[int(i)] for i in indices])


def label_histogram(labels) -> dict:
    vals = np.array([v for v in labels if v is not None], dtype=float)
    counts, edges = np.histogram(vals, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    return {"edges": [float(e) for e in edges], "counts": [int(c) for c in counts], "unlabeled": len(labels) - vals.size}


def generate_record(cfg: DatasetConfig, index: int) -> LabeledCircuit:
    seed = record_seed(cfg.master_seed, index)
    rng = np.random.default_rng(seed)
    catalog = cfg.tiling_catalog()
    tiling = catalog[int(rng.integers(len(catalog)))] if catalog else None
    palette = cfg.generator_palette()
    if cfg.family == "clifford-reducible":
        c = clifford_reducible_circuit(cfg.rows, cfg.cols, cfg.depth, cfg.pair_rate, rng, palette,
                                       cfg.two_qubit_fraction, tiling)
    elif tiling is not None:
        c = tiled_circuit(cfg.rows, cfg.cols, tiling, cfg.depth, palette, cfg.two_qubit_fraction, rng)
    else:
        c = random_circuit(cfg.rows, cfg.cols, cfg.depth, palette, cfg.two_qubit_fraction, rng)
    shape = (cfg.depth, cfg.rows, cfg.cols, cfg.encoding_palette().n_channels)
    return LabeledCircuit(index, seed, cfg.family, c, shape, tiling)


def label_record(rec: LabeledCircuit, labeler: str, noise, shots: int = 4096) -> LabeledCircuit:
    """Return a copy of ``rec`` carrying a fidelity label."""
    stderr = None
    if labeler == "product-model":
        value = product_fidelity(rec.circuit, noise)
    elif labeler == "exact-density":
        value = exact_fidelity(rec.circuit, noise)
    elif labeler == "trajectory":
        est = trajectory_fidelity(rec.circuit, noise, shots=shots, seed=label_seed(rec.seed))
        value, stderr = est.value, est.stderr
    elif labeler == "tiled-product":
        if rec.tiling is None:
            raise ConfigError(f"record {rec.index} has no tiling for the tiled-product labeler")
        value = tiled_fidelity(rec.circuit, rec.tiling, noise).value
    else:
        raise ConfigError(f"unknown labeler {labeler!r}")
    value = min(1.0, max(0.0, float(value)))
    return replace(rec, label=value, label_kind=labeler, stderr=stderr, noise_digest=noise_digest(noise))


def _build_one(args):
    cfg, index = args
    rec = generate_record(cfg, index)
    if cfg.labeler is not None:
        rec = label_record(rec, cfg.labeler, cfg.noise_model(), cfg.shots)
    return rec


def _relabel_one(args):
    rec, labeler, noise, shots = args
    return label_record(rec, labeler, noise, shots)


def _ordered_map(fn, items, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def build_dataset(cfg: DatasetConfig) -> Dataset:
    """Generate (and, if a labeler is set, label) ``cfg.count`` records in index order."""
    cfg.validate()
    return Dataset(cfg, _ordered_map(_build_one, [(cfg, i) for i in range(cfg.count)], cfg.workers))


def label_dataset(ds: Dataset, labeler: str, noise: dict, shots: int | None = None, workers: int = 1) -> Dataset:
    """Attach labels to every record; the returned config records the labeler and noise."""
    cfg = replace(ds.config, labeler=labeler, noise=dict(noise), shots=shots or ds.config.shots, workers=workers)
    model = cfg.noise_model()
    return Dataset(cfg, _ordered_map(_relabel_one, [(r, labeler, model, cfg.shots) for r in ds.records], workers))


def split_dataset(ds: Dataset, n_test: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded disjoint (train, test) split; test gets ``n_test`` records."""
    n = len(ds.records)
    if not 0 <= n_test <= n:
        raise ConfigError(f"cannot take {n_test} test records from {n}")
    order = np.random.default_rng(splitmix64(seed)).permutation(n)
    test_idx = np.sort(order[:n_test])
    train_idx = np.sort(order[n_test:])
    return ds.subset(train_idx), ds.subset(test_idx)


def dumps_dataset(ds: Dataset) -> str:
    lines = [json.dumps(ds.manifest(), sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in ds.records]
    return "\n".join(lines) + "\n"


def write_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_dataset(ds))


def read_dataset(path) -> Dataset:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise DatasetFormatError(f"cannot read dataset {path}: {exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{path}: empty file, expected a manifest on line 1")
    try:
        manifest = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}:1: malformed manifest: {exc}") from None
    if manifest.get("format") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}:1: unsupported format {manifest.get('format')!r}, expected {FORMAT_VERSION}")
    try:
        cfg = DatasetConfig.from_dict(manifest["config"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise DatasetFormatError(f"{path}:1: bad config in manifest: {exc}") from None
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            records.append(LabeledCircuit.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{path}:{lineno}: malformed record: {exc}") from None
    if manifest.get("count") != len(records):
        raise DatasetFormatError(
            f"{path}: manifest declares {manifest.get('count')} records but the file holds {len(records)}"
        )
    return Dataset(cfg, records)
