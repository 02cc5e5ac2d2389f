"""Synthetic chest-X-ray-like data with controllable group and disease pixel
signals, resampled into bias-amplified training sets and balanced test sets.

Every image is
    base pattern
    + a * signal_amp * mask(sa_region)
    + y * signal_amp * mask(disease_region)
    + (a + y) * shared_amp_frac * signal_amp * mask(shared_region)
    + N(0, noise_sigma^2) pixel noise,
where a is the binary group label and y the binary disease label. The shared
block ties the two labels to overlapping pixels, which is what lets a
classifier trained on group-imbalanced counts pick up group information as a
shortcut for the disease.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .prng import derive_seed
from .tensor_io import load_tensor, save_tensor


def _block(side: int, row0: int, col0: int, size: int) -> list[int]:
    return [r * side + c
            for r in range(row0, row0 + size)
            for c in range(col0, col0 + size)]


def default_sa_region(side: int = 16) -> list[int]:
    return _block(side, 0, 0, 6)  # top-left 6x6


def default_disease_region(side: int = 16) -> list[int]:
    return _block(side, side - 4, side - 4, 4)  # bottom-right 4x4


def default_shared_region(side: int = 16) -> list[int]:
    mid = side // 2 - 2
    return _block(side, mid, mid, 4)  # center 4x4


@dataclass
class SynthConfig:
    side: int = 16
    sa_region: list[int] = field(default_factory=default_sa_region)
    disease_region: list[int] = field(default_factory=default_disease_region)
    shared_region: list[int] = field(default_factory=default_shared_region)
    signal_amp: float = 1.5
    shared_amp_frac: float = 0.2
    noise_sigma: float = 0.4
    pattern_seed: int = 7

    def __post_init__(self):
        if set(self.sa_region) & set(self.disease_region):
            raise ValueError("sa_region and disease_region must be disjoint")
        if not self.sa_region or not self.disease_region:
            raise ValueError("regions must be nonempty")

    @property
    def dim(self) -> int:
        return self.side * self.side


@dataclass
class CellCounts:
    """Counts n[y][a] on the 2x2 grid (negative/positive x group0/group1)."""

    n: list[list[int]]

    def __post_init__(self):
        arr = np.asarray(self.n)
        if arr.shape != (2, 2) or np.any(arr < 0):
            raise ValueError("counts must be a nonnegative 2x2 grid")
        self.n = [[int(v) for v in row] for row in self.n]

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.n)


# The bias-amplified per-disease sampling grids (train) and the balanced test
# grids, n[y][a] with a=0 mapped to the first group column.
PNEUMONIA_TRAIN = CellCounts([[1500, 150], [150, 1500]])
EDEMA_TRAIN = CellCounts([[5000, 500], [500, 5000]])
PLEURAL_EFFUSION_TRAIN = CellCounts([[5000, 500], [500, 5000]])
PNEUMONIA_TEST = CellCounts([[100, 100], [100, 100]])
EDEMA_TEST = CellCounts([[200, 200], [200, 200]])
PLEURAL_EFFUSION_TEST = CellCounts([[200, 200], [200, 200]])

# Desk-scale defaults: the pleural-effusion ratios at scale 0.1 for training
# (keeps the 10:1 subgroup gap) and a balanced test grid large enough that
# rate estimates are stable.
DESK_TRAIN = CellCounts([[500, 50], [50, 500]])
DESK_TEST = CellCounts([[50, 50], [50, 50]])


@dataclass
class LabeledImageSet:
    images: np.ndarray  # [N, D] f32
    sa_labels: np.ndarray | None = None  # a in {0,1}
    disease_labels: np.ndarray | None = None  # y in {0,1}
    config: SynthConfig | None = None
    seed: int | None = None
    counts: CellCounts | None = None

    def __post_init__(self):
        n = self.images.shape[0]
        for name in ("sa_labels", "disease_labels"):
            lab = getattr(self, name)
            if lab is not None:
                lab = np.asarray(lab, dtype=np.uint8)
                if lab.shape != (n,) or np.any(lab > 1):
                    raise ValueError(f"{name} must be binary with length {n}")
                setattr(self, name, lab)

    def __len__(self) -> int:
        return self.images.shape[0]


def base_pattern(cfg: SynthConfig) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(cfg.pattern_seed, 0xBA5E))
    return rng.uniform(0.0, 1.0, cfg.dim).astype(np.float32)


def _region_mask(cfg: SynthConfig, region: list[int]) -> np.ndarray:
    mask = np.zeros(cfg.dim, dtype=np.float32)
    mask[region] = 1.0
    return mask


def generate(cfg: SynthConfig, counts: CellCounts, seed: int) -> LabeledImageSet:
    """Draw a labeled set honoring the exact per-cell counts."""
    if counts.total == 0:
        raise ValueError("total count is zero")
    base = base_pattern(cfg)
    m_sa = _region_mask(cfg, cfg.sa_region)
    m_dis = _region_mask(cfg, cfg.disease_region)
    m_shared = _region_mask(cfg, cfg.shared_region)
    rng = np.random.default_rng(derive_seed(seed, 0xDA7A))

    images, ys, sas = [], [], []
    for y in (0, 1):
        for a in (0, 1):
            k = counts.n[y][a]
            if k == 0:
                continue
            mean = (base
                    + a * cfg.signal_amp * m_sa
                    + y * cfg.signal_amp * m_dis
                    + (a + y) * cfg.shared_amp_frac * cfg.signal_amp * m_shared)
            noise = rng.normal(0.0, cfg.noise_sigma, (k, cfg.dim)) if cfg.noise_sigma > 0 \
                else np.zeros((k, cfg.dim))
            images.append((mean[None, :] + noise).astype(np.float32))
            ys.append(np.full(k, y, dtype=np.uint8))
            sas.append(np.full(k, a, dtype=np.uint8))
    return LabeledImageSet(images=np.concatenate(images),
                           sa_labels=np.concatenate(sas),
                           disease_labels=np.concatenate(ys),
                           config=cfg, seed=seed, counts=counts)


def amplify_bias(counts_template: CellCounts, scale: float) -> CellCounts:
    """Scale a sampling grid, preserving the subgroup bias ratios."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    scaled = [[int(round(v * scale)) for v in row] for row in counts_template.n]
    for row_t, row_s in zip(counts_template.n, scaled):
        for v_t, v_s in zip(row_t, row_s):
            if v_t > 0 and v_s == 0:
                raise ValueError(f"scale {scale} collapses nonzero cell {v_t} to zero")
    return CellCounts(scaled)


def subgroup_positive_rate(dataset: LabeledImageSet) -> dict[int, float]:
    """rate(a) = #(y=1 and A=a) / #(A=a)."""
    if dataset.sa_labels is None or dataset.disease_labels is None:
        raise ValueError("both label arrays required")
    rates = {}
    for a in (0, 1):
        in_group = dataset.sa_labels == a
        if not np.any(in_group):
            raise ValueError(f"group {a} is empty")
        rates[a] = float(np.mean(dataset.disease_labels[in_group]))
    return rates


# ---------------------------------------------------------------------------
# persistence

def save_dataset(dirpath, dataset: LabeledImageSet) -> None:
    os.makedirs(dirpath, exist_ok=True)
    cfg = dataset.config
    manifest = {
        "kind": "labeled_image_set",
        "n": len(dataset),
        "seed": dataset.seed,
        "counts": dataset.counts.n if dataset.counts else None,
        "config": None if cfg is None else {
            "side": cfg.side,
            "sa_region": cfg.sa_region,
            "disease_region": cfg.disease_region,
            "shared_region": cfg.shared_region,
            "signal_amp": cfg.signal_amp,
            "shared_amp_frac": cfg.shared_amp_frac,
            "noise_sigma": cfg.noise_sigma,
            "pattern_seed": cfg.pattern_seed,
        },
        "has_sa_labels": dataset.sa_labels is not None,
        "has_disease_labels": dataset.disease_labels is not None,
    }
    save_tensor(os.path.join(dirpath, "images.udet"), dataset.images)
    if dataset.sa_labels is not None:
        dataset.sa_labels.tofile(os.path.join(dirpath, "sa_labels.bin"))
    if dataset.disease_labels is not None:
        dataset.disease_labels.tofile(os.path.join(dirpath, "disease_labels.bin"))
    with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def load_dataset(dirpath) -> LabeledImageSet:
    with open(os.path.join(dirpath, "manifest.json")) as fh:
        manifest = json.load(fh)
    cfg = SynthConfig(**manifest["config"]) if manifest["config"] else None
    images = load_tensor(os.path.join(dirpath, "images.udet"))
    sa = disease = None
    if manifest["has_sa_labels"]:
        sa = np.fromfile(os.path.join(dirpath, "sa_labels.bin"), dtype=np.uint8)
    if manifest["has_disease_labels"]:
        disease = np.fromfile(os.path.join(dirpath, "disease_labels.bin"), dtype=np.uint8)
    counts = CellCounts(manifest["counts"]) if manifest.get("counts") else None
    return LabeledImageSet(images=images, sa_labels=sa, disease_labels=disease,
                           config=cfg, seed=manifest["seed"], counts=counts)


def export_csv(path, dataset: LabeledImageSet) -> None:
    """Flat per-sample dump for eyeballing: labels then pixel values."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = dataset.images.shape[1]
        writer.writerow(["sa", "disease"] + [f"px{i}" for i in range(dim)])
        for i in range(len(dataset)):
            sa = "" if dataset.sa_labels is None else int(dataset.sa_labels[i])
            y = "" if dataset.disease_labels is None else int(dataset.disease_labels[i])
            writer.writerow([sa, y] + [f"{v:.6g}" for v in dataset.images[i]])
