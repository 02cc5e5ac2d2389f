"""White-box learning of the universal edit: a single image-shaped noise
tensor added to every input, trained by Adam to maximize the frozen
group-attribute head's cross-entropy while an L2 penalty keeps it small.
Also the downstream pieces: applying the edit, training the disease head on
edited inputs, and exporting the per-pixel noise map.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .models import LinearHead, TrainConfig, head_forward, train_head
from .numerics import (
    cross_entropy_batch,
    cross_entropy_grad,
    init_optimizer,
    l2_norm,
    l2_norm_grad,
    optimizer_step,
)
from .oracle import FORWARD_WITH_INPUT_GRAD, CapabilityError
from .prng import derive_seed
from .tensor_io import load_tensor, save_tensor


@dataclass
class UdeConfig:
    lam: float = 0.01  # L2 penalty coefficient
    lr: float = 0.01
    epochs: int = 50
    # effectively full-batch at desk scale; small batches give the Adam attack
    # enough steps to push every input into encoder saturation, which destroys
    # downstream utility along with the group signal
    batch_size: int = 2048
    seed: int = 0
    clamp: tuple[float, float] | None = None  # optional pixel range after edit

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


@dataclass
class EditArtifact:
    eps: np.ndarray  # [D], image-shaped universal edit
    loss_trace: list[float]  # per-epoch mean objective
    eps_norm_trace: list[float]  # per-epoch ||eps||_2
    config: dict
    seed: int
    mode: str = "whitebox"
    iteration_trace: list[dict] = field(default_factory=list)  # gezo only


def edit_objective_batch(oracle, sa_head: LinearHead, batch: np.ndarray,
                         sa_labels: np.ndarray, eps: np.ndarray, lam: float) -> float:
    """-mean CE of the group head on edited inputs, plus lam*||eps||_2.

    Needs only forward access; this is the loss both optimizers drive down.
    """
    z = oracle.embed(batch + eps.astype(batch.dtype))
    logits = head_forward(sa_head, z)
    ce = float(np.mean(cross_entropy_batch(logits, sa_labels)))
    return -ce + lam * l2_norm(eps)


def edit_objective_grad(oracle, sa_head: LinearHead, batch: np.ndarray,
                        sa_labels: np.ndarray, eps: np.ndarray, lam: float):
    """(objective, d objective / d eps) on one batch, gradients through the
    encoder: -(1/B) sum_i dCE_i/dx_i + lam * eps/||eps||."""
    xb = batch + eps.astype(batch.dtype)
    zb = oracle.embed(xb)
    logits = head_forward(sa_head, zb)
    ce = float(np.mean(cross_entropy_batch(logits, sa_labels)))
    loss = -ce + lam * l2_norm(eps)
    w = sa_head.weight.astype(batch.dtype)
    upstream = cross_entropy_grad(logits, sa_labels) @ w.T
    gx = oracle.embed_with_input_grad(xb, upstream)
    grad = (-gx.sum(axis=0) / batch.shape[0]
            + lam * l2_norm_grad(eps.astype(batch.dtype)))
    return loss, grad.astype(eps.dtype)


def learn_ude_whitebox(oracle, sa_head: LinearHead, images: np.ndarray,
                       sa_labels: np.ndarray, cfg: UdeConfig) -> EditArtifact:
    """Adam on the edit against a frozen group head, gradients through the
    encoder. The head and encoder are never modified."""
    if oracle.capability != FORWARD_WITH_INPUT_GRAD:
        raise CapabilityError("white-box edit learning needs input gradients; "
                              "use the zeroth-order optimizer instead")
    if sa_labels is None:
        raise ValueError("group labels required")
    n, dim = images.shape
    eps = np.zeros(dim, dtype=np.float32)
    opt = init_optimizer("adam", cfg.lr, eps.shape)
    rng = np.random.default_rng(derive_seed(cfg.seed, 0xED17))

    loss_trace, norm_trace = [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        nb = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grad = edit_objective_grad(oracle, sa_head, images[idx],
                                             sa_labels[idx], eps, cfg.lam)
            total += loss
            nb += 1
            eps = optimizer_step(opt, eps, grad)
        loss_trace.append(total / nb)
        norm_trace.append(l2_norm(eps))
    return EditArtifact(eps=eps, loss_trace=loss_trace, eps_norm_trace=norm_trace,
                        config=vars(cfg).copy(), seed=cfg.seed, mode="whitebox")


def apply_edit(images: np.ndarray, eps: np.ndarray,
               clamp: tuple[float, float] | None = None) -> np.ndarray:
    if images.shape[-1] != eps.shape[-1]:
        raise ValueError(f"edit dim {eps.shape[-1]} != image dim {images.shape[-1]}")
    out = images + eps.astype(images.dtype)
    if clamp is not None:
        out = np.clip(out, clamp[0], clamp[1])
    return out


def train_fair_disease(oracle, eps: np.ndarray, images: np.ndarray,
                       disease_labels: np.ndarray, cfg: TrainConfig | None = None):
    """Train the disease head on embeddings of edited inputs; only the head
    is trainable. eps=0 is exactly the plain (unedited) baseline path."""
    if disease_labels is None:
        raise ValueError("disease labels required")
    if cfg is None:
        cfg = TrainConfig(optimizer="adamw", lr=1.25e-4, epochs=50)
    return train_head(oracle, images, disease_labels, cfg, edit=eps)


def export_noise_map(eps: np.ndarray, top_fraction: float):
    """Per-pixel normalized |eps| plus the mask of the top-fraction pixels.

    Returns (norm_map, mask, degenerate). A constant edit has zero range, so
    the map is all zeros, the mask empty, and the degenerate flag set.
    """
    if not (0 < top_fraction <= 1):
        raise ValueError("top_fraction must be in (0, 1]")
    mag = np.abs(eps).astype(np.float64)
    lo, hi = mag.min(), mag.max()
    if hi - lo <= 0:
        return np.zeros_like(mag), np.zeros(eps.shape, dtype=bool), True
    norm = (mag - lo) / (hi - lo)
    if top_fraction == 1.0:
        return norm, np.ones(eps.shape, dtype=bool), False
    threshold = np.quantile(norm, 1.0 - top_fraction)
    return norm, norm > threshold, False


def write_noise_map_csv(dirpath, eps: np.ndarray, side: int, top_fraction: float):
    """H x W CSV grids of the normalized map and the binary top mask."""
    norm, mask, degenerate = export_noise_map(eps, top_fraction)
    os.makedirs(dirpath, exist_ok=True)
    for name, grid, fmt in (("noise_map.csv", norm.reshape(side, side), "{:.6f}"),
                            ("noise_mask.csv", mask.reshape(side, side), "{:d}")):
        with open(os.path.join(dirpath, name), "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in grid:
                writer.writerow([fmt.format(v) for v in row])
    return degenerate


# ---------------------------------------------------------------------------
# persistence

def save_edit(dirpath, artifact: EditArtifact) -> None:
    os.makedirs(dirpath, exist_ok=True)
    save_tensor(os.path.join(dirpath, "eps.udet"), artifact.eps)
    provenance = {
        "kind": "edit_artifact",
        "mode": artifact.mode,
        "seed": artifact.seed,
        "config": artifact.config,
        "loss_trace": artifact.loss_trace,
        "eps_norm_trace": artifact.eps_norm_trace,
        "iteration_trace": artifact.iteration_trace,
    }
    with open(os.path.join(dirpath, "provenance.json"), "w") as fh:
        json.dump(provenance, fh, indent=2)


def load_edit(dirpath) -> EditArtifact:
    with open(os.path.join(dirpath, "provenance.json")) as fh:
        prov = json.load(fh)
    return EditArtifact(eps=load_tensor(os.path.join(dirpath, "eps.udet")),
                        loss_trace=prov["loss_trace"],
                        eps_norm_trace=prov["eps_norm_trace"],
                        config=prov["config"], seed=prov["seed"], mode=prov["mode"],
                        iteration_trace=prov.get("iteration_trace", []))
