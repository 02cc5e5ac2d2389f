"""Pipeline orchestration: wiring data generation, head training, edit
learning and evaluation together, with per-stage run manifests so every
artifact can be reproduced byte-for-byte from its recorded config and seeds.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import __version__
from .datagen import (
    DESK_TEST,
    DESK_TRAIN,
    CellCounts,
    LabeledImageSet,
    SynthConfig,
    generate,
    load_dataset,
    save_dataset,
)
from .editing import (
    EditArtifact,
    UdeConfig,
    learn_ude_whitebox,
    load_edit,
    save_edit,
    train_fair_disease,
)
from .fairness import FairnessReport, CSV_HEADER, evaluate
from .gezo import GezoConfig, learn_ude_gezo
from .models import (
    TrainConfig,
    build_encoder,
    encoder_forward,
    head_accuracy,
    load_encoder,
    load_head,
    save_encoder,
    save_head,
    train_head,
)
from .oracle import (
    FORWARD_ONLY,
    FORWARD_WITH_INPUT_GRAD,
    InProcessOracle,
    OracleServer,
    RemoteOracle,
)
from .prng import derive_seed


class ConfigError(ValueError):
    pass


# seed-stream tags, mixed with the global seed via prng.derive_seed
TAG_DATA_TRAIN = 0x01
TAG_DATA_TEST = 0x02
TAG_SA_TRAIN = 0x04
TAG_EDIT = 0x05
TAG_DISEASE = 0x06
TAG_SWEEP = 0x07


@dataclass
class PipelineConfig:
    seed: int = 42
    encoder_seed: int = 16  # one frozen encoder shared across runs, like a hosted FM
    out_dir: str = "runs/default"
    mode: str = "whitebox"  # or "gezo"
    oracle: str = "inprocess"  # or a server address like "127.0.0.1:7447"
    synth: SynthConfig = field(default_factory=SynthConfig)
    train_counts: CellCounts = field(default_factory=lambda: CellCounts(DESK_TRAIN.n))
    test_counts: CellCounts = field(default_factory=lambda: CellCounts(DESK_TEST.n))
    sa_train: TrainConfig = field(
        default_factory=lambda: TrainConfig("adam", 1e-4, 50, batch_size=8))
    disease_train: TrainConfig = field(
        default_factory=lambda: TrainConfig("adamw", 1.25e-4, 50, batch_size=8))
    ude: UdeConfig = field(default_factory=UdeConfig)
    gezo: GezoConfig = field(default_factory=GezoConfig)

    def __post_init__(self):
        if self.mode not in ("whitebox", "gezo"):
            raise ConfigError(f"mode must be whitebox or gezo, got {self.mode!r}")
        if self.mode == "whitebox" and self.oracle != "inprocess":
            raise ConfigError("whitebox mode needs gradient access; remote oracles "
                              "are forward-only by protocol")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "PipelineConfig":
        raw = dict(raw)
        try:
            for key, ctor in (("synth", SynthConfig), ("sa_train", TrainConfig),
                              ("disease_train", TrainConfig), ("ude", UdeConfig),
                              ("gezo", GezoConfig)):
                if key in raw and isinstance(raw[key], dict):
                    raw[key] = ctor(**raw[key])
            for key in ("train_counts", "test_counts"):
                if key in raw and not isinstance(raw[key], CellCounts):
                    grid = raw[key]["n"] if isinstance(raw[key], dict) else raw[key]
                    raw[key] = CellCounts(grid)
            cfg = cls(**raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if isinstance(cfg.ude.clamp, list):
            cfg.ude.clamp = tuple(cfg.ude.clamp)
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "PipelineConfig":
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid config file {path}: {exc}") from exc
        return cls.from_dict(raw)


def derive(cfg: PipelineConfig, tag: int) -> int:
    return derive_seed(cfg.seed, tag)


def make_oracle(cfg: PipelineConfig, need_grad: bool):
    if cfg.oracle == "inprocess":
        enc = _ensure_encoder(cfg)
        cap = FORWARD_WITH_INPUT_GRAD if need_grad else FORWARD_ONLY
        return InProcessOracle(enc, capability=cap)
    if need_grad:
        raise ConfigError("remote oracles are forward-only; gradient access "
                          "requires oracle=inprocess")
    return RemoteOracle(cfg.oracle)


# ---------------------------------------------------------------------------
# artifact layout helpers

def _paths(cfg: PipelineConfig) -> dict:
    out = cfg.out_dir
    return {
        "train_data": os.path.join(out, "data", "train"),
        "test_data": os.path.join(out, "data", "test"),
        "encoder": os.path.join(out, "encoder"),
        "sa_head": os.path.join(out, "sa_head"),
        "edit": os.path.join(out, "edit"),
        "disease_head": os.path.join(out, "disease_head"),
        "erm_head": os.path.join(out, "erm_head"),
        "reports": os.path.join(out, "reports"),
        "noise_map": os.path.join(out, "noise_map"),
        "manifests": os.path.join(out, "manifests"),
    }


def _file_digests(root) -> dict:
    digests = {}
    for dirpath, _, files in os.walk(root):
        for name in sorted(files):
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                digests[os.path.relpath(path, root)] = hashlib.sha256(fh.read()).hexdigest()
    return digests


def _write_manifest(cfg: PipelineConfig, stage: str, inputs: list, outputs: list) -> None:
    paths = _paths(cfg)
    os.makedirs(paths["manifests"], exist_ok=True)
    manifest = {
        "stage": stage,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "inputs": {p: _file_digests(p) for p in inputs if os.path.exists(p)},
        "outputs": {p: _file_digests(p) for p in outputs if os.path.exists(p)},
    }
    with open(os.path.join(paths["manifests"], f"{stage}.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def _ensure_encoder(cfg: PipelineConfig):
    path = _paths(cfg)["encoder"]
    if os.path.exists(os.path.join(path, "manifest.json")):
        return load_encoder(path)
    enc = build_encoder(seed=cfg.encoder_seed, input_dim=cfg.synth.dim)
    save_encoder(path, enc)
    return enc


# ---------------------------------------------------------------------------
# stages

def cmd_generate(cfg: PipelineConfig) -> None:
    paths = _paths(cfg)
    train = generate(cfg.synth, cfg.train_counts, derive(cfg, TAG_DATA_TRAIN))
    test = generate(cfg.synth, cfg.test_counts, derive(cfg, TAG_DATA_TEST))
    save_dataset(paths["train_data"], train)
    save_dataset(paths["test_data"], test)
    _write_manifest(cfg, "generate", [], [paths["train_data"], paths["test_data"]])


def cmd_train_sa(cfg: PipelineConfig) -> float:
    """Train the group-attribute head on clean embeddings; returns its
    training-set accuracy."""
    paths = _paths(cfg)
    train = load_dataset(paths["train_data"])
    oracle = make_oracle(cfg, need_grad=False)
    sa_cfg = TrainConfig(cfg.sa_train.optimizer, cfg.sa_train.lr, cfg.sa_train.epochs,
                         cfg.sa_train.batch_size, seed=derive(cfg, TAG_SA_TRAIN))
    head, trace = train_head(oracle, train.images, train.sa_labels, sa_cfg)
    acc = head_accuracy(head, oracle.embed(train.images), train.sa_labels)
    save_head(paths["sa_head"], head,
              meta={"task": "sensitive_attribute", "train_accuracy": acc,
                    "loss_trace": trace})
    _write_manifest(cfg, "train_sa", [paths["train_data"], paths["encoder"]],
                    [paths["sa_head"], paths["encoder"]])
    return acc


def cmd_learn_edit(cfg: PipelineConfig) -> EditArtifact:
    paths = _paths(cfg)
    train = load_dataset(paths["train_data"])
    sa_head = load_head(paths["sa_head"])
    if cfg.mode == "whitebox":
        oracle = make_oracle(cfg, need_grad=True)
        ude_cfg = UdeConfig(cfg.ude.lam, cfg.ude.lr, cfg.ude.epochs,
                            cfg.ude.batch_size, seed=derive(cfg, TAG_EDIT),
                            clamp=cfg.ude.clamp)
        artifact = learn_ude_whitebox(oracle, sa_head, train.images,
                                      train.sa_labels, ude_cfg)
    else:
        oracle = make_oracle(cfg, need_grad=False)
        gz = cfg.gezo
        gezo_cfg = GezoConfig(gz.local_iters, gz.init_step, gz.decay, gz.momentum,
                              gz.samples, gz.batch_size, gz.lam, gz.epochs,
                              seed=derive(cfg, TAG_EDIT))
        artifact = learn_ude_gezo(oracle, sa_head, train.images,
                                  train.sa_labels, gezo_cfg)
    save_edit(paths["edit"], artifact)
    _write_manifest(cfg, "learn_edit",
                    [paths["train_data"], paths["sa_head"], paths["encoder"]],
                    [paths["edit"]])
    return artifact


def cmd_train_disease(cfg: PipelineConfig) -> None:
    """Train the plain-baseline disease head (edit = 0) and, when an edit
    artifact exists, the debiased head on edited inputs."""
    paths = _paths(cfg)
    train = load_dataset(paths["train_data"])
    oracle = make_oracle(cfg, need_grad=False)
    d_cfg = TrainConfig(cfg.disease_train.optimizer, cfg.disease_train.lr,
                        cfg.disease_train.epochs, cfg.disease_train.batch_size,
                        seed=derive(cfg, TAG_DISEASE))
    zeros = np.zeros(train.images.shape[1], dtype=np.float32)
    erm_head, _ = train_fair_disease(oracle, zeros, train.images,
                                     train.disease_labels, d_cfg)
    save_head(paths["erm_head"], erm_head, meta={"task": "disease", "edit": "zero"})
    outputs = [paths["erm_head"]]
    if os.path.exists(os.path.join(paths["edit"], "eps.udet")):
        artifact = load_edit(paths["edit"])
        head, _ = train_fair_disease(oracle, artifact.eps, train.images,
                                     train.disease_labels, d_cfg)
        save_head(paths["disease_head"], head,
                  meta={"task": "disease", "edit": artifact.mode})
        outputs.append(paths["disease_head"])
    _write_manifest(cfg, "train_disease",
                    [paths["train_data"], paths["edit"], paths["encoder"]], outputs)


def cmd_evaluate(cfg: PipelineConfig) -> dict:
    """Side-by-side fairness reports for the plain and debiased disease heads
    on the balanced test set. With no edit artifact, only the plain report."""
    paths = _paths(cfg)
    test = load_dataset(paths["test_data"])
    oracle = make_oracle(cfg, need_grad=False)
    erm_head = load_head(paths["erm_head"])
    reports = {"erm": evaluate(erm_head, oracle, test.images,
                               test.disease_labels, test.sa_labels)}
    if os.path.exists(os.path.join(paths["disease_head"], "manifest.json")):
        head = load_head(paths["disease_head"])
        eps = load_edit(paths["edit"]).eps
        reports["ude"] = evaluate(head, oracle, test.images, test.disease_labels,
                                  test.sa_labels, eps=eps)
    os.makedirs(paths["reports"], exist_ok=True)
    with open(os.path.join(paths["reports"], "evaluation.json"), "w") as fh:
        json.dump({k: asdict(r) for k, r in reports.items()}, fh, indent=2)
    with open(os.path.join(paths["reports"], "evaluation.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method"] + CSV_HEADER)
        for name, rep in reports.items():
            writer.writerow([name] + rep.csv_row())
    _write_manifest(cfg, "evaluate",
                    [paths["test_data"], paths["erm_head"], paths["disease_head"],
                     paths["edit"], paths["encoder"]],
                    [paths["reports"]])
    return reports


def cmd_serve(cfg: PipelineConfig, address: str) -> OracleServer:
    enc = _ensure_encoder(cfg)
    return OracleServer(enc, address)


# ---------------------------------------------------------------------------
# in-memory experiment runner (used by sweeps, scripts, and acceptance tests)

@dataclass
class ExperimentResult:
    sa_acc_clean: float
    sa_acc_edited: float
    edit: EditArtifact
    erm_report: FairnessReport
    ude_report: FairnessReport
    train: LabeledImageSet
    test: LabeledImageSet


def run_experiment(cfg: PipelineConfig, oracle=None, grad_oracle=None) -> ExperimentResult:
    """Run the whole pipeline in memory for one seed; no artifacts written.

    `oracle` overrides the forward-only oracle (e.g. a remote client); the
    white-box stage always builds its own in-process gradient oracle.
    """
    train = generate(cfg.synth, cfg.train_counts, derive(cfg, TAG_DATA_TRAIN))
    test = generate(cfg.synth, cfg.test_counts, derive(cfg, TAG_DATA_TEST))
    enc = build_encoder(seed=cfg.encoder_seed, input_dim=cfg.synth.dim)
    fwd = oracle if oracle is not None else InProcessOracle(enc)

    sa_cfg = TrainConfig(cfg.sa_train.optimizer, cfg.sa_train.lr, cfg.sa_train.epochs,
                         cfg.sa_train.batch_size, seed=derive(cfg, TAG_SA_TRAIN))
    sa_head, _ = train_head(fwd, train.images, train.sa_labels, sa_cfg)
    sa_acc_clean = head_accuracy(sa_head, encoder_forward(enc, test.images),
                                 test.sa_labels)

    if cfg.mode == "whitebox":
        wb = grad_oracle if grad_oracle is not None else \
            InProcessOracle(enc, capability=FORWARD_WITH_INPUT_GRAD)
        ude_cfg = UdeConfig(cfg.ude.lam, cfg.ude.lr, cfg.ude.epochs,
                            cfg.ude.batch_size, seed=derive(cfg, TAG_EDIT),
                            clamp=cfg.ude.clamp)
        artifact = learn_ude_whitebox(wb, sa_head, train.images, train.sa_labels,
                                      ude_cfg)
    else:
        gz = cfg.gezo
        gezo_cfg = GezoConfig(gz.local_iters, gz.init_step, gz.decay, gz.momentum,
                              gz.samples, gz.batch_size, gz.lam, gz.epochs,
                              seed=derive(cfg, TAG_EDIT))
        artifact = learn_ude_gezo(fwd, sa_head, train.images, train.sa_labels,
                                  gezo_cfg)

    sa_acc_edited = head_accuracy(
        sa_head, encoder_forward(enc, test.images + artifact.eps), test.sa_labels)

    d_cfg = TrainConfig(cfg.disease_train.optimizer, cfg.disease_train.lr,
                        cfg.disease_train.epochs, cfg.disease_train.batch_size,
                        seed=derive(cfg, TAG_DISEASE))
    zeros = np.zeros(train.images.shape[1], dtype=np.float32)
    erm_head, _ = train_fair_disease(fwd, zeros, train.images,
                                     train.disease_labels, d_cfg)
    fair_head, _ = train_fair_disease(fwd, artifact.eps, train.images,
                                      train.disease_labels, d_cfg)
    erm_report = evaluate(erm_head, fwd, test.images, test.disease_labels,
                          test.sa_labels)
    ude_report = evaluate(fair_head, fwd, test.images, test.disease_labels,
                          test.sa_labels, eps=artifact.eps)
    return ExperimentResult(sa_acc_clean=sa_acc_clean, sa_acc_edited=sa_acc_edited,
                            edit=artifact, erm_report=erm_report,
                            ude_report=ude_report, train=train, test=test)


SWEEP_PARAMS = ("lambda", "local_iters")


def cmd_sweep(cfg: PipelineConfig, param: str, values: list[float]) -> list[dict]:
    """Re-run the pipeline per value; rows carry the debiased classifier's
    metrics. Each value gets a fresh seed mixed from (global seed, index)."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep param must be one of {SWEEP_PARAMS}")
    rows = []
    for i, value in enumerate(values):
        sub = PipelineConfig.from_dict(cfg.to_dict())
        sub.seed = derive_seed(cfg.seed, TAG_SWEEP, i)
        if param == "lambda":
            sub.ude.lam = float(value)
            sub.gezo.lam = float(value)
        else:
            sub.mode = "gezo"
            sub.gezo.local_iters = int(value)
        result = run_experiment(sub)
        rep = result.ude_report
        rows.append({"param": param, "value": value, "seed": sub.seed,
                     "EO_n": rep.eo_neg, "EO_p": rep.eo_pos,
                     "DI": rep.one_minus_di_abs, "Acc": rep.accuracy})
    os.makedirs(_paths(cfg)["reports"], exist_ok=True)
    out_csv = os.path.join(_paths(cfg)["reports"], f"sweep_{param}.csv")
    with open(out_csv, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _write_manifest(cfg, f"sweep_{param}", [], [_paths(cfg)["reports"]])
    return rows
