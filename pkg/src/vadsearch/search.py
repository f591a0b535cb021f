"""Search orchestration: propose -> train -> score -> archive, with JSONL
persistence, crash resumption, and a random-search baseline."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import data as vad_data
from .arch import (ALL_OPS, ATTENTION_OPS, ArchSpec, CellSpec, canonical_hash,
                   deserialize_arch, random_cell, serialize_arch, validate_arch,
                   wl_features)
from .metrics import auc, boosted_predictions
from .model import build_model, count_params
from .surrogate import AcquisitionConfig, gp_fit, select_batch
from .training import NonFiniteLossError, TrainConfig, train

WL_DEPTH = 2


@dataclass
class SearchConfig:
    total_evaluations: int = 30
    initial_random: int = 10
    seed: int = 0
    data_dir: str = ""
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    base_channels: int = 16
    num_cells: int = 4
    reduction_index: int = 2
    input_mel_bins: int = 80
    window_frames: int = 64
    target_offsets: tuple[int, ...] = (-19, -10, -1, 0, 1, 10, 19)

    def __post_init__(self):
        if self.initial_random > self.total_evaluations:
            raise ValueError("initial_random must be <= total_evaluations")
        if self.initial_random < 1:
            raise ValueError("initial_random must be >= 1")

    def arch_for(self, cell: CellSpec) -> ArchSpec:
        return ArchSpec(cell=cell, base_channels=self.base_channels,
                        num_cells=self.num_cells,
                        reduction_index=self.reduction_index,
                        input_mel_bins=self.input_mel_bins,
                        window_frames=self.window_frames,
                        target_offsets=tuple(self.target_offsets))

    @classmethod
    def from_json(cls, text: str) -> "SearchConfig":
        doc = json.loads(text)
        if "acquisition" in doc:
            doc["acquisition"] = AcquisitionConfig(**doc["acquisition"])
        if "train" in doc:
            doc["train"] = TrainConfig(**doc["train"])
        if "target_offsets" in doc:
            doc["target_offsets"] = tuple(doc["target_offsets"])
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> str:
        doc = asdict(self)
        doc["target_offsets"] = list(self.target_offsets)
        return json.dumps(doc, indent=2) + "\n"


@dataclass
class ArchiveRecord:
    arch: ArchSpec
    hash: str
    auc: float
    params: int
    epochs_run: int
    wall_seconds: float
    seed: int
    status: str = "ok"
    reason: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "arch": json.loads(serialize_arch(self.arch)),
            "hash": self.hash, "auc": self.auc, "params": self.params,
            "epochs_run": self.epochs_run, "wall_seconds": self.wall_seconds,
            "seed": self.seed, "status": self.status, "reason": self.reason,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ArchiveRecord":
        doc = json.loads(line)
        return cls(arch=deserialize_arch(doc["arch"]), hash=doc["hash"],
                   auc=doc["auc"], params=doc["params"],
                   epochs_run=doc["epochs_run"],
                   wall_seconds=doc["wall_seconds"], seed=doc["seed"],
                   status=doc["status"], reason=doc.get("reason", ""))


class Archive:
    """Append-only JSONL store; one record per line, flushed per append."""

    def __init__(self, path):
        self.path = Path(path)
        self.records: list[ArchiveRecord] = []
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self.records.append(ArchiveRecord.from_json(line))

    def append(self, record: ArchiveRecord) -> None:
        self.records.append(record)
        with self.path.open("a") as fh:
            fh.write(record.to_json() + "\n")

    @property
    def hashes(self) -> set[str]:
        return {r.hash for r in self.records}

    def ok_records(self) -> list[ArchiveRecord]:
        return [r for r in self.records if r.status == "ok"]

    def best(self) -> ArchiveRecord | None:
        ok = self.ok_records()
        return max(ok, key=lambda r: r.auc) if ok else None


def _derive_seed(master: int, *parts) -> int:
    payload = json.dumps([master, *parts]).encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:4], "big")


def evaluate_arch(arch: ArchSpec, corpus_dir, cfg: TrainConfig) -> ArchiveRecord:
    """Train one candidate and score it by boosted validation AUC."""
    h = canonical_hash(arch.cell)
    report = validate_arch(arch)
    if not report.ok:
        return ArchiveRecord(arch=arch, hash=h, auc=0.0, params=0,
                             epochs_run=0, wall_seconds=0.0, seed=cfg.seed,
                             status="failed",
                             reason="invalid cell: " + "; ".join(report.violations))
    start = time.time()
    try:
        train_clips = vad_data.load_split(corpus_dir, "train",
                                          arch.window_frames, arch.target_offsets)
        val_clips = vad_data.load_split(corpus_dir, "val",
                                        arch.window_frames, arch.target_offsets)
        model = build_model(arch, rng_seed=cfg.seed)
        n_params = count_params(model)
        train_report = train(model, vad_data.stack_split(train_clips),
                             vad_data.stack_split(val_clips), cfg)
        val_auc = boosted_auc(model, val_clips, arch.target_offsets,
                              batch_size=cfg.batch_size)
    except NonFiniteLossError as exc:
        return ArchiveRecord(arch=arch, hash=h, auc=0.0, params=0,
                             epochs_run=exc.epoch, wall_seconds=time.time() - start,
                             seed=cfg.seed, status="failed", reason=str(exc))
    except ValueError as exc:
        return ArchiveRecord(arch=arch, hash=h, auc=0.0, params=0,
                             epochs_run=0, wall_seconds=time.time() - start,
                             seed=cfg.seed, status="failed", reason=str(exc))
    return ArchiveRecord(arch=arch, hash=h, auc=float(val_auc), params=n_params,
                         epochs_run=len(train_report.epochs),
                         wall_seconds=time.time() - start, seed=cfg.seed)


def boosted_auc(model, clips: list[dict], offsets, batch_size: int = 32,
                return_f1: bool = False):
    """Boost per-file predictions, then aggregate frames across files."""
    import torch
    from .metrics import f1 as f1_metric
    all_scores, all_labels = [], []
    model.eval()
    with torch.no_grad():
        for clip in clips:
            probs = []
            x = torch.as_tensor(clip["inputs"], dtype=torch.float32)
            for i in range(0, len(x), batch_size):
                probs.append(model(x[i:i + batch_size]).numpy())
            raw = np.concatenate(probs)
            frames, scores = boosted_predictions(clip["starts"], raw,
                                                 clip["masks"], offsets)
            keep = frames < len(clip["frame_labels"])
            all_scores.append(scores[keep])
            all_labels.append(clip["frame_labels"][frames[keep]])
    scores = np.concatenate(all_scores)
    labels = np.concatenate(all_labels)
    if return_f1:
        return auc(scores, labels), f1_metric(scores, labels)
    return auc(scores, labels)


def nn_evaluator(cfg: SearchConfig):
    def evaluate(cell: CellSpec, eval_seed: int) -> ArchiveRecord:
        train_cfg = TrainConfig(**{**asdict(cfg.train), "seed": eval_seed})
        return evaluate_arch(cfg.arch_for(cell), cfg.data_dir, train_cfg)
    return evaluate


def attention_fraction_score(cell: CellSpec) -> float:
    """Cheap deterministic benchmark score: attention edges / 6."""
    return sum(op in ATTENTION_OPS for _, _, op in cell.edges) / 6.0


def cheap_evaluator(cfg: SearchConfig, score_fn=attention_fraction_score):
    def evaluate(cell: CellSpec, eval_seed: int) -> ArchiveRecord:
        return ArchiveRecord(arch=cfg.arch_for(cell), hash=canonical_hash(cell),
                             auc=score_fn(cell), params=0, epochs_run=0,
                             wall_seconds=0.0, seed=eval_seed)
    return evaluate


def _sample_initial(cfg: SearchConfig, index: int, seen: set[str]) -> CellSpec:
    for attempt in range(1000):
        cell = random_cell(_derive_seed(cfg.seed, "init", index, attempt), ALL_OPS)
        if canonical_hash(cell) not in seen:
            return cell
    raise RuntimeError("could not sample an unseen initial cell")


def run_search(cfg: SearchConfig, archive_path, evaluator=None,
               log=None) -> Archive:
    """Run (or resume) the BO loop until the evaluation budget is spent.

    The archive is persisted after every record, so an interrupted run picks
    up exactly where it stopped. Single-threaded runs are deterministic
    functions of (config, corpus).
    """
    evaluator = evaluator or nn_evaluator(cfg)
    archive = Archive(archive_path)
    while len(archive.records) < cfg.total_evaluations:
        n = len(archive.records)
        if n < cfg.initial_random:
            cell = _sample_initial(cfg, n, archive.hashes)
        else:
            batch_no = (n - cfg.initial_random) // cfg.acquisition.batch_size
            batch_start = cfg.initial_random + batch_no * cfg.acquisition.batch_size
            fit_records = [r for r in archive.records[:batch_start]
                           if r.status == "ok"]
            feats = [wl_features(r.arch.cell, h=WL_DEPTH) for r in fit_records]
            model = gp_fit(feats, [r.auc for r in fit_records])
            evaluated = [(r.arch.cell, r.auc) for r in archive.records[:batch_start]
                         if r.status == "ok"]
            batch = select_batch(model, evaluated, cfg.acquisition,
                                 rng_seed=_derive_seed(cfg.seed, "batch", batch_no))
            if n - batch_start < len(batch):
                cell = batch[n - batch_start]
            else:  # dedup shrank the pool below batch_size
                cell = _sample_initial(cfg, n, archive.hashes)
        record = evaluator(cell, _derive_seed(cfg.seed, "eval", n))
        archive.append(record)
        if log:
            log(f"[{len(archive.records)}/{cfg.total_evaluations}] "
                f"{record.hash} auc={record.auc:.4f} status={record.status}")
    return archive


def run_random_search(cfg: SearchConfig, archive_path, evaluator=None,
                      log=None) -> Archive:
    """Baseline: the same loop with every candidate drawn at random."""
    evaluator = evaluator or nn_evaluator(cfg)
    archive = Archive(archive_path)
    while len(archive.records) < cfg.total_evaluations:
        n = len(archive.records)
        cell = _sample_initial(cfg, n, archive.hashes)
        record = evaluator(cell, _derive_seed(cfg.seed, "eval", n))
        archive.append(record)
        if log:
            log(f"[{len(archive.records)}/{cfg.total_evaluations}] "
                f"{record.hash} auc={record.auc:.4f}")
    return archive
