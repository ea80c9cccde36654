"""
Minibatch training of the hybrid objective.

Per epoch the trainer logs the mean training loss (and its components) plus
test metrics, appends the record to <output_dir>/history.jsonl and the audit
trail, and finally writes history.csv and a checkpoint. History records carry
no wall-clock fields, so two runs of one RunConfig produce identical histories.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
import torch
from tqdm import tqdm

from app.core import settings
from app.core.audit import append_jsonl, write_audit_event
from app.core.config import OptimizerConfig, RunConfig, save_run_config
from app.core.config_validate import last_batch_policy, validate_config
from app.core.errors import ConfigurationError, DivergenceError, ShapeError
from app.core.log import get_logger
from app.core.types import Sample
from app.data.dataset import load_split, make_loader
from app.eval.evaluate import evaluate_net
from app.eval.metrics import MetricReport
from app.nn.network import DTNet, build
from app.train.checkpoint import save_checkpoint
from app.train.losses import combine, loss_terms

logger = get_logger(__name__)

HISTORY_JSONL = "history.jsonl"
HISTORY_CSV = "history.csv"
CHECKPOINT_DIR = "checkpoint"


@dataclass
class TrainResult:
    net: DTNet
    history: List[Dict[str, float]]
    step_losses: List[float] = field(default_factory=list)
    report: Optional[MetricReport] = None
    checkpoint: Optional[Path] = None

    @property
    def steps(self) -> int:
        return len(self.step_losses)


def make_optimizer(params, cfg: OptimizerConfig) -> torch.optim.Optimizer:
    if cfg.kind == "sgd":
        return torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    return torch.optim.Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)


def make_scheduler(optimizer: torch.optim.Optimizer, cfg: OptimizerConfig, epochs: int):
    if cfg.schedule == "step":
        return torch.optim.lr_scheduler.StepLR(optimizer, step_size=cfg.step_size, gamma=cfg.step_gamma)
    if cfg.schedule == "cosine":
        return torch.optim.lr_scheduler.CosineAnnealingLR(optimizer, T_max=epochs)
    return None


def _apply_thread_setting() -> None:
    n = settings.num_threads()
    if n is not None:
        torch.set_num_threads(n)


def train(
    cfg: RunConfig,
    train_samples: Optional[Sequence[Sample]] = None,
    test_samples: Optional[Sequence[Sample]] = None,
    save: bool = True,
    progress: bool = False,
) -> TrainResult:
    """
    Train cfg.network on the configured data (or on the samples given).
    Raises FileNotFoundError when a manifest dataset is missing and
    DivergenceError when the loss becomes non-finite.
    """
    _apply_thread_setting()
    if train_samples is None:
        train_samples = load_split(cfg.data, "train")
    if test_samples is None:
        test_samples = load_split(cfg.data, "test")
    if not train_samples:
        raise ShapeError("training set is empty")
    ok, messages = validate_config(cfg)
    if not ok:
        raise ConfigurationError("; ".join(messages))
    for msg in messages:
        logger.warning("run config: %s", msg)
    height, width = train_samples[0].image.shape[:2]
    drop_last, batch_problems = last_batch_policy(
        cfg.network, height, width, cfg.batch_size, len(train_samples)
    )
    if batch_problems:
        raise ConfigurationError("; ".join(batch_problems))
    if drop_last:
        logger.warning(
            "dropping the trailing single-image batch each epoch (%d images, batch_size %d)",
            len(train_samples), cfg.batch_size,
        )

    out_dir = Path(cfg.output_dir)
    history_path = out_dir / HISTORY_JSONL
    if save:
        out_dir.mkdir(parents=True, exist_ok=True)
        history_path.unlink(missing_ok=True)
        save_run_config(cfg, out_dir / "run_config.json")

    device = torch.device(settings.device())
    net = build(cfg.network).to(device)
    optimizer = make_optimizer(net.parameters(), cfg.optimizer)
    scheduler = make_scheduler(optimizer, cfg.optimizer, cfg.epochs)
    loader = make_loader(
        train_samples, cfg.batch_size, shuffle=True, seed=cfg.seed,
        num_workers=cfg.num_workers, drop_last=drop_last,
    )

    history: List[Dict[str, float]] = []
    step_losses: List[float] = []
    report: Optional[MetricReport] = None
    step = 0
    t0 = time.time()

    for epoch in range(1, cfg.epochs + 1):
        net.train()
        sums: Dict[str, float] = {}
        n_images = 0
        batches = tqdm(loader, desc=f"epoch {epoch}", leave=False, disable=not progress)
        for image, area, edge in batches:
            image, area, edge = image.to(device), area.to(device), edge.to(device)
            pred = net(image)
            terms = loss_terms(
                pred.road_prob, area,
                pred.edge_prob, edge if pred.dual_task else None,
                cfg.loss,
            )
            loss = combine(terms, cfg.loss)
            if not torch.isfinite(loss):
                diagnostic = {
                    "epoch": epoch,
                    "step": step,
                    "terms": {k: v.detach().mean().item() for k, v in terms.items()},
                    "lr": optimizer.param_groups[0]["lr"],
                }
                write_audit_event({"type": "divergence", "output_dir": str(out_dir), **diagnostic})
                raise DivergenceError(f"non-finite loss at epoch {epoch}, step {step}", diagnostic)

            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            step += 1

            value = loss.item()
            step_losses.append(value)
            batch_n = image.shape[0]
            n_images += batch_n
            sums["loss"] = sums.get("loss", 0.0) + value * batch_n
            for name, per_image in terms.items():
                sums[name] = sums.get(name, 0.0) + per_image.detach().sum().item()
            batches.set_postfix(loss=f"{value:.4f}")
            if cfg.max_steps is not None and step >= cfg.max_steps:
                break

        if scheduler is not None:
            scheduler.step()

        record: Dict[str, float] = {"epoch": epoch, "step": step}
        record.update({f"train_{k}": v / max(n_images, 1) for k, v in sums.items()})
        record["lr"] = optimizer.param_groups[0]["lr"]

        finished = epoch == cfg.epochs or (cfg.max_steps is not None and step >= cfg.max_steps)
        if test_samples and (epoch % cfg.eval_every == 0 or finished):
            report = evaluate_net(net, test_samples, cfg.eval_mode, cfg.threshold, cfg.batch_size)
            record.update({f"test_{k}": getattr(report, k) for k in ("iou", "f1", "recall", "precision")})

        history.append(record)
        logger.info(
            "epoch %d step %d loss %.5f%s", epoch, step, record["train_loss"],
            f" test_iou {record['test_iou']:.4f}" if "test_iou" in record else "",
        )
        if save:
            append_jsonl(history_path, record)
        write_audit_event({"type": "train_epoch", "output_dir": str(out_dir), **record})
        if finished:
            break

    result = TrainResult(net=net, history=history, step_losses=step_losses, report=report)
    if save:
        pd.DataFrame.from_records(history).to_csv(out_dir / HISTORY_CSV, index=False)
        result.checkpoint = save_checkpoint(out_dir / CHECKPOINT_DIR, net, cfg, step=step, epoch=history[-1]["epoch"])
    write_audit_event({
        "type": "train_done",
        "output_dir": str(out_dir),
        "steps": step,
        "epochs": len(history),
        "final": history[-1],
        "latency_ms": int((time.time() - t0) * 1000),
    })
    return result
