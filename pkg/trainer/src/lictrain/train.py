"""Two-stage optimization and the freeze-ablation grid.

Stage 1 fits the codec (R + lambda*D). Stage 2 adds the distillation term
and trains the adapter at lr_adapter while the codec parts outside the
freeze set move at lr_lic. The "all" freeze set pins every tensor that
affects coding (the four transforms and the hyper-latent density), which
is what makes the frozen cell's bitstreams bit-identical to stage 1.
"""
from __future__ import annotations

import copy
import json
import math
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import TrainConfig
from .data import batches, export_dataset_ppm
from .export import export_weights
from .losses import LossParts, training_loss
from .models import LICModel, quantize_ste
from .teacher import Teacher


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class StageResult:
    model: LICModel
    history: list[dict] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.history[-1]["loss"] if self.history else math.nan


def build_model(config: TrainConfig) -> LICModel:
    torch.manual_seed(config.seed)
    return LICModel(
        n_ch=config.n_ch, m_ch=config.m_ch, hz_ch=config.hz_ch,
        embed_dim=config.embed_dim, fusion_hidden=config.fusion_hidden,
    )


def _f(t: torch.Tensor) -> float:
    return float(t.detach())


def _check_finite(parts: LossParts, step: int, stage: str):
    v = _f(parts.total)
    if not math.isfinite(v):
        raise TrainingDiverged(
            f"{stage} loss is {v} at step {step} "
            f"(rate={_f(parts.rate_bpp):.4g}, distortion={_f(parts.distortion):.4g}, "
            f"distill={_f(parts.distill):.4g})"
        )


def evaluate(
    model: LICModel,
    dataset,
    config: TrainConfig,
    teacher: Teacher | None = None,
    indices=None,
) -> dict:
    """Held-out metrics with deterministic noise (seeded off the config)."""
    gen = torch.Generator().manual_seed(config.seed + 999)
    model.eval()
    rates, dists, distills = [], [], []
    idx = list(indices) if indices is not None else list(range(len(dataset)))
    with torch.no_grad():
        for start in range(0, len(idx), config.batch_size):
            x = dataset.batch(idx[start : start + config.batch_size])
            temb = None
            if teacher is not None:
                temb = torch.from_numpy(teacher.embed(x.numpy()))
            parts = training_loss(
                model, x, config.lambda_rd,
                lambda_s=config.lambda_s if teacher is not None else 0.0,
                teacher_emb=temb, generator=gen,
            )
            rates.append(float(parts.rate_bpp))
            dists.append(float(parts.distortion))
            distills.append(float(parts.distill))
    model.train()
    rate = float(np.mean(rates))
    dist = float(np.mean(dists))
    ds = float(np.mean(distills))
    return {
        "rate_bpp": rate,
        "distortion": dist,
        "distill": ds,
        "loss": rate + config.lambda_rd * dist
        + (config.lambda_s * ds if teacher is not None else 0.0),
    }


def stage1_train(config: TrainConfig, dataset, log_every: int = 100) -> StageResult:
    """Fit codec + hyper density to R + lambda*D.

    The last 30% of the schedule runs at lr/10 so the stage ends near a
    minimum; stage 2's freeze comparisons assume stage 1 is converged.
    """
    model = build_model(config)
    model.train()
    gen = torch.Generator().manual_seed(config.seed)
    order_rng = np.random.default_rng(config.seed)
    opt = torch.optim.Adam(model.codec_parameters(), lr=config.lr_stage1)
    decay_at = int(config.steps_stage1 * 0.7)

    history = []
    for step, x in enumerate(batches(dataset, config.batch_size, config.steps_stage1,
                                     order_rng)):
        if step == decay_at:
            for group in opt.param_groups:
                group["lr"] = config.lr_stage1 * 0.1
        opt.zero_grad()
        parts = training_loss(model, x, config.lambda_rd, generator=gen)
        _check_finite(parts, step, "stage1")
        parts.total.backward()
        opt.step()
        if step % log_every == 0 or step == config.steps_stage1 - 1:
            history.append(
                {"step": step, "loss": _f(parts.total),
                 "rate_bpp": _f(parts.rate_bpp), "distortion": _f(parts.distortion)}
            )
    return StageResult(model=model, history=history)


def apply_freeze(model: LICModel, freeze: str) -> list[str]:
    """Mark the freeze set non-trainable; returns the frozen module names."""
    groups = {
        "none": [],
        "ga_gs": ["ga", "gs"],
        "ha_hs": ["ha", "hs"],
        "all": ["ga", "gs", "ha", "hs", "z_density"],
    }[freeze]
    mods = model.codec_modules()
    for name in groups:
        for p in mods[name].parameters():
            p.requires_grad_(False)
    return groups


def stage2_train(
    config: TrainConfig,
    dataset,
    teacher: Teacher,
    stage1_model: LICModel,
    log_every: int = 100,
    val_indices=None,
    target_distill: float | None = None,
) -> StageResult:
    """Distillation stage: R + lambda*D + lambda_s*D_s with the freeze set applied.

    With target_distill set, training stops early once the held-out mean
    distillation distance drops to the target (still counted as "within"
    the configured step budget).
    """
    model = copy.deepcopy(stage1_model)
    model.train()
    for p in model.parameters():
        p.requires_grad_(True)
    frozen = apply_freeze(model, config.freeze)

    param_groups = []
    codec_trainable = [p for p in model.codec_parameters() if p.requires_grad]
    if codec_trainable:
        param_groups.append({"params": codec_trainable, "lr": config.lr_lic})
    param_groups.append({"params": list(model.adapter_parameters()), "lr": config.lr_adapter})
    opt = torch.optim.Adam(param_groups)

    gen = torch.Generator().manual_seed(config.seed + 1)
    order_rng = np.random.default_rng(config.seed + 1)

    history = []
    for step, x in enumerate(batches(dataset, config.batch_size, config.steps_stage2,
                                     order_rng)):
        opt.zero_grad()
        temb = None
        if config.lambda_s > 0.0:
            temb = torch.from_numpy(teacher.embed(x.numpy()))
        parts = training_loss(
            model, x, config.lambda_rd, lambda_s=config.lambda_s,
            teacher_emb=temb, generator=gen,
        )
        _check_finite(parts, step, "stage2")
        parts.total.backward()
        opt.step()
        if step % log_every == 0 or step == config.steps_stage2 - 1:
            entry = {"step": step, "loss": _f(parts.total),
                     "rate_bpp": _f(parts.rate_bpp),
                     "distortion": _f(parts.distortion),
                     "distill": _f(parts.distill), "frozen": frozen}
            if target_distill is not None and val_indices is not None:
                held = evaluate(model, dataset, config, teacher, val_indices)
                entry["val_distill"] = held["distill"]
                history.append(entry)
                if held["distill"] <= target_distill:
                    break
            else:
                history.append(entry)
    return StageResult(model=model, history=history)


# -- engine-side measurement (through the primary's CLI) -----------------------


def measure_with_engine(archive_path, image_paths) -> dict:
    """Mean bpp/psnr of the engine's own codec over the given images.

    Shells out to `python -m latentsearch compress`, the engine's public
    CLI, and parses its JSON lines.
    """
    with tempfile.TemporaryDirectory() as out_dir:
        cmd = [sys.executable, "-m", "latentsearch", "compress",
               "--weights", str(archive_path), "--out", out_dir]
        cmd += [str(p) for p in image_paths]
        proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"engine compress failed: {proc.stderr.strip()}")
    bpps, psnrs = [], []
    for line in proc.stdout.splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        bpps.append(float(rec["bpp"]))
        psnrs.append(math.inf if rec["psnr"] == "inf" else float(rec["psnr"]))
    if not bpps:
        raise RuntimeError("engine compress produced no records")
    finite = [p for p in psnrs if math.isfinite(p)]
    return {
        "bpp": float(np.mean(bpps)),
        "psnr": float(np.mean(finite)) if finite else math.inf,
        "bpps": bpps,
        "psnrs": psnrs,
    }


def adapter_embeddings(model: LICModel, images: torch.Tensor) -> np.ndarray:
    """Inference-path embeddings: hard quantization, no noise."""
    model.eval()
    with torch.no_grad():
        y = model.analyze(images)
        emb = model.embed(quantize_ste(y))
    model.train()
    return emb.numpy()


def retrieval_recall_at_1(
    model: LICModel, teacher: Teacher, gallery: torch.Tensor, queries: torch.Tensor
) -> float:
    """Adapter-NN vs teacher-NN agreement over a gallery."""
    g_adapter = adapter_embeddings(model, gallery)
    q_adapter = adapter_embeddings(model, queries)
    g_teacher = teacher.embed(gallery.numpy())
    q_teacher = teacher.embed(queries.numpy())
    pred = np.argmax(q_adapter @ g_adapter.T, axis=1)
    truth = np.argmax(q_teacher @ g_teacher.T, axis=1)
    return float(np.mean(pred == truth))


ABLATION_CELLS = ("all", "ga_gs", "ha_hs", "none", "lr_reduced")


def run_ablation(
    config: TrainConfig,
    dataset,
    teacher: Teacher,
    stage1: StageResult,
    heldout_dir=None,
    gallery_size: int = 120,
    query_count: int = 40,
) -> list[dict]:
    """One row per freeze cell; bpp/psnr measured through the engine's codec.

    A diverging cell is reported with an "error" field and the grid
    continues. Every cell shares the stage-1 checkpoint, seed, and data.
    """
    own_tmp = None
    if heldout_dir is None:
        own_tmp = tempfile.TemporaryDirectory()
        heldout_dir = own_tmp.name
    n_held = 12
    held_paths = export_dataset_ppm(dataset, heldout_dir,
                                    indices=range(len(dataset) - n_held, len(dataset)))

    g_idx = list(range(min(gallery_size, len(dataset) - n_held)))
    q_idx = list(range(len(g_idx), len(g_idx) + min(query_count, len(dataset) - n_held - len(g_idx))))
    gallery = dataset.batch(g_idx)
    queries = dataset.batch(q_idx if q_idx else g_idx[:8])

    rows = []
    for cell in ABLATION_CELLS:
        cfg = copy.deepcopy(config)
        if cell == "lr_reduced":
            # nothing frozen, codec lr cut to 1e-6
            cfg.freeze = "none"
            cfg.lr_lic = 1e-6
        elif cell == "none":
            # fully free codec at the adapter's lr
            cfg.freeze = "none"
            cfg.lr_lic = cfg.lr_adapter
        else:
            cfg.freeze = cell
        try:
            result = stage2_train(cfg, dataset, teacher, stage1.model)
            with tempfile.NamedTemporaryFile(suffix=".licw", delete=False) as f:
                archive_path = f.name
            export_weights(result.model, archive_path)
            measured = measure_with_engine(archive_path, held_paths)
            recall = retrieval_recall_at_1(result.model, teacher, gallery, queries)
            rows.append({"cell": cell, "bpp": measured["bpp"], "psnr": measured["psnr"],
                         "recall_at_1": recall})
        except TrainingDiverged as exc:
            rows.append({"cell": cell, "error": str(exc)})
    if own_tmp is not None:
        own_tmp.cleanup()
    return rows


def format_ablation(rows: list[dict]) -> str:
    header = f"{'freeze':<12} {'bpp':>10} {'psnr':>8} {'recall@1':>9}"
    lines = [header, "-" * len(header)]
    for r in rows:
        if "error" in r:
            lines.append(f"{r['cell']:<12} diverged: {r['error']}")
        else:
            psnr_s = "inf" if math.isinf(r["psnr"]) else f"{r['psnr']:.2f}"
            lines.append(
                f"{r['cell']:<12} {r['bpp']:>10.4f} {psnr_s:>8} {r['recall_at_1']:>9.3f}"
            )
    return "\n".join(lines)
