"""Trainer acceptance suite: one test per criterion, one PASS line each.

Run with `pytest tests/test_acceptance.py -v -s`. The expensive fixtures
(stage-1 checkpoint, frozen stage-2 distillation) are shared session-wide
from conftest.
"""
import tempfile

import numpy as np
import pytest
import torch

from lictrain.data import export_dataset_ppm
from lictrain.export import export_weights
from lictrain.losses import relaxed_loss
from lictrain.models import LICModel
from lictrain.teacher import RandomProjectionTeacher
from lictrain.train import (
    format_ablation,
    measure_with_engine,
    retrieval_recall_at_1,
    run_ablation,
)


def _ok(name):
    print(f"\nACCEPTANCE PASS: {name}")


def test_gradient_check_against_central_differences():
    """Analytic gradients of the stage-2 loss vs central FD, 1e-3 relative,
    50 parameters, model dims <= 8."""
    torch.manual_seed(42)
    model = LICModel(n_ch=4, m_ch=6, hz_ch=4, embed_dim=8, fusion_hidden=8).double()
    gen = torch.Generator().manual_seed(7)
    x = torch.rand((1, 3, 64, 64), generator=gen, dtype=torch.float64)
    y_shape = (1, 6, 4, 4)
    z_shape = (1, 4, 1, 1)
    noise_y = torch.rand(y_shape, generator=gen, dtype=torch.float64) - 0.5
    noise_z = torch.rand(z_shape, generator=gen, dtype=torch.float64) - 0.5
    teacher_emb = torch.nn.functional.normalize(
        torch.randn((1, 8), generator=gen, dtype=torch.float64), dim=1
    )
    lambda_rd, lambda_s = 50.0, 0.5

    def loss_value() -> torch.Tensor:
        return relaxed_loss(model, x, noise_y, noise_z, lambda_rd, lambda_s, teacher_emb)

    model.zero_grad()
    loss_value().backward()
    params = [(n, p) for n, p in model.named_parameters()]

    rng = np.random.default_rng(3)
    checked = 0
    worst = 0.0
    while checked < 50:
        name, p = params[int(rng.integers(0, len(params)))]
        flat = int(rng.integers(0, p.numel()))
        analytic = float(p.grad.view(-1)[flat])
        h = 1e-5 * max(1.0, abs(float(p.data.view(-1)[flat])))
        with torch.no_grad():
            p.data.view(-1)[flat] += h
            up = float(loss_value())
            p.data.view(-1)[flat] -= 2 * h
            down = float(loss_value())
            p.data.view(-1)[flat] += h
        fd = (up - down) / (2 * h)
        rel = abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-6)
        assert rel <= 1e-3, f"{name}[{flat}]: analytic {analytic:.6g} vs fd {fd:.6g}"
        worst = max(worst, rel)
        checked += 1
    _ok(f"gradient check (50 params, worst relative error {worst:.2e})")


def test_stage2_effectiveness_frozen_codec(frozen_stage2, stage1, dataset, tmp_path):
    """Held-out mean distillation distance drops >= 50% within 2000 steps and
    the frozen codec's bitstreams are bit-identical to stage 1."""
    init_ds = frozen_stage2["init"]["distill"]
    result = frozen_stage2["result"]
    final_ds = result.history[-1]["val_distill"]
    steps_used = result.history[-1]["step"] + 1
    assert steps_used <= 2000
    assert final_ds <= 0.5 * init_ds, (init_ds, final_ds)

    held = export_dataset_ppm(dataset, tmp_path / "held", indices=range(600, 612))
    a1 = tmp_path / "stage1.licw"
    a2 = tmp_path / "stage2.licw"
    export_weights(stage1.model, a1)
    export_weights(result.model, a2)
    m1 = measure_with_engine(a1, held)
    m2 = measure_with_engine(a2, held)
    assert m1["bpps"] == m2["bpps"], "frozen codec changed the bitstream lengths"
    assert m1["psnrs"] == m2["psnrs"]
    _ok(
        f"stage-2 effectiveness (D_s {init_ds:.3f} -> {final_ds:.3f} in {steps_used} steps, "
        "bpp bit-identical to stage 1)"
    )


def test_trend_reproduction_ablation_grid(toy_config, dataset, teacher, stage1, tmp_path):
    """bpp(all frozen) <= bpp(lr_lic=1e-6) <= bpp(none), ordering only."""
    rows = run_ablation(toy_config, dataset, teacher, stage1,
                        heldout_dir=tmp_path / "held")
    print()
    print(format_ablation(rows))
    by = {r["cell"]: r for r in rows if "error" not in r}
    assert set(by) == {"all", "ga_gs", "ha_hs", "none", "lr_reduced"}, rows
    assert by["all"]["bpp"] <= by["lr_reduced"]["bpp"] <= by["none"]["bpp"], (
        by["all"]["bpp"], by["lr_reduced"]["bpp"], by["none"]["bpp"]
    )
    _ok(
        "trend reproduction (bpp "
        f"{by['all']['bpp']:.4f} <= {by['lr_reduced']['bpp']:.4f} <= {by['none']['bpp']:.4f})"
    )


def test_retrieval_lift_500_gallery(frozen_stage2, dataset):
    """Adapter recall@1 vs the teacher-NN oracle >= 10x the 1/500 chance level."""
    model = frozen_stage2["result"].model
    teacher = RandomProjectionTeacher(dim=model.embed_dim, seed=frozen_stage2["config"].seed)
    gallery = dataset.batch(range(500))
    queries = dataset.batch(range(500, 600))
    recall = retrieval_recall_at_1(model, teacher, gallery, queries)
    assert recall >= 10.0 / 500.0, recall
    _ok(f"retrieval lift (recall@1 {recall:.3f} vs chance {1 / 500:.4f})")


def test_cross_component_parity_10_images(frozen_stage2, dataset, tmp_path):
    """Engine loads the exported archive and reproduces trainer-side analyze
    within 1e-4 per element on 10 images."""
    from latentsearch.codec import analyze
    from latentsearch.weights import WeightArchive, load_model

    model = frozen_stage2["result"].model
    path = tmp_path / "parity.licw"
    export_weights(model, path)
    arch = WeightArchive.load(path)
    assert arch.missing_names() == []
    em = load_model(arch)

    model.eval()
    worst = 0.0
    for i in range(10):
        img = dataset[i][None]
        with torch.no_grad():
            y_trainer = model.analyze(torch.from_numpy(img)).numpy()
        y_engine = analyze(img, em.codec)
        worst = max(worst, float(np.abs(y_trainer - y_engine).max()))
    model.train()
    assert worst < 1e-4, worst
    _ok(f"cross-component parity (max |delta| {worst:.2e} over 10 images)")
