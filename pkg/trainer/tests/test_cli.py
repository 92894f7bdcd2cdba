import json

import numpy as np
import pytest

from lictrain.cli import main as cli_main


def test_stage1_then_stage2_cli(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text(
        "steps_stage1 = 30\nsteps_stage2 = 10\nbatch_size = 2\nseed = 1\n"
        "n_ch = 8\nm_ch = 12\nhz_ch = 4\nembed_dim = 16\nfusion_hidden = 24\n"
    )
    s1 = tmp_path / "s1.licw"
    rc = cli_main(["stage1", "--config", str(cfg), "--train-images", "8", str(s1)])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert "final" in out and s1.exists()

    from latentsearch.weights import WeightArchive

    assert WeightArchive.load(s1).missing_names() == []

    s2 = tmp_path / "s2.licw"
    rc = cli_main(["stage2", "--config", str(cfg), "--train-images", "8",
                   "--stage1", str(s1), str(s2)])
    assert rc == 0
    assert s2.exists()


def test_teacher_embed_cli(tmp_path, capsys):
    out = tmp_path / "t.lice"
    rc = cli_main(["teacher-embed", "--synthetic", "24", "--dim", "16", str(out)])
    assert rc == 0
    assert "24 embeddings" in capsys.readouterr().out

    from latentsearch.teacherfile import read_embedding_file

    entries = read_embedding_file(out)
    assert len(entries) == 24
    assert all(v.shape == (16,) for v in entries.values())


def test_teacher_embed_from_ppm_dir(tmp_path, capsys):
    from lictrain.data import SyntheticTextures, export_dataset_ppm

    data = SyntheticTextures(3, seed=2)
    export_dataset_ppm(data, tmp_path / "imgs")
    out = tmp_path / "g.lice"
    rc = cli_main(["teacher-embed", "--images", str(tmp_path / "imgs"),
                   "--dim", "16", str(out)])
    assert rc == 0

    from latentsearch.teacherfile import read_embedding_file

    assert len(read_embedding_file(out)) == 3


def test_error_paths(tmp_path, capsys):
    rc = cli_main(["stage1", "--config", str(tmp_path / "missing.txt"), str(tmp_path / "x")])
    assert rc == 1
    assert "error" in capsys.readouterr().err
