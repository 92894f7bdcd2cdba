import copy

import pytest

from lictrain.config import TrainConfig
from lictrain.data import SyntheticTextures
from lictrain.teacher import RandomProjectionTeacher
from lictrain.train import evaluate, stage1_train, stage2_train

SEED = 7

# one shared toy configuration so the expensive stage-1 run happens once;
# stage 1 must run long enough to converge or the freeze comparisons are
# dominated by leftover optimization slope
TOY = dict(
    steps_stage1=2500, steps_stage2=600, batch_size=4, seed=SEED,
    n_ch=16, m_ch=24, hz_ch=8, embed_dim=64, fusion_hidden=96,
)


@pytest.fixture(scope="session")
def toy_config():
    return TrainConfig(**TOY)


@pytest.fixture(scope="session")
def dataset():
    return SyntheticTextures(620, seed=SEED)


@pytest.fixture(scope="session")
def val_indices():
    return list(range(600, 620))


@pytest.fixture(scope="session")
def teacher(toy_config):
    return RandomProjectionTeacher(dim=toy_config.embed_dim, seed=SEED)


@pytest.fixture(scope="session")
def stage1(toy_config, dataset):
    return stage1_train(toy_config, dataset)


@pytest.fixture(scope="session")
def frozen_stage2(toy_config, dataset, teacher, stage1, val_indices):
    """Stage 2 with the whole codec frozen, early-stopped at 55% reduction."""
    cfg = copy.deepcopy(toy_config)
    cfg.freeze = "all"
    cfg.steps_stage2 = 2000
    init = evaluate(stage1.model, dataset, cfg, teacher, val_indices)
    result = stage2_train(
        cfg, dataset, teacher, stage1.model, log_every=50,
        val_indices=val_indices, target_distill=init["distill"] * 0.45,
    )
    return {"config": cfg, "init": init, "result": result}
