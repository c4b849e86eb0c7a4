"""Session fixtures for the acceptance suite.

One shared synthetic dataset (seeded per scene the same way the synth
command seeds its splits) and the seed-fixed training runs the
directional criteria compare. Everything here is deterministic, so the
numbers the acceptance tests print are reproducible bit for bit.
"""

from __future__ import annotations

import time
from dataclasses import replace
from types import SimpleNamespace

import pytest

from cadspot.model import Predictor, PredictorConfig, train
from cadspot.rng import seed_stream
from cadspot.schedule import KernelSchedule
from cadspot.synth import SceneSpec, generate_scene

ACCEPT_SEED = 42

ACCEPT_SCENE = SceneSpec(
    width=64,
    height=64,
    n_blocks=1,
    n_walls=1,
    n_scales=1,
    min_symbol_size=12,
    max_symbol_size=36,
)

ACCEPT_PREDICTOR = PredictorConfig(
    patch_size=64,
    down_sample=4,
    epochs=60,
    batch_size=8,
    learning_rate=1e-3,
    rng_seed=0,
)


def scene_split(
    tag: str,
    count: int,
    spec: SceneSpec = ACCEPT_SCENE,
    root_seed: int = ACCEPT_SEED,
) -> list:
    """Scenes seeded like the synth command: one substream per index, so
    scene i never depends on how many scenes surround it."""
    scenes = []
    for i in range(count):
        seed = int(seed_stream(root_seed, f"synth/{tag}/{i}").integers(0, 2**31 - 1))
        scenes.append(generate_scene(replace(spec, rng_seed=seed)))
    return scenes


@pytest.fixture(scope="session")
def accept_data():
    t0 = time.perf_counter()
    data = SimpleNamespace(
        train=scene_split("train", 200),
        val=scene_split("val", 50),
        test=scene_split("test", 50),
    )
    data.wall = time.perf_counter() - t0
    return data


def _train_run(data, schedule: KernelSchedule, *, offsets: bool = True):
    config = (
        ACCEPT_PREDICTOR
        if offsets
        else replace(ACCEPT_PREDICTOR, predict_offsets=False)
    )
    predictor = Predictor(config)
    t0 = time.perf_counter()
    report = train(predictor, data.train, data.val, schedule)
    return SimpleNamespace(
        predictor=predictor,
        report=report,
        config=config,
        wall=time.perf_counter() - t0,
    )


@pytest.fixture(scope="session")
def run_pgk(accept_data):
    return _train_run(accept_data, KernelSchedule.pgk(3.0, 1.0, 60, 0.3))


@pytest.fixture(scope="session")
def run_fixed1(accept_data):
    return _train_run(accept_data, KernelSchedule.fixed(1.0, 60))


@pytest.fixture(scope="session")
def run_sigma3_40(accept_data):
    """The 40 epochs a hard switch at epoch 40 would spend at sigma 3.

    Bit-identical to the switch run's prefix: same seed, so the same
    init, shuffle order and optimizer steps while sigma agrees.
    """
    return _train_run(accept_data, KernelSchedule.fixed(3.0, 40))


@pytest.fixture(scope="session")
def run_switch41(accept_data):
    """Hard sigma switch at epoch 40, observed one epoch past it."""
    return _train_run(accept_data, KernelSchedule.naive_switch(3.0, 1.0, 41, 40))


@pytest.fixture(scope="session")
def run_pgk_no_offsets(accept_data):
    return _train_run(
        accept_data, KernelSchedule.pgk(3.0, 1.0, 60, 0.3), offsets=False
    )
