"""pytest fixtures for the experiment suite"""

from pytest import fixture

from timelyrec.data import dataset_from_frame, split
from timelyrec.evalharness import EvalCache, eval_item_timing
from timelyrec.model import ModelConfig
from timelyrec.synth import SyntheticSpec, generate
from timelyrec.trainer import TrainConfig, train

SEEDS = (0, 1, 2)

# small enough to train nine models within a few minutes
MODEL_SETTINGS = {"dim": 16, "hidden": (32,), "dropout": 0.0}
TRAIN_SETTINGS = {"learning_rate": 0.005, "max_epochs": 8, "patience": 3}

VARIANTS = {
    "timelyrec": {},
    "no-time-repr": {"use_time_repr": False},
    "no-irregularity": {
        "window_radius": {"month": 0, "day_of_week": 0, "date": 0, "hour": 0}
    },
}


def planted_dataset(seed, **overrides):
    """Dataset and standard split of a planted hour / day of week log"""
    frame, _ = generate(SyntheticSpec(seed=seed, **overrides))
    dataset = dataset_from_frame(frame)
    return dataset, split(dataset)


class PlantedExperiment:
    """
    Train and evaluate model variants on the planted log of one seed.

    All variants of a seed are ranked on the same candidates.
    """

    def __init__(self, seed):
        self.seed = seed
        self.dataset, self.split_spec = planted_dataset(seed)
        self.cache = EvalCache()
        self._hr10 = {}

    def hr10(self, variant):
        if variant not in self._hr10:
            model_config = ModelConfig(
                self.dataset.n_users,
                self.dataset.n_items,
                **MODEL_SETTINGS,
                **VARIANTS[variant],
            )
            state = train(
                self.dataset,
                self.split_spec,
                model_config,
                TrainConfig(seed=self.seed, **TRAIN_SETTINGS),
            )
            report = eval_item_timing(
                state.best_model(), self.split_spec, self.dataset, cache=self.cache
            )
            self._hr10[variant] = report.metrics["hr@10"]
        return self._hr10[variant]


@fixture(scope="session")
def experiments():
    """PlantedExperiment per seed, shared so each variant trains once"""
    return {seed: PlantedExperiment(seed) for seed in SEEDS}
