"""
Rankings that carry no information land at chance level.

Chance level assumes the 301 item-timing candidates are exchangeable. An
untrained TimelyRec is not such a ranking: the positive and its 100
wrong-item negatives share one timestamp, history and time encoding, so
they score as a tight cluster while the 200 wrong-time candidates spread
out. Only the item scenario, where every candidate shares the timestamp,
is checked with the untrained model.
"""
from types import SimpleNamespace

import numpy as np
import pytest

from timelyrec.data import dataset_from_frame, split
from timelyrec.evalharness import EvalCache, eval_item_recommendation, eval_item_timing
from timelyrec.model import ModelConfig, TimelyRec
from timelyrec.synth import SyntheticSpec, generate

N_USERS = 4000


class RandomScores:
    """Independent uniform scores, drawn from a fixed seed in scoring order"""

    def __init__(self, seed):
        self.config = SimpleNamespace(history_length=2)
        self.rng = np.random.default_rng(seed)

    def score(self, examples, batch_size=1024):
        return self.rng.random(len(examples))


@pytest.fixture(scope="module")
def calibration_setup():
    frame, _ = generate(
        SyntheticSpec(
            n_users=N_USERS, n_items=200, interactions_per_user=6, weeks=26, seed=11
        )
    )
    dataset = dataset_from_frame(frame)
    return dataset, split(dataset), EvalCache()


@pytest.mark.parametrize(
    "evaluate, chance, tolerance",
    [
        (eval_item_recommendation, 10 / 101, 0.01),
        (eval_item_timing, 10 / 301, 0.008),
    ],
)
def test_random_scores_hit_chance(calibration_setup, evaluate, chance, tolerance):
    dataset, split_spec, cache = calibration_setup
    report = evaluate(RandomScores(11), split_spec, dataset, cache=cache)
    assert report.users_evaluated == N_USERS
    assert report.metrics["hr@10"] == pytest.approx(chance, abs=tolerance)


def test_untrained_model_hits_item_chance(calibration_setup):
    dataset, split_spec, cache = calibration_setup
    model = TimelyRec(
        ModelConfig(
            dataset.n_users, dataset.n_items, dim=8, history_length=2, hidden=(16,), dropout=0.0
        ),
        seed=11,
    )
    report = eval_item_recommendation(model, split_spec, dataset, cache=cache)
    assert report.metrics["hr@10"] == pytest.approx(10 / 101, abs=0.01)
