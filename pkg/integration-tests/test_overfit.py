"""
A small model can memorize a tiny training set.
"""
from timelyrec.data import build_training_epoch, dataset_from_frame, split
from timelyrec.model import ModelConfig, TimelyRec
from timelyrec.synth import SyntheticSpec, generate
from timelyrec.trainer import train_step


def test_overfit_fifty_interactions():
    frame, _ = generate(
        SyntheticSpec(n_users=5, n_items=20, interactions_per_user=10, favorites=3, seed=4)
    )
    assert len(frame) == 50
    dataset = dataset_from_frame(frame)
    split_spec = split(dataset)
    model = TimelyRec(
        ModelConfig(dataset.n_users, dataset.n_items, dim=16, dropout=0.0), seed=4
    )
    # one fixed set of negatives, trained full batch
    examples, skipped = build_training_epoch(dataset, split_spec, 4, 1, 5)
    assert skipped == 0
    assert len(examples) == 4 * split_spec.n_train()

    losses = []
    for _ in range(2000):
        losses.append(train_step(model, examples, 0.01))
        if losses[-1] < 0.05:
            break
    assert losses[-1] < 0.05, losses[-10:]
