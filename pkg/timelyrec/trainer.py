"""
Epoch loop: fresh negatives, shuffled mini-batches, Adam, validation HR@10.

The parameters of the epoch with the best validation HR@10 are kept as
the result; training stops after max_epochs or once `patience` epochs
pass without improvement.
"""
import logging
from dataclasses import dataclass, field

from . import diffcore as dc
from .data import DROPOUT_STREAM, SHUFFLE_STREAM, build_training_epoch
from .errors import ContractError, NumericError
from .evalharness import EvalCache, eval_item_recommendation
from .model import TimelyRec
from .utils import derive_rng, get_plugin_manager

logger = logging.getLogger("timelyrec")


@dataclass
class TrainConfig:
    """
    Optimisation settings.

    Hyperparameter grid used when tuning on validation HR@10:
    learning_rate in {0.01, 0.001, 0.0001}, dropout in {0.0, 0.1, ..., 0.5},
    MLP width in {32, 64, 96, 128, 160} and depth in {1, ..., 5}.
    """

    batch_size: int = 256
    learning_rate: float = 0.001
    max_epochs: int = 50
    patience: int = 10
    seed: int = 42
    eval_seed: int = 42
    eval_batch_size: int = 1024
    separation: int = 3600

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ContractError("batch sizes must be at least 1")
        if self.separation < 1:
            raise ContractError(f"separation must be at least 1 second, got {self.separation}")
        if self.max_epochs < 0 or self.patience < 1:
            raise ContractError(
                f"need max_epochs >= 0 and patience >= 1, got {self.max_epochs}, {self.patience}"
            )

    @classmethod
    def from_config(cls, config):
        """Build from a full config dict as returned by load_config"""
        train = config["train"]
        return cls(
            batch_size=train["batch_size"],
            learning_rate=train["learning_rate"],
            max_epochs=train["max_epochs"],
            patience=train["patience"],
            seed=train["seed"],
            eval_seed=config["eval"]["seed"],
            eval_batch_size=config["eval"]["batch_size"],
            separation=config["data"]["separation"],
        )


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    val_hr10: float
    best: bool
    skipped: int
    zero_norms: int

    def format(self):
        return (
            f"epoch={self.epoch} loss={self.loss:.6f} val_hr@10={self.val_hr10:.4f} "
            f"best={'yes' if self.best else 'no'} skipped={self.skipped} "
            f"zero_norms={self.zero_norms}"
        )


@dataclass
class TrainState:
    model: TimelyRec
    best_params: dict
    epoch: int = 0
    best_epoch: int = 0
    best_hr10: float = float("-inf")
    history: list = field(default_factory=list)

    def best_model(self):
        """A copy of the model holding the best epoch's parameters"""
        model = TimelyRec(self.model.config)
        model.store.load(self.best_params)
        return model


def train_step(model, examples, learning_rate, rng=None):
    """One forward / backward pass over a batch and one Adam update; returns the loss"""
    loss = model.loss(examples, training=True, rng=rng)
    gradients = model.store.collect(dc.backward(loss))
    dc.adam_step(model.store, gradients, learning_rate)
    return loss.item()


def validate(model, split_spec, dataset, seed=42, cache=None, batch_size=1024):
    """Item recommendation HR@10 on the validation positives"""
    report = eval_item_recommendation(
        model, split_spec, dataset, seed, role="validation", cache=cache, batch_size=batch_size
    )
    return report.metrics["hr@10"]


def train(dataset, split_spec, model_config, config, model=None, plugin_manager=None):
    """
    Train a TimelyRec model and return the TrainState.

    model_config is a ModelConfig; config a TrainConfig. Pass model to
    continue from existing parameters.
    """
    if split_spec.n_train() == 0 and config.max_epochs > 0:
        raise ContractError("the split leaves no training interactions")
    pm = get_plugin_manager() if plugin_manager is None else plugin_manager
    if model is None:
        model = TimelyRec(model_config, seed=config.seed)
    state = TrainState(model=model, best_params=model.store.snapshot())
    cache = EvalCache()
    pm.hook.timelyrec_train_start(config=config)

    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        examples, skipped = build_training_epoch(
            dataset,
            split_spec,
            config.seed,
            epoch,
            model_config.history_length,
            config.separation,
        )
        order = derive_rng(config.seed, SHUFFLE_STREAM, epoch).permutation(len(examples))
        dropout_rng = derive_rng(config.seed, DROPOUT_STREAM, epoch)
        model.zero_norm_count = 0
        total = 0.0
        for batch_index, start in enumerate(range(0, len(examples), config.batch_size)):
            batch = examples.take(order[start : start + config.batch_size])
            try:
                total += train_step(model, batch, config.learning_rate, dropout_rng) * len(batch)
            except NumericError as e:
                raise NumericError(f"epoch {epoch}, batch {batch_index}: {e}") from e
        zero_norms = model.zero_norm_count
        if len(examples) == 0:
            logger.warning("Epoch %d has no training examples", epoch)
            mean_loss = float("nan")
        else:
            mean_loss = total / len(examples)

        hr10 = validate(
            model, split_spec, dataset, config.eval_seed, cache, config.eval_batch_size
        )
        improved = hr10 > state.best_hr10
        state.epoch = epoch
        if improved:
            state.best_hr10 = hr10
            state.best_epoch = epoch
            state.best_params = model.store.snapshot()
            stale = 0
        else:
            stale += 1
        record = EpochRecord(epoch, mean_loss, hr10, improved, skipped, zero_norms)
        state.history.append(record)
        logger.info(record.format())
        if zero_norms:
            logger.info("Epoch %d substituted %d zero time vectors", epoch, zero_norms)
        pm.hook.timelyrec_epoch_end(record=record)
        if stale >= config.patience:
            logger.info(
                "No validation improvement for %d epochs, stopping after epoch %d",
                stale,
                epoch,
            )
            break

    pm.hook.timelyrec_train_end(state=state)
    return state
