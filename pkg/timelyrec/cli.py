"""
timelyrec command line: ingest, train, eval, explain and synth.

Every command is deterministic given its flags. Errors are reported on
stderr and mapped to the exit status of their class in timelyrec.errors.
"""
import argparse
import logging
import os
import sys

from jinja2 import Template

from . import config as cfg
from .calendar import GRANULARITIES, decompose, format_timestamp, slot_label
from .data import filter_dataset, load_dataset, load_interactions, recent_history, split
from .errors import InputError, TimelyRecError
from .evalharness import SCENARIOS, evaluate
from .hooks import hookimpl
from .log import init_logging
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .synth import SyntheticSpec, write_synthetic
from .trainer import TrainConfig, train
from .utils import get_plugin_manager, sha256_lines

HERE = os.path.abspath(os.path.dirname(__file__))

logger = logging.getLogger("timelyrec")

# command line flag -> config key path
TRAIN_FLAGS = {
    "dim": "model.dim",
    "history_length": "model.history_length",
    "dropout": "model.dropout",
    "radius_month": "model.window_radius.month",
    "radius_day_of_week": "model.window_radius.day_of_week",
    "radius_date": "model.window_radius.date",
    "radius_hour": "model.window_radius.hour",
    "batch_size": "train.batch_size",
    "learning_rate": "train.learning_rate",
    "max_epochs": "train.max_epochs",
    "patience": "train.patience",
    "seed": "train.seed",
    "split": "data.split",
    "min_repeat": "data.min_repeat",
    "separation": "data.separation",
    "utc_offset": "data.utc_offset",
}


def _default(key_path):
    value = cfg.default
    for part in key_path.split("."):
        value = value[part]
    return value


def cmd_ingest(
    input_path,
    output_path,
    min_user_interactions=0,
    min_item_interactions=0,
    min_history_span_days=0,
):
    """Read a TSV interaction file, filter it and write a dataset directory"""
    dataset = load_interactions(input_path)
    if min_user_interactions or min_item_interactions or min_history_span_days:
        dataset = filter_dataset(
            dataset, min_user_interactions, min_item_interactions, min_history_span_days
        )
    dataset.to_directory(output_path)
    logger.info(
        "Dataset with %d users, %d items written to %s",
        dataset.n_users,
        dataset.n_items,
        output_path,
    )
    return dataset


class EpochLog:
    """Plugin appending one key=value line per epoch to a file"""

    def __init__(self, path):
        self.path = path
        open(path, "w").close()

    @hookimpl
    def timelyrec_epoch_end(self, record):
        with open(self.path, "a") as f:
            f.write(record.format() + "\n")


def cmd_train(dataset_path, checkpoint_path, config):
    """Train on a dataset directory and write the best checkpoint plus an epoch log"""
    dataset = load_dataset(dataset_path)
    data = config["data"]
    split_spec = split(dataset, data["split"], data["min_repeat"])
    model_config = ModelConfig.from_config(
        config["model"], dataset.n_users, dataset.n_items, data["utc_offset"]
    )
    train_config = TrainConfig.from_config(config)

    pm = get_plugin_manager()
    pm.register(EpochLog(checkpoint_path + ".epochs"))
    state = train(dataset, split_spec, model_config, train_config, plugin_manager=pm)

    save_checkpoint(
        checkpoint_path,
        state.best_model(),
        {
            "users_sha256": sha256_lines(dataset.user_vocab),
            "items_sha256": sha256_lines(dataset.item_vocab),
            "split": data["split"],
            "min_repeat": data["min_repeat"],
            "separation": data["separation"],
            "best_epoch": state.best_epoch,
            "best_hr10": float(state.best_hr10) if state.best_epoch else None,
        },
    )
    logger.info(
        "Best epoch %d of %d, checkpoint written to %s",
        state.best_epoch,
        state.epoch,
        checkpoint_path,
    )
    return state


def _load_compatible(checkpoint_path, dataset_path):
    model, extra = load_checkpoint(checkpoint_path)
    dataset = load_dataset(dataset_path)
    for table, vocab in (("users", dataset.user_vocab), ("items", dataset.item_vocab)):
        expected = extra.get(f"{table}_sha256")
        if expected is not None and expected != sha256_lines(vocab):
            raise InputError(
                f"{table} vocabulary of {dataset_path} does not match checkpoint {checkpoint_path}"
            )
    if (model.config.n_users, model.config.n_items) != (dataset.n_users, dataset.n_items):
        raise InputError(
            f"checkpoint {checkpoint_path} has {model.config.n_users} users and "
            f"{model.config.n_items} items, dataset has {dataset.n_users} and {dataset.n_items}"
        )
    return model, extra, dataset


def cmd_eval(
    checkpoint_path,
    dataset_path,
    scenario,
    seed=42,
    role="test",
    split_mode=None,
    min_repeat=None,
    batch_size=1024,
):
    """Evaluate a checkpoint and return the formatted metrics report"""
    model, extra, dataset = _load_compatible(checkpoint_path, dataset_path)
    split_spec = split(
        dataset,
        split_mode or extra.get("split", _default("data.split")),
        min_repeat or extra.get("min_repeat", _default("data.min_repeat")),
    )
    report = evaluate(
        model,
        dataset,
        split_spec,
        scenario,
        seed,
        role=role,
        batch_size=batch_size,
        separation=extra.get("separation", _default("data.separation")),
    )
    return report.format()


def _lookup(vocab, external_id, table):
    try:
        return vocab.index(external_id)
    except ValueError:
        raise InputError(f"Unknown {table} id {external_id!r}")


def _fields(t, offset):
    fields = decompose(t, offset)
    return " ".join(slot_label(g, fields.slot(g)) for g in GRANULARITIES)


def render_explanation(model, dataset, user, item, t, explanation, similarity=None):
    """Render an Explanation with the attention report template"""
    offset = model.config.utc_offset
    rows = []
    for g in model.config.granularities:
        raw = explanation.gradual[g]
        normalized = explanation.gradual_normalized(g)
        labels = ["target"] + [f"+-{j}" for j in range(1, len(raw))]
        if model.config.slot_attention == "softmax":
            labels = ["target"] + [
                f"{sign}{j}" for j in range(1, len(raw) // 2 + 1) for sign in "-+"
            ]
        rows.append(
            {
                "name": g,
                "slot": slot_label(g, explanation.slots[g]),
                "windows": [
                    {"label": label, "raw": r, "normalized": n}
                    for label, r, n in zip(labels, raw, normalized)
                ],
                "gate": explanation.gates[g],
            }
        )
    history = [
        {
            "index": j + 1,
            "item": dataset.item_vocab[hist_item],
            "time": hist_time,
            "fields": _fields(hist_time, offset),
            "similarity": c,
        }
        for j, (hist_item, hist_time, c) in enumerate(
            zip(
                explanation.history.items,
                explanation.history.timestamps,
                explanation.similarities,
            )
        )
    ]
    context = {
        "user": dataset.user_vocab[user],
        "item": dataset.item_vocab[item],
        "time": t,
        "when": format_timestamp(t, offset),
        "score": explanation.score,
        "granularities": rows,
        "history": history,
        "similarity": similarity,
    }
    with open(os.path.join(HERE, "explain.txt.tpl")) as f:
        template = Template(f.read())
    return template.render(context)


def cmd_explain(checkpoint_path, dataset_path, user_id, item_id, t, slot_similarity=None):
    """Attention report for one (user, item, time)"""
    model, _, dataset = _load_compatible(checkpoint_path, dataset_path)
    user = _lookup(dataset.user_vocab, user_id, "user")
    item = _lookup(dataset.item_vocab, item_id, "item")
    history = recent_history(dataset, user, t, model.config.history_length)
    _, explanation = model.predict(user, item, t, history)

    similarity = None
    if slot_similarity is not None:
        if slot_similarity not in model.config.granularities:
            raise InputError(f"Granularity {slot_similarity!r} is not enabled in the checkpoint")
        matrix = model.slot_similarity(slot_similarity)
        labels = [slot_label(slot_similarity, s) for s in range(len(matrix))]
        similarity = {
            "name": slot_similarity,
            "labels": labels,
            "rows": [
                {"label": label, "values": values.tolist()}
                for label, values in zip(labels, matrix)
            ],
        }
    return render_explanation(model, dataset, user, item, t, explanation, similarity)


def cmd_synth(spec, output_path):
    """Write a planted-pattern dataset and its ground truth sidecar"""
    return write_synthetic(spec, output_path)


def _parse_timestamp(value):
    try:
        t = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{value!r} is not an integer epoch timestamp")
    if t < 0:
        raise argparse.ArgumentTypeError(f"timestamp {t} is negative")
    return t


def _build_parser():
    argparser = argparse.ArgumentParser(
        prog="timelyrec",
        description="Time-aware recommendation: ingest, train, evaluate and explain",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    argparser.add_argument(
        "--log-dir", default=None, help="Also append log output to LOG_DIR/timelyrec.log"
    )
    subparsers = argparser.add_subparsers(dest="action")

    ingest_parser = subparsers.add_parser(
        "ingest",
        help="Turn a TSV interaction file into a dataset directory",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    ingest_parser.add_argument("input", help="user<TAB>item<TAB>timestamp file")
    ingest_parser.add_argument("output", help="Dataset directory to write")
    ingest_parser.add_argument(
        "--min-user-interactions", type=int, default=0, help="Drop users with fewer interactions"
    )
    ingest_parser.add_argument(
        "--min-item-interactions", type=int, default=0, help="Drop items with fewer interactions"
    )
    ingest_parser.add_argument(
        "--min-history-span-days",
        type=float,
        default=0,
        help="Drop users whose first and last interaction are closer than this",
    )

    train_parser = subparsers.add_parser(
        "train", help="Train a model and write its best checkpoint"
    )
    train_parser.add_argument("dataset", help="Dataset directory written by ingest")
    train_parser.add_argument("checkpoint", help="Checkpoint file to write")
    train_parser.add_argument("--config", default=None, help="YAML config file")
    train_parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config key, e.g. model.hidden=32,32 (repeatable)",
    )
    for flag, key_path in TRAIN_FLAGS.items():
        default = _default(key_path)
        kind = type(default) if not isinstance(default, str) else str
        train_parser.add_argument(
            "--" + flag.replace("_", "-"),
            type=kind,
            default=None,
            help=f"{key_path} (default: {default})",
        )

    eval_parser = subparsers.add_parser(
        "eval",
        help="Print HR@K and NDCG@K of a checkpoint",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    eval_parser.add_argument("checkpoint", help="Checkpoint written by train")
    eval_parser.add_argument("dataset", help="Dataset directory the checkpoint was trained on")
    eval_parser.add_argument(
        "--scenario", choices=SCENARIOS, default="item", help="Which negatives to rank against"
    )
    eval_parser.add_argument(
        "--seed", type=int, default=_default("eval.seed"), help="Seed of the negative sampler"
    )
    eval_parser.add_argument(
        "--role",
        choices=("test", "validation"),
        default="test",
        help="Which held out interaction to rank",
    )
    eval_parser.add_argument(
        "--split",
        choices=("standard", "repeat-aware"),
        default=None,
        help="Split mode, defaults to the one used for training",
    )
    eval_parser.add_argument(
        "--min-repeat",
        type=int,
        default=None,
        help="Repeat count of the repeat-aware split, defaults to the one used for training",
    )
    eval_parser.add_argument(
        "--batch-size",
        type=int,
        default=_default("eval.batch_size"),
        help="Candidates scored per forward pass",
    )

    explain_parser = subparsers.add_parser(
        "explain",
        help="Show the attention weights behind one prediction",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    explain_parser.add_argument("checkpoint", help="Checkpoint written by train")
    explain_parser.add_argument("dataset", help="Dataset directory the checkpoint was trained on")
    explain_parser.add_argument("user", help="External user id")
    explain_parser.add_argument("item", help="External item id")
    explain_parser.add_argument("time", type=_parse_timestamp, help="Epoch seconds")
    explain_parser.add_argument(
        "--slot-similarity",
        choices=GRANULARITIES,
        default=None,
        help="Also print cosine similarities between the slot embeddings of a granularity",
    )

    synth_parser = subparsers.add_parser(
        "synth",
        help="Generate a planted-pattern interaction file",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    synth_parser.add_argument(
        "output", help="TSV file to write; ground truth goes to OUTPUT.truth.yaml"
    )
    defaults = SyntheticSpec()
    synth_parser.add_argument("--users", type=int, default=defaults.n_users, help="Users")
    synth_parser.add_argument("--items", type=int, default=defaults.n_items, help="Items")
    synth_parser.add_argument(
        "--interactions-per-user",
        type=int,
        default=defaults.interactions_per_user,
        help="Interactions generated per user",
    )
    synth_parser.add_argument(
        "--favorites", type=int, default=defaults.favorites, help="Favourite items per user"
    )
    synth_parser.add_argument(
        "--granularities",
        default=",".join(defaults.granularities),
        help="Comma separated granularities to plant preferences for",
    )
    synth_parser.add_argument(
        "--preferred-slots",
        type=int,
        default=defaults.preferred_slots,
        help="Preferred slots per favourite and granularity",
    )
    synth_parser.add_argument(
        "--jitter",
        type=int,
        default=defaults.jitter,
        help="Largest shift away from a preferred slot",
    )
    synth_parser.add_argument(
        "--weeks", type=int, default=defaults.weeks, help="Length of the log in weeks"
    )
    synth_parser.add_argument(
        "--start",
        type=int,
        default=defaults.start,
        help="Epoch seconds of the first week, a Monday 00:00 UTC",
    )
    synth_parser.add_argument(
        "--trends", type=int, default=defaults.n_trends, help="Number of trending items"
    )
    synth_parser.add_argument(
        "--trend-share",
        type=float,
        default=defaults.trend_share,
        help="Share of interactions drawn from trends",
    )
    synth_parser.add_argument(
        "--trend-decay-days",
        type=float,
        default=defaults.trend_decay_days,
        help="Mean delay of a trend interaction after the onset",
    )
    synth_parser.add_argument("--seed", type=int, default=defaults.seed, help="Generator seed")
    return argparser


def train_config_from_args(args):
    """Merge defaults, --config, --set and explicit flags, in that order"""
    overrides = list(args.overrides)
    for flag, key_path in TRAIN_FLAGS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key_path}={value}")
    return cfg.load_config(args.config, overrides)


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]

    argparser = _build_parser()
    args = argparser.parse_args(argv)
    init_logging(args.log_dir)

    try:
        if args.action == "ingest":
            cmd_ingest(
                args.input,
                args.output,
                args.min_user_interactions,
                args.min_item_interactions,
                args.min_history_span_days,
            )
        elif args.action == "train":
            cmd_train(args.dataset, args.checkpoint, train_config_from_args(args))
        elif args.action == "eval":
            sys.stdout.write(
                cmd_eval(
                    args.checkpoint,
                    args.dataset,
                    args.scenario,
                    args.seed,
                    args.role,
                    args.split,
                    args.min_repeat,
                    args.batch_size,
                )
            )
        elif args.action == "explain":
            sys.stdout.write(
                cmd_explain(
                    args.checkpoint,
                    args.dataset,
                    args.user,
                    args.item,
                    args.time,
                    args.slot_similarity,
                )
            )
        elif args.action == "synth":
            spec = SyntheticSpec(
                n_users=args.users,
                n_items=args.items,
                interactions_per_user=args.interactions_per_user,
                favorites=args.favorites,
                granularities=tuple(g for g in args.granularities.split(",") if g),
                preferred_slots=args.preferred_slots,
                jitter=args.jitter,
                weeks=args.weeks,
                start=args.start,
                n_trends=args.trends,
                trend_share=args.trend_share,
                trend_decay_days=args.trend_decay_days,
                seed=args.seed,
            )
            cmd_synth(spec, args.output)
        else:
            argparser.print_help()
            return 1
    except TimelyRecError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
