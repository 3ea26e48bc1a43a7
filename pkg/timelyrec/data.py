"""
Interaction logs, leave-one-out splits, history windows and negative sampling.

Interaction files are tab separated `user<TAB>item<TAB>timestamp` lines
without a header. External ids are mapped to dense integers in order of
first appearance: users as they appear in the file, items as they appear
in the per-user chronological order that interactions.tsv is written in,
so re-ingesting a written dataset reproduces it."""
import csv
import logging
import os
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .calendar import SECONDS_PER_DAY, SECONDS_PER_HOUR
from .errors import ContractError, InputError, SamplingError
from .model import HistoryWindow
from .utils import derive_rng

logger = logging.getLogger("timelyrec")

# Past window for eval negative timestamps, six months of 30 days
EVAL_WINDOW = 180 * SECONDS_PER_DAY
MAX_REJECTIONS = 1000
# Largest timestamp held by int64
MAX_TIMESTAMP = str(np.iinfo(np.int64).max)

STANDARD = "standard"
REPEAT_AWARE = "repeat-aware"
SPLIT_MODES = (STANDARD, REPEAT_AWARE)

# Seed streams handed to derive_rng, so sampling, shuffling and dropout
# never share draws
SAMPLING_STREAM = 0
SHUFFLE_STREAM = 1
DROPOUT_STREAM = 2
EVAL_STREAM = 3

INTERACTIONS_FILE = "interactions.tsv"
USERS_FILE = "users.vocab"
ITEMS_FILE = "items.vocab"


class Dataset:
    """
    Chronological per-user sequences of positive interactions.

    users, items and times are parallel arrays of dense ids and epoch
    seconds in any order. Each user's sequence is sorted by time; ties
    keep their input order.
    """

    def __init__(self, user_vocab, item_vocab, users, items, times):
        self.user_vocab = tuple(user_vocab)
        self.item_vocab = tuple(item_vocab)
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        if not len(users) == len(items) == len(times):
            raise ContractError("users, items and times differ in length")
        if users.size and (users.min() < 0 or users.max() >= self.n_users):
            raise ContractError("user id outside the user vocabulary")
        if items.size and (items.min() < 0 or items.max() >= self.n_items):
            raise ContractError("item id outside the item vocabulary")
        if times.size and times.min() < 0:
            raise InputError(f"Negative timestamp {int(times.min())}")

        # lexsort is stable, so equal (user, time) keep input order
        order = np.lexsort((times, users))
        self.users = users[order]
        self.items = items[order]
        self.times = times[order]
        self._bounds = np.searchsorted(self.users, np.arange(self.n_users + 1))
        # last position of every run of equal (user, time)
        run_last = np.ones(len(users), dtype=bool)
        run_last[:-1] = (self.users[1:] != self.users[:-1]) | (
            self.times[1:] != self.times[:-1]
        )
        self._run_ends = np.flatnonzero(run_last)
        self._unconsumed = {}

    @property
    def n_users(self):
        return len(self.user_vocab)

    @property
    def n_items(self):
        return len(self.item_vocab)

    def __len__(self):
        return len(self.users)

    def sequence(self, user):
        """(items, times) of a user, oldest first"""
        start, stop = self._bounds[user], self._bounds[user + 1]
        return self.items[start:stop], self.times[start:stop]

    def sequence_length(self, user):
        return int(self._bounds[user + 1] - self._bounds[user])

    def consumed(self, user):
        """Sorted distinct items the user interacted with"""
        return np.unique(self.sequence(user)[0])

    def unconsumed(self, user):
        if user not in self._unconsumed:
            self._unconsumed[user] = np.setdiff1d(
                np.arange(self.n_items), self.consumed(user), assume_unique=True
            )
        return self._unconsumed[user]

    def pair_times(self, user, item, visible=None):
        """Timestamps at which user interacted with item, within the first `visible` entries"""
        items, times = self.sequence(user)
        if visible is not None:
            items, times = items[:visible], times[:visible]
        return times[items == item]

    def history_positions(self, user, t, length, visible=None):
        """
        Positions of the `length` latest interactions of user before t.

        Most recent first, with distinct timestamps: of several interactions
        sharing a timestamp only the last listed one is kept.
        """
        start, stop = int(self._bounds[user]), int(self._bounds[user + 1])
        if visible is not None:
            stop = min(stop, start + int(visible))
        end = start + int(np.searchsorted(self.times[start:stop], t, side="left"))
        if end == start or length == 0:
            return np.empty(0, dtype=np.int64)
        at = int(np.searchsorted(self._run_ends, end - 1))
        earlier = self._run_ends[max(at - length + 1, 0) : at]
        earlier = earlier[earlier >= start]
        return np.append(earlier, end - 1)[::-1]

    def time_range(self, user, visible=None):
        """(first, last) timestamp of a user's first `visible` interactions"""
        _, times = self.sequence(user)
        if visible is not None:
            times = times[:visible]
        if len(times) == 0:
            raise ContractError(f"user {self.user_vocab[user]} has no interactions")
        return int(times[0]), int(times[-1])

    def to_frame(self):
        """External ids and timestamps, sorted by dense user id then time"""
        return pd.DataFrame(
            {
                "user": np.array(self.user_vocab, dtype=object)[self.users],
                "item": np.array(self.item_vocab, dtype=object)[self.items],
                "timestamp": self.times,
            }
        )

    def write_tsv(self, path):
        self.to_frame().to_csv(
            path, sep="\t", header=False, index=False, quoting=csv.QUOTE_NONE
        )

    def to_directory(self, path):
        """Persist as interactions.tsv plus one vocabulary file per id table"""
        os.makedirs(path, exist_ok=True)
        self.write_tsv(os.path.join(path, INTERACTIONS_FILE))
        for name, vocab in ((USERS_FILE, self.user_vocab), (ITEMS_FILE, self.item_vocab)):
            with open(os.path.join(path, name), "w", encoding="utf-8") as f:
                f.writelines(f"{v}\n" for v in vocab)


def _first_undecodable_line(path):
    with open(path, "rb") as f:
        for number, raw in enumerate(f, start=1):
            try:
                raw.decode("utf-8")
            except UnicodeDecodeError:
                return number
    return "?"


def _read_frame(path):
    """Read a TSV interaction file into a frame of strings, checking every field"""
    try:
        frame = pd.read_csv(
            path,
            sep="\t",
            header=None,
            names=["user", "item", "timestamp"],
            dtype=str,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except FileNotFoundError:
        raise InputError(f"Interaction file {path} does not exist")
    except pd.errors.EmptyDataError:
        return pd.DataFrame({"user": [], "item": [], "timestamp": []}, dtype=str)
    except pd.errors.ParserError as e:
        raise InputError(f"{path}: malformed interaction file: {e}")
    except UnicodeDecodeError:
        raise InputError(f"{path}: line {_first_undecodable_line(path)}: not valid UTF-8")

    for column in ("user", "item"):
        bad = frame[column].isna() | (frame[column] == "")
        if bad.any():
            line = int(np.flatnonzero(bad.to_numpy())[0]) + 1
            raise InputError(f"{path}: line {line}: empty {column} id")
    bad = ~frame["timestamp"].str.fullmatch(r"[0-9]+").fillna(False).astype(bool)
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        raise InputError(
            f"{path}: line {line}: timestamp {frame['timestamp'].iloc[line - 1]!r} "
            "is not a non-negative integer"
        )
    digits = frame["timestamp"].str.lstrip("0")
    width = digits.str.len()
    bad = (width > len(MAX_TIMESTAMP)) | (
        (width == len(MAX_TIMESTAMP)) & (digits > MAX_TIMESTAMP)
    )
    if bad.any():
        line = int(np.flatnonzero(bad.to_numpy())[0]) + 1
        raise InputError(
            f"{path}: line {line}: timestamp {frame['timestamp'].iloc[line - 1]} "
            "does not fit in 64 bits"
        )
    return frame


def _renumber_items(users, items, times, item_vocab):
    """Number the items that occur by first appearance in (user, time) order"""
    order = np.lexsort((times, users))
    seen, first = np.unique(items[order], return_index=True)
    ranked = seen[np.argsort(first)]
    renumber = np.full(len(item_vocab), -1, dtype=np.int64)
    renumber[ranked] = np.arange(len(ranked))
    return renumber[items], [item_vocab[i] for i in ranked]


def dataset_from_frame(frame, user_vocab=None, item_vocab=None):
    """
    Build a Dataset from a frame with user, item and timestamp columns.

    Without vocabularies, users are numbered in order of first appearance
    and items in order of first appearance within each user's
    chronological sequence.
    With them, every id must already be in its vocabulary.
    """
    try:
        times = frame["timestamp"].astype(np.int64).to_numpy()
    except (OverflowError, ValueError) as e:
        raise InputError(f"timestamps must be integers below 2**63: {e}")
    columns = {}
    vocabs = {}
    for column, vocab in (("user", user_vocab), ("item", item_vocab)):
        values = frame[column].astype(str)
        if vocab is None:
            codes, uniques = pd.factorize(values, sort=False)
            vocabs[column] = list(uniques)
        else:
            index = pd.Index(vocab)
            codes = index.get_indexer(values)
            if (codes < 0).any():
                missing = values[codes < 0].iloc[0]
                raise InputError(f"{column} id {missing!r} is not in the {column} vocabulary")
            vocabs[column] = list(vocab)
        columns[column] = np.asarray(codes, dtype=np.int64)
    if item_vocab is None:
        columns["item"], vocabs["item"] = _renumber_items(
            columns["user"], columns["item"], times, vocabs["item"]
        )
    return Dataset(vocabs["user"], vocabs["item"], columns["user"], columns["item"], times)


def load_interactions(path):
    """Read a TSV interaction file into a Dataset"""
    frame = _read_frame(path)
    dataset = dataset_from_frame(frame)
    logger.info(
        "Loaded %d interactions of %d users on %d items from %s",
        len(dataset),
        dataset.n_users,
        dataset.n_items,
        path,
    )
    return dataset


def _read_vocab(path):
    try:
        with open(path, encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    except FileNotFoundError:
        raise InputError(f"Vocabulary file {path} does not exist")
    except UnicodeDecodeError:
        raise InputError(f"{path}: line {_first_undecodable_line(path)}: not valid UTF-8")


def load_dataset(path):
    """Read a directory written by Dataset.to_directory"""
    if not os.path.isdir(path):
        raise InputError(f"Dataset directory {path} does not exist")
    user_vocab = _read_vocab(os.path.join(path, USERS_FILE))
    item_vocab = _read_vocab(os.path.join(path, ITEMS_FILE))
    frame = _read_frame(os.path.join(path, INTERACTIONS_FILE))
    return dataset_from_frame(frame, user_vocab, item_vocab)


def filter_dataset(
    dataset, min_user_interactions=0, min_item_interactions=0, min_history_span_days=0
):
    """
    Drop users and items below the given thresholds until none remain.

    Users need at least min_user_interactions interactions spanning at
    least min_history_span_days days; items need min_item_interactions.
    Dropping an item can push a user below threshold, so the filters are
    applied repeatedly. Users keep their relative order; items are
    renumbered by first appearance like a freshly loaded file.
    """
    frame = pd.DataFrame(
        {"user": dataset.users, "item": dataset.items, "timestamp": dataset.times}
    )
    min_span = min_history_span_days * SECONDS_PER_DAY
    while True:
        by_user = frame.groupby("user")["timestamp"]
        user_counts = by_user.transform("size")
        user_span = by_user.transform("max") - by_user.transform("min")
        item_counts = frame.groupby("item")["item"].transform("size")
        keep = (
            (user_counts >= min_user_interactions)
            & (user_span >= min_span)
            & (item_counts >= min_item_interactions)
        )
        if keep.all():
            break
        frame = frame[keep]

    kept_users = np.unique(frame["user"].to_numpy())
    users = np.searchsorted(kept_users, frame["user"].to_numpy())
    times = frame["timestamp"].to_numpy()
    items, item_vocab = _renumber_items(
        users, frame["item"].to_numpy(), times, dataset.item_vocab
    )
    logger.info(
        "Filtering kept %d of %d users and %d of %d items",
        len(kept_users),
        dataset.n_users,
        len(item_vocab),
        dataset.n_items,
    )
    return Dataset([dataset.user_vocab[u] for u in kept_users], item_vocab, users, items, times)


@dataclass
class SplitSpec:
    """
    Per user positions of the test and validation interactions.

    Positions index the user's sequence; -1 marks a user left out of
    evaluation. train_end[u] is the length of the training-visible prefix.
    """

    mode: str
    test: np.ndarray
    validation: np.ndarray
    train_end: np.ndarray

    def evaluated_users(self):
        return np.flatnonzero(self.test >= 0)

    def target(self, role):
        if role == "test":
            return self.test
        if role == "validation":
            return self.validation
        raise ContractError(f"Unknown evaluation role {role!r}")

    def n_train(self):
        return int(self.train_end.sum())


def _repeat_aware_positions(items, min_repeat):
    """Positions of first interactions with items consumed at least min_repeat times"""
    uniques, first, counts = np.unique(items, return_index=True, return_counts=True)
    return np.sort(first[counts >= min_repeat])


def split(dataset, mode=STANDARD, min_repeat=3):
    """
    Leave-one-out split of every user's sequence.

    standard: the last interaction is the test, the second last the
    validation, the rest is training. repeat-aware: among first
    interactions with items the user consumed at least min_repeat times,
    the latest is the test and the second latest the validation; only
    interactions before the validation are used for training.

    Users without enough interactions are kept for training only.
    """
    if mode not in SPLIT_MODES:
        raise InputError(f"Split mode must be one of {SPLIT_MODES}, got {mode!r}")
    n = dataset.n_users
    test = np.full(n, -1, dtype=np.int64)
    validation = np.full(n, -1, dtype=np.int64)
    train_end = np.zeros(n, dtype=np.int64)
    skipped = 0
    for u in range(n):
        length = dataset.sequence_length(u)
        train_end[u] = length
        if mode == STANDARD:
            if length < 3:
                skipped += 1
                continue
            test[u], validation[u] = length - 1, length - 2
            train_end[u] = length - 2
        else:
            positions = _repeat_aware_positions(dataset.sequence(u)[0], min_repeat)
            if len(positions) < 2:
                skipped += 1
                continue
            test[u], validation[u] = positions[-1], positions[-2]
            train_end[u] = positions[-2]
    if skipped:
        logger.info("%d of %d users left out of evaluation by the %s split", skipped, n, mode)
    return SplitSpec(mode, test, validation, train_end)


def recent_history(dataset, user, t, length, visible=None):
    """The `length` latest interactions of user strictly before t, most recent first"""
    positions = dataset.history_positions(user, t, length, visible)
    return HistoryWindow(
        tuple(int(i) for i in dataset.items[positions]),
        tuple(int(s) for s in dataset.times[positions]),
    )


@dataclass
class Examples:
    """A batch of (user, item, time) examples with labels and padded histories"""

    users: np.ndarray
    items: np.ndarray
    times: np.ndarray
    labels: np.ndarray
    hist_items: np.ndarray
    hist_times: np.ndarray
    hist_mask: np.ndarray

    def __len__(self):
        return len(self.users)

    def take(self, index):
        return Examples(
            self.users[index],
            self.items[index],
            self.times[index],
            self.labels[index],
            self.hist_items[index],
            self.hist_times[index],
            self.hist_mask[index],
        )


def make_examples(dataset, users, items, times, labels, length, visible=None):
    """
    Attach history windows to parallel arrays of examples.

    visible, if given, holds for every example the length of the user's
    sequence prefix its history may draw from.
    """
    users = np.asarray(users, dtype=np.int64)
    times = np.asarray(times, dtype=np.int64)
    n = len(users)
    hist_items = np.zeros((n, length), dtype=np.int64)
    hist_times = np.zeros((n, length), dtype=np.int64)
    hist_mask = np.zeros((n, length), dtype=bool)
    for row in range(n):
        positions = dataset.history_positions(
            users[row], times[row], length, None if visible is None else visible[row]
        )
        k = len(positions)
        hist_items[row, :k] = dataset.items[positions]
        hist_times[row, :k] = dataset.times[positions]
        hist_mask[row, :k] = True
    return Examples(
        users,
        np.asarray(items, dtype=np.int64),
        times,
        np.asarray(labels, dtype=np.float64),
        hist_items,
        hist_times,
        hist_mask,
    )


def sample_negative_item(dataset, user, rng):
    """An item drawn uniformly from those the user never consumed"""
    candidates = dataset.unconsumed(user)
    if len(candidates) == 0:
        raise SamplingError(
            f"user {dataset.user_vocab[user]} consumed every item, no negative item exists"
        )
    return int(candidates[rng.integers(len(candidates))])


def sample_negative_timestamp(
    dataset,
    user,
    item,
    t_pos,
    purpose,
    rng,
    accepted=(),
    separation=SECONDS_PER_HOUR,
    visible=None,
):
    """
    A timestamp at which user did not interact with item.

    eval: uniform over [t_pos - 180 days, t_pos), at least `separation`
    seconds from every time the user interacted with item and from every
    timestamp in accepted. train: uniform over the user's first to last
    training-visible time, at least `separation` seconds from the
    training-visible interactions with item.
    """
    if purpose == "eval":
        low, high = max(0, int(t_pos) - EVAL_WINDOW), int(t_pos)
        taken = np.concatenate(
            [dataset.pair_times(user, item), np.asarray(accepted, dtype=np.int64)]
        )
    elif purpose == "train":
        first, last = dataset.time_range(user, visible)
        low, high = first, last + 1
        taken = dataset.pair_times(user, item, visible)
    else:
        raise ContractError(f"purpose must be 'train' or 'eval', got {purpose!r}")
    if low >= high:
        raise SamplingError(
            f"empty sampling window for ({dataset.user_vocab[user]}, {dataset.item_vocab[item]})"
        )
    for _ in range(MAX_REJECTIONS):
        t = int(rng.integers(low, high))
        if not np.any(np.abs(taken - t) < separation):
            return t
    raise SamplingError(
        f"no negative timestamp for ({dataset.user_vocab[user]}, {dataset.item_vocab[item]}) "
        f"after {MAX_REJECTIONS} rejections"
    )


def sample_eval_timestamps(dataset, user, item, t_pos, rng, count, separation=SECONDS_PER_HOUR):
    """count eval negative timestamps for (user, item), pairwise separated"""
    if separation < 1:
        raise ContractError(f"separation must be at least 1 second, got {separation}")
    accepted = []
    for _ in range(count):
        accepted.append(
            sample_negative_timestamp(
                dataset, user, item, t_pos, "eval", rng, accepted, separation
            )
        )
    return accepted


def training_positions(split_spec):
    """(user, position) of every training positive, users in id order"""
    users = np.repeat(np.arange(len(split_spec.train_end)), split_spec.train_end)
    starts = np.cumsum(split_spec.train_end) - split_spec.train_end
    positions = np.arange(len(users)) - np.repeat(starts, split_spec.train_end)
    return users, positions


def build_training_epoch(
    dataset, split_spec, seed, epoch, length, separation=SECONDS_PER_HOUR
):
    """
    Every training positive plus one negative of each kind.

    For a positive (u, i, t) the negatives are (u, i-, t), (u, i, t-) and
    (u, i-, t-). Draws depend only on (seed, epoch, user, position), so
    the same epoch always yields the same examples. A positive whose
    negatives cannot be sampled is skipped.

    Returns (Examples, number of skipped positives).
    """
    users, items, times, labels, visible = [], [], [], [], []
    skipped = 0
    for u, k in zip(*training_positions(split_spec)):
        seq_items, seq_times = dataset.sequence(u)
        i, t = int(seq_items[k]), int(seq_times[k])
        end = int(split_spec.train_end[u])
        rng = derive_rng(seed, SAMPLING_STREAM, epoch, u, k)
        try:
            wrong_item = sample_negative_item(dataset, u, rng)
            wrong_time = sample_negative_timestamp(
                dataset, u, i, t, "train", rng, separation=separation, visible=end
            )
            both_item = sample_negative_item(dataset, u, rng)
            both_time = sample_negative_timestamp(
                dataset, u, i, t, "train", rng, separation=separation, visible=end
            )
        except SamplingError as e:
            logger.debug("Skipping training positive: %s", e)
            skipped += 1
            continue
        users.extend([u] * 4)
        items.extend([i, wrong_item, i, both_item])
        times.extend([t, t, wrong_time, both_time])
        labels.extend([1.0, 0.0, 0.0, 0.0])
        visible.extend([end] * 4)
    if skipped:
        logger.info("Epoch %d skipped %d training positives", epoch, skipped)
    examples = make_examples(dataset, users, items, times, labels, length, visible)
    return examples, skipped
