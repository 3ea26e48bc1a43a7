"""
Top-K evaluation of a model in the item and item-timing scenarios.

Each evaluated user contributes one case: the held out positive ranked
against sampled negatives. Ties count against the positive.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .calendar import SECONDS_PER_HOUR
from .data import (
    EVAL_STREAM,
    EVAL_WINDOW,
    make_examples,
    sample_eval_timestamps,
    sample_negative_item,
)
from .errors import ContractError, NumericError
from .utils import derive_rng

logger = logging.getLogger("timelyrec")

ITEM = "item"
ITEM_TIMING = "item-timing"
SCENARIOS = (ITEM, ITEM_TIMING)

CUTOFFS = (1, 5, 10)
NEGATIVES_PER_KIND = 100

# Metric keys in report order; ndcg@1 equals hr@1 and is left out
METRIC_KEYS = ("hr@1", "hr@5", "ndcg@5", "hr@10", "ndcg@10")

_SCENARIO_IDS = {ITEM: 0, ITEM_TIMING: 1}
_ROLE_IDS = {"test": 0, "validation": 1}


def rank_positive(score_pos, scores_neg):
    """1 + number of negatives scoring at least as high as the positive"""
    scores_neg = np.asarray(scores_neg, dtype=np.float64)
    if math.isnan(score_pos) or np.isnan(scores_neg).any():
        raise NumericError("NaN score in ranking")
    return 1 + int(np.count_nonzero(scores_neg >= score_pos))


def hr_at_k(rank, k):
    return 1 if rank <= k else 0


def ndcg_at_k(rank, k):
    if rank <= k:
        return 1.0 / math.log2(rank + 1)
    return 0.0


@dataclass
class RankingCase:
    """One positive and its negatives; kinds is 'item', 'time' or 'both' per negative"""

    scenario: str
    user: int
    item: int
    time: int
    neg_items: np.ndarray
    neg_times: np.ndarray
    kinds: tuple

    def __post_init__(self):
        expected = NEGATIVES_PER_KIND * (1 if self.scenario == ITEM else 3)
        if not len(self.neg_items) == len(self.neg_times) == len(self.kinds) == expected:
            raise ContractError(
                f"{self.scenario} case needs {expected} negatives, got {len(self.neg_items)}"
            )
        kinds = np.asarray(self.kinds)
        same_time = self.neg_times[kinds == "item"]
        if np.any(same_time != self.time) or np.any(self.neg_items[kinds == "item"] == self.item):
            raise ContractError("item negatives must be other items at the positive's time")
        if np.any(self.neg_items[kinds == "time"] != self.item):
            raise ContractError("time negatives must keep the positive item")
        if np.any(self.neg_items[kinds == "both"] == self.item):
            raise ContractError("both negatives must use other items")
        for kind in ("time", "both"):
            times = self.neg_times[kinds == kind]
            if np.any(times >= self.time) or np.any(times < self.time - EVAL_WINDOW):
                raise ContractError(
                    f"{kind} negatives must fall in the window before the positive"
                )
            if len(np.unique(times)) != len(times):
                raise ContractError(f"{kind} negatives repeat a timestamp")

    def check_unobserved(self, dataset, separation=SECONDS_PER_HOUR):
        """Raise ContractError unless no negative is an observed interaction of the user"""
        kinds = np.asarray(self.kinds)
        other_items = self.neg_items[kinds != "time"]
        if np.isin(other_items, dataset.consumed(self.user)).any():
            raise ContractError(f"a negative item of user {self.user} was consumed by them")
        taken = dataset.pair_times(self.user, self.item)
        times = self.neg_times[kinds == "time"]
        if np.any(np.abs(times[:, None] - taken[None, :]) < separation):
            raise ContractError(
                f"a negative time of user {self.user} is within {separation}s of an interaction"
            )

    def candidates(self):
        """(items, times), the positive first"""
        return (
            np.concatenate([[self.item], self.neg_items]).astype(np.int64),
            np.concatenate([[self.time], self.neg_times]).astype(np.int64),
        )


@dataclass
class MetricsReport:
    scenario: str
    users_evaluated: int
    seed: int
    metrics: dict = field(default_factory=dict)

    def format(self):
        """key: value lines in a fixed order, metrics to four decimals"""
        lines = [
            f"scenario: {self.scenario}",
            f"users_evaluated: {self.users_evaluated}",
            f"seed: {self.seed}",
        ]
        lines.extend(f"{key}: {self.metrics[key]:.4f}" for key in METRIC_KEYS)
        return "\n".join(lines) + "\n"


def build_case(dataset, user, item, t_pos, scenario, rng, separation=SECONDS_PER_HOUR):
    """Sample the negatives of one ranking case"""
    neg_items = [sample_negative_item(dataset, user, rng) for _ in range(NEGATIVES_PER_KIND)]
    neg_times = [t_pos] * NEGATIVES_PER_KIND
    kinds = ("item",) * NEGATIVES_PER_KIND
    if scenario == ITEM_TIMING:
        wrong_times = sample_eval_timestamps(
            dataset, user, item, t_pos, rng, NEGATIVES_PER_KIND, separation
        )
        both_items = [
            sample_negative_item(dataset, user, rng) for _ in range(NEGATIVES_PER_KIND)
        ]
        both_times = sample_eval_timestamps(
            dataset, user, item, t_pos, rng, NEGATIVES_PER_KIND, separation
        )
        neg_items = neg_items + [item] * NEGATIVES_PER_KIND + both_items
        neg_times = neg_times + wrong_times + both_times
        kinds = kinds + ("time",) * NEGATIVES_PER_KIND + ("both",) * NEGATIVES_PER_KIND
    elif scenario != ITEM:
        raise ContractError(f"Unknown scenario {scenario!r}")
    case = RankingCase(
        scenario,
        int(user),
        int(item),
        int(t_pos),
        np.asarray(neg_items, dtype=np.int64),
        np.asarray(neg_times, dtype=np.int64),
        kinds,
    )
    case.check_unobserved(dataset, separation)
    return case


class EvalCache:
    """
    Ranking cases keyed by (scenario, role, seed, separation, user).

    Reusing one cache compares several models on identical candidates.
    """

    def __init__(self):
        self._cases = {}

    def __len__(self):
        return len(self._cases)

    def cases(self, dataset, split_spec, scenario, role, seed, separation=SECONDS_PER_HOUR):
        targets = split_spec.target(role)
        out = []
        for user in split_spec.evaluated_users():
            key = (scenario, role, seed, separation, int(user))
            if key not in self._cases:
                items, times = dataset.sequence(user)
                position = targets[user]
                rng = derive_rng(
                    seed, EVAL_STREAM, _SCENARIO_IDS[scenario], _ROLE_IDS[role], user
                )
                self._cases[key] = build_case(
                    dataset,
                    user,
                    int(items[position]),
                    int(times[position]),
                    scenario,
                    rng,
                    separation,
                )
            out.append(self._cases[key])
        return out


def score_cases(model, dataset, cases, batch_size=1024):
    """
    Model scores of every candidate of every case, positive first.

    Histories come from the full sequence strictly before each
    candidate's own time.
    """
    if not cases:
        return []
    users, items, times, sizes = [], [], [], []
    for case in cases:
        case_items, case_times = case.candidates()
        users.append(np.full(len(case_items), case.user))
        items.append(case_items)
        times.append(case_times)
        sizes.append(len(case_items))
    users = np.concatenate(users)
    examples = make_examples(
        dataset,
        users,
        np.concatenate(items),
        np.concatenate(times),
        np.zeros(len(users)),
        model.config.history_length,
    )
    scores = model.score(examples, batch_size)
    return np.split(scores, np.cumsum(sizes)[:-1])


def summarize(ranks, scenario, seed):
    ranks = list(ranks)
    n = len(ranks)
    metrics = {}
    for k in CUTOFFS:
        metrics[f"hr@{k}"] = sum(hr_at_k(r, k) for r in ranks) / n if n else 0.0
        metrics[f"ndcg@{k}"] = sum(ndcg_at_k(r, k) for r in ranks) / n if n else 0.0
    return MetricsReport(scenario, n, seed, metrics)


def evaluate(
    model,
    dataset,
    split_spec,
    scenario,
    seed=42,
    role="test",
    cache=None,
    batch_size=1024,
    separation=SECONDS_PER_HOUR,
):
    """Rank every evaluated user's held out positive and average HR / NDCG"""
    if scenario not in SCENARIOS:
        raise ContractError(f"scenario must be one of {SCENARIOS}, got {scenario!r}")
    cache = EvalCache() if cache is None else cache
    cases = cache.cases(dataset, split_spec, scenario, role, seed, separation)
    ranks = [
        rank_positive(scores[0], scores[1:])
        for scores in score_cases(model, dataset, cases, batch_size)
    ]
    report = summarize(ranks, scenario, seed)
    logger.info(
        "%s %s evaluation over %d users: hr@10=%.4f ndcg@10=%.4f",
        scenario,
        role,
        report.users_evaluated,
        report.metrics["hr@10"],
        report.metrics["ndcg@10"],
    )
    return report


def eval_item_recommendation(model, split_spec, dataset, seed=42, **kwargs):
    """Rank each positive among 100 unseen items at the positive's time"""
    return evaluate(model, dataset, split_spec, ITEM, seed, **kwargs)


def eval_item_timing(model, split_spec, dataset, seed=42, **kwargs):
    """Rank each positive among 100 wrong-item, 100 wrong-time and 100 wrong-both negatives"""
    return evaluate(model, dataset, split_spec, ITEM_TIMING, seed, **kwargs)
