"""
The TimelyRec scoring function.

A target time is encoded per user: each calendar granularity's slot
embedding is personalised with the user embedding, smoothed over
neighbouring slots by gradual attention, and the granularities are mixed
with independent sigmoid gates. Recent items are weighed by how similar
the time encoding of each interaction is to the target's. User, time-stamped
item, time and history vectors are concatenated and scored by an MLP.

Everything is computed on a leading batch axis; the single-example
methods are thin wrappers over a batch of one.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diffcore as dc
from .calendar import (
    DEFAULT_WINDOW_RADIUS,
    GRANULARITIES,
    SLOT_COUNTS,
    GranularityConfig,
    decompose_many,
    max_radius,
    shift_slot,
    temporal_encoding_many,
)
from .errors import ContractError, InputError
from .utils import sha256_arrays
from .yaml import dumps, loads

SLOT_ATTENTION_MODES = ("gradual", "softmax", "none")
HISTORY_ATTENTION_MODES = ("cosine", "softmax")
GATE_QUERIES = ("user", "item")
HISTORY_ENCODINGS = ("history", "target")

# loss clamps predictions into [EPSILON, 1 - EPSILON] before taking logs
EPSILON = 1e-12


@dataclass
class ModelConfig:
    """
    Shape and variant of a TimelyRec model.

    The switches below the MLP settings turn off individual components,
    e.g. personalize=False uses slot embeddings without the user
    projection and slot_attention="none" ignores surrounding slots.
    """

    n_users: int
    n_items: int
    dim: int = 32
    history_length: int = 5
    granularities: tuple = GRANULARITIES
    window_radius: dict = field(default_factory=lambda: dict(DEFAULT_WINDOW_RADIUS))
    hidden: tuple = (64, 64)
    dropout: float = 0.2
    alpha_init: float = 1.0
    history_encoding: str = "history"
    personalize: bool = True
    slot_attention: str = "gradual"
    gate_query: str = "user"
    history_attention: str = "cosine"
    temporal_encoding: bool = True
    use_time_repr: bool = True
    use_history_repr: bool = True
    utc_offset: int = 0

    def __post_init__(self):
        # a single value from a `--set` override arrives unwrapped
        if isinstance(self.granularities, str):
            self.granularities = (self.granularities,)
        if isinstance(self.hidden, int):
            self.hidden = (self.hidden,)
        self.granularities = tuple(self.granularities)
        self.hidden = tuple(int(w) for w in self.hidden)
        self.window_radius = {g: int(r) for g, r in self.window_radius.items()}
        if self.n_users < 1 or self.n_items < 1:
            raise ContractError("A model needs at least one user and one item")
        if self.dim < 1 or self.history_length < 0:
            raise ContractError(
                f"dim must be >= 1 and history_length >= 0, got {self.dim}, {self.history_length}"
            )
        if any(w < 1 for w in self.hidden):
            raise ContractError(f"hidden widths must be positive, got {self.hidden}")
        if not 0 <= self.dropout < 1:
            raise ContractError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name, value, allowed in (
            ("slot_attention", self.slot_attention, SLOT_ATTENTION_MODES),
            ("history_attention", self.history_attention, HISTORY_ATTENTION_MODES),
            ("gate_query", self.gate_query, GATE_QUERIES),
            ("history_encoding", self.history_encoding, HISTORY_ENCODINGS),
        ):
            if value not in allowed:
                raise ContractError(f"{name} must be one of {allowed}, got {value!r}")
        # validates enabled granularities and radius bounds
        self.granularity_config = GranularityConfig(
            self.granularities, self.window_radius
        )

    @classmethod
    def from_config(cls, section, n_users, n_items, utc_offset=0):
        """Build from the `model` section of a loaded config"""
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(section) - known
        if unknown:
            raise InputError(f"Unknown model settings: {', '.join(sorted(unknown))}")
        values = dict(section, n_users=n_users, n_items=n_items, utc_offset=utc_offset)
        return cls(**values)

    def radius(self, granularity):
        if self.slot_attention == "none":
            return 0
        return self.granularity_config.radius(granularity)

    def to_dict(self):
        values = asdict(self)
        values["granularities"] = list(self.granularities)
        values["hidden"] = list(self.hidden)
        return values


@dataclass(frozen=True)
class HistoryWindow:
    """Up to l (item, timestamp) pairs before a target time, most recent first"""

    items: tuple = ()
    timestamps: tuple = ()

    def __post_init__(self):
        if len(self.items) != len(self.timestamps):
            raise ContractError("history items and timestamps differ in length")
        if any(a <= b for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ContractError("history timestamps must be strictly decreasing")

    def __len__(self):
        return len(self.items)

    def arrays(self, length=None):
        """(items, timestamps, mask) arrays of shape (1, length), zero padded"""
        length = len(self) if length is None else length
        if len(self) > length:
            raise ContractError(f"history of {len(self)} entries exceeds {length}")
        items = np.zeros((1, length), dtype=np.int64)
        times = np.zeros((1, length), dtype=np.int64)
        mask = np.zeros((1, length), dtype=bool)
        items[0, : len(self)] = self.items
        times[0, : len(self)] = self.timestamps
        mask[0, : len(self)] = True
        return items, times, mask


@dataclass
class TimeDetails:
    """Attention weights produced while encoding a batch of timestamps"""

    slots: dict
    gradual: dict
    gates: np.ndarray


@dataclass
class Explanation:
    """Attention weights behind one prediction"""

    score: float
    slots: dict
    gradual: dict
    gates: dict
    similarities: tuple
    history: HistoryWindow

    def gradual_normalized(self, granularity):
        """Gradual attention weights rescaled so the target slot reads 1.0"""
        weights = self.gradual[granularity]
        return [w / weights[0] for w in weights]


def aggregate_history(target, hist_reprs, hist_items, mask, mode="cosine"):
    """
    Combine history item vectors by their time similarity to the target.

    target (N, d), hist_reprs (N, L, d), hist_items (N, L, d), mask (N, L).
    In cosine mode every entry gets an independent score (cos + 1) / 2; a
    zero time vector gets the neutral 0.5. Masked entries score zero.

    Returns (H (N, d), scores (N, L), number of zero vectors met).
    """
    mask = np.asarray(mask, dtype=bool)
    n, length = mask.shape
    dim = target.shape[-1]
    target = dc.reshape(target, (n, 1, dim))
    if mode == "cosine":
        target_zero = np.linalg.norm(target.data, axis=-1) == 0
        hist_zero = np.linalg.norm(hist_reprs.data, axis=-1) == 0
        degenerate = target_zero | hist_zero
        safe_target = dc.masked_fill(target, target_zero[..., None], 1.0)
        safe_hist = dc.masked_fill(hist_reprs, hist_zero[..., None], 1.0)
        cos = dc.cosine(safe_target, safe_hist)
        scores = dc.masked_fill(dc.scale(dc.add(cos, 1.0), 0.5), degenerate, 0.5)
        zero_count = int(np.sum(degenerate & mask))
    else:
        logits = dc.scale(dc.dot(target, hist_reprs), 1.0 / np.sqrt(dim))
        # masked logits become very negative so they vanish from the softmax
        scores = dc.softmax(dc.masked_fill(logits, ~mask, -1e9))
        zero_count = 0
    scores = dc.hadamard(scores, mask.astype(np.float64))
    return dc.weighted_sum(scores, hist_items), scores, zero_count


def binary_cross_entropy(predictions, labels):
    """Mean binary cross entropy of predictions (N,) against 0/1 labels"""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise ContractError("loss of an empty batch")
    p = dc.clip(predictions, EPSILON, 1.0 - EPSILON)
    log_likelihood = dc.add(
        dc.hadamard(labels, dc.log(p)),
        dc.hadamard(1.0 - labels, dc.log(dc.sub(1.0, p))),
    )
    return dc.scale(dc.reduce_sum(log_likelihood), -1.0 / labels.size)


class TimelyRec:
    def __init__(self, config, seed=0):
        self.config = config
        self.store = dc.ParamStore()
        # count of cosine inputs that were zero vectors, reset by the trainer
        self.zero_norm_count = 0

        rng = np.random.default_rng(seed)
        d = config.dim
        self.store.add("user", dc.init_uniform(rng, (config.n_users, d), d))
        self.store.add("item", dc.init_uniform(rng, (config.n_items, d), d))
        for g in config.granularities:
            self.store.add(f"slot.{g}", dc.init_uniform(rng, (SLOT_COUNTS[g], d), d))
            self.store.add(f"personal.{g}", dc.init_uniform(rng, (d, d), d))
        self.store.add("query", dc.init_uniform(rng, (d, d), d))
        self.store.add("alpha", np.array(config.alpha_init))

        widths = [4 * d, *config.hidden]
        for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            self.store.add(f"mlp.{k}.weight", dc.init_uniform(rng, (fan_out, fan_in), d))
            self.store.add(f"mlp.{k}.bias", np.zeros(fan_out))
        self.store.add("mlp.out.weight", dc.init_uniform(rng, (1, widths[-1]), d))
        self.store.add("mlp.out.bias", np.zeros(1))

    # -- building blocks, all batched -------------------------------------

    def _check_granularity(self, granularity):
        if granularity not in self.config.granularities:
            raise ContractError(f"Granularity {granularity!r} is not enabled")

    def _personalized(self, projection, granularity, slots):
        embedding = dc.gather(self.store[f"slot.{granularity}"], slots)
        if projection is None:
            return embedding
        return dc.hadamard(projection, embedding)

    def _projection(self, user_emb, granularity):
        if not self.config.personalize:
            return None
        return dc.matvec(self.store[f"personal.{granularity}"], user_emb)

    def _granularity_repr(self, user_emb, granularity, slots, radius):
        """
        Gradual attention over windows of 1, 3, ..., 2r+1 slots around each slot.

        Returns (T_g (N, d), attention weights (N, r+1)).
        """
        projection = self._projection(user_emb, granularity)
        centre = self._personalized(projection, granularity, slots)
        if radius == 0:
            return centre, np.ones(slots.shape + (1,))

        around = {0: centre}
        for offset in range(1, radius + 1):
            for signed in (-offset, offset):
                shifted = shift_slot(slots, signed, granularity)
                around[signed] = self._personalized(projection, granularity, shifted)

        if self.config.slot_attention == "gradual":
            candidates = [centre] + [
                dc.mean([around[o] for o in range(-j, j + 1)])
                for j in range(1, radius + 1)
            ]
        else:
            candidates = [centre] + [
                around[o] for j in range(1, radius + 1) for o in (-j, j)
            ]
        inv_sqrt_d = 1.0 / np.sqrt(self.config.dim)
        logits = dc.stack(
            [dc.scale(dc.dot(centre, c), inv_sqrt_d) for c in candidates], axis=-1
        )
        weights = dc.softmax(logits)
        combined = dc.weighted_sum(weights, dc.stack(candidates, axis=-2))
        return combined, weights.data

    def _combine(self, query_emb, reprs):
        """Sigmoid-gated sum of granularity representations"""
        query = dc.matvec(self.store["query"], query_emb)
        gs = self.config.granularities
        gates = dc.stack([dc.sigmoid(dc.dot(query, reprs[g])) for g in gs], axis=-1)
        combined = dc.weighted_sum(gates, dc.stack([reprs[g] for g in gs], axis=-2))
        return combined, gates

    def _time_repr(self, users, items, times):
        users = np.asarray(users, dtype=np.int64)
        user_emb = dc.gather(self.store["user"], users)
        slots = decompose_many(times, self.config.utc_offset)
        reprs, gradual = {}, {}
        for g in self.config.granularities:
            reprs[g], gradual[g] = self._granularity_repr(
                user_emb, g, slots[g], self.config.radius(g)
            )
        if self.config.gate_query == "item":
            query_emb = dc.gather(self.store["item"], items)
        else:
            query_emb = user_emb
        combined, gates = self._combine(query_emb, reprs)
        return combined, TimeDetails(slots, gradual, gates.data)

    def _item_at_time(self, items, times):
        embedding = dc.gather(self.store["item"], items)
        if not self.config.temporal_encoding:
            return embedding
        encoding = temporal_encoding_many(times, self.config.dim)
        return dc.add(embedding, dc.scale(dc.constant(encoding), self.store["alpha"]))

    def _history_repr(self, users, items, times, target, hist_items, hist_times, mask):
        n, length = mask.shape
        d = self.config.dim
        if length == 0:
            return dc.constant(np.zeros((n, d))), np.zeros((n, 0))
        # padded slots reuse the target time so every row stays a valid timestamp
        filled_times = np.where(mask, hist_times, times[:, None])
        filled_items = np.where(mask, hist_items, 0)
        hist_reprs, _ = self._time_repr(
            np.repeat(users, length), np.repeat(items, length), filled_times.reshape(-1)
        )
        hist_reprs = dc.reshape(hist_reprs, (n, length, d))
        if self.config.history_encoding == "history":
            encoding_times = filled_times
        else:
            encoding_times = np.broadcast_to(times[:, None], (n, length))
        hist_item_reprs = self._item_at_time(filled_items, encoding_times)
        combined, scores, zero_count = aggregate_history(
            target, hist_reprs, hist_item_reprs, mask, self.config.history_attention
        )
        self.zero_norm_count += zero_count
        return combined, scores.data

    def forward(
        self,
        users,
        items,
        times,
        hist_items,
        hist_times,
        hist_mask,
        training=False,
        rng=None,
    ):
        """
        Predicted interaction probabilities for a batch.

        users, items, times are (N,) int arrays; hist_* are (N, L) with a
        boolean mask marking present history entries. Returns
        (probabilities Tensor (N,), TimeDetails of the targets,
        history similarity scores (N, L)).
        """
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        hist_mask = np.asarray(hist_mask, dtype=bool)
        if training and self.config.dropout > 0 and rng is None:
            raise ContractError("training with dropout needs a random generator")
        n, d = len(users), self.config.dim

        target, details = self._time_repr(users, items, times)
        history, similarities = self._history_repr(
            users,
            items,
            times,
            target,
            np.asarray(hist_items, dtype=np.int64),
            np.asarray(hist_times, dtype=np.int64),
            hist_mask,
        )
        zeros = dc.constant(np.zeros((n, d)))
        x = dc.concat(
            [
                dc.gather(self.store["user"], users),
                self._item_at_time(items, times),
                target if self.config.use_time_repr else zeros,
                history if self.config.use_history_repr else zeros,
            ],
            axis=-1,
        )
        for k in range(len(self.config.hidden)):
            x = dc.matvec(self.store[f"mlp.{k}.weight"], x)
            x = dc.relu(dc.add(x, self.store[f"mlp.{k}.bias"]))
            x = dc.dropout(x, self.config.dropout, training, rng)
        logit = dc.add(dc.matvec(self.store["mlp.out.weight"], x), self.store["mlp.out.bias"])
        return dc.sigmoid(dc.reshape(logit, (n,))), details, similarities

    def forward_examples(self, examples, training=False, rng=None):
        return self.forward(
            examples.users,
            examples.items,
            examples.times,
            examples.hist_items,
            examples.hist_times,
            examples.hist_mask,
            training=training,
            rng=rng,
        )

    def loss(self, examples, training=False, rng=None):
        """Mean binary cross entropy over a batch of labelled examples"""
        if len(examples) == 0:
            raise ContractError("loss of an empty batch")
        predictions, _, _ = self.forward_examples(examples, training, rng)
        return binary_cross_entropy(predictions, examples.labels)

    def score(self, examples, batch_size=1024):
        """Inference-mode probabilities for any number of examples, as a numpy array"""
        out = np.empty(len(examples))
        with dc.no_grad():
            for start in range(0, len(examples), batch_size):
                chunk = examples.take(np.arange(start, min(start + batch_size, len(examples))))
                predictions, _, _ = self.forward_examples(chunk)
                out[start : start + len(chunk)] = predictions.data
        return out

    # -- single example operations ----------------------------------------

    def personalize(self, user, t, granularity):
        """(W_g U_u) * E_g(slot of t), a vector of length d"""
        self._check_granularity(granularity)
        user_emb = dc.gather(self.store["user"], np.array([user]))
        slots = decompose_many(np.array([t]), self.config.utc_offset)[granularity]
        out = self._personalized(self._projection(user_emb, granularity), granularity, slots)
        return dc.reshape(out, (self.config.dim,))

    def gradual_attention(self, user, t, granularity, radius=None):
        """Gradual attention output and its r+1 weights for one (user, time)"""
        self._check_granularity(granularity)
        if radius is None:
            radius = self.config.radius(granularity)
        if not 0 <= radius <= max_radius(granularity):
            raise ContractError(f"radius {radius} out of range for {granularity}")
        user_emb = dc.gather(self.store["user"], np.array([user]))
        slots = decompose_many(np.array([t]), self.config.utc_offset)[granularity]
        out, weights = self._granularity_repr(user_emb, granularity, slots, radius)
        return dc.reshape(out, (self.config.dim,)), weights[0]

    def combine_granularities(self, user, reprs, item=None):
        """
        Gate each granularity's vector by sigmoid(dot(W_q q, T_g)) and sum.

        q is the user embedding, or the item embedding of `item` when the
        model gates by item. Returns (vector, {granularity: gate}).
        """
        if not reprs:
            raise ContractError("combine_granularities needs at least one granularity")
        for g in reprs:
            self._check_granularity(g)
        if self.config.gate_query == "item":
            if item is None:
                raise ContractError("an item-gated model needs the target item")
            query_emb = dc.gather(self.store["item"], np.array(item))
        else:
            query_emb = dc.gather(self.store["user"], np.array(user))
        query = dc.matvec(self.store["query"], query_emb)
        gs = [g for g in self.config.granularities if g in reprs]
        gates = dc.stack([dc.sigmoid(dc.dot(query, reprs[g])) for g in gs], axis=-1)
        combined = dc.weighted_sum(gates, dc.stack([reprs[g] for g in gs], axis=-2))
        return combined, dict(zip(gs, gates.data.tolist()))

    def time_representation(self, user, t, item=0):
        """The user's encoding of time t, a vector of length d, with its details"""
        out, details = self._time_repr(np.array([user]), np.array([item]), np.array([t]))
        return dc.reshape(out, (self.config.dim,)), details

    def item_at_time(self, item, t):
        """Item embedding plus alpha times the temporal encoding of t"""
        out = self._item_at_time(np.array([item]), np.array([t]))
        return dc.reshape(out, (self.config.dim,))

    def time_based_attention(self, target, history, user, item=0, t=None):
        """
        Summarise a history window by time similarity to target (a length d vector).

        With history_encoding "target", history items are encoded at the
        target time t, which must then be given.

        Returns (H vector of length d, per-entry scores).
        """
        if self.config.history_encoding != "history" and t is None:
            raise ContractError("target-time history encoding needs the target time t")
        if t is not None and any(ts >= t for ts in history.timestamps):
            raise ContractError("history entries must precede the target time")
        if len(history) == 0:
            return dc.constant(np.zeros(self.config.dim)), np.zeros(0)
        hist_items, hist_times, mask = history.arrays()
        length = len(history)
        hist_reprs, _ = self._time_repr(
            np.repeat(user, length), np.repeat(item, length), hist_times.reshape(-1)
        )
        hist_reprs = dc.reshape(hist_reprs, (1, length, self.config.dim))
        if self.config.history_encoding == "history":
            encoding_times = hist_times
        else:
            encoding_times = np.full_like(hist_times, t)
        hist_item_reprs = self._item_at_time(hist_items, encoding_times)
        combined, scores, zero_count = aggregate_history(
            dc.reshape(target, (1, self.config.dim)),
            hist_reprs,
            hist_item_reprs,
            mask,
            self.config.history_attention,
        )
        self.zero_norm_count += zero_count
        return dc.reshape(combined, (self.config.dim,)), scores.data[0]

    def predict(self, user, item, t, history=HistoryWindow()):
        """Inference-mode probability that user interacts with item at t, and why"""
        if any(ts >= t for ts in history.timestamps):
            raise ContractError("history entries must precede the target time")
        hist_items, hist_times, mask = history.arrays(max(len(history), 1))
        with dc.no_grad():
            predictions, details, similarities = self.forward(
                np.array([user]), np.array([item]), np.array([t]), hist_items, hist_times, mask
            )
        gs = self.config.granularities
        explanation = Explanation(
            score=float(predictions.data[0]),
            slots={g: int(details.slots[g][0]) for g in gs},
            gradual={g: details.gradual[g][0].tolist() for g in gs},
            gates={g: float(b) for g, b in zip(gs, details.gates[0])},
            similarities=tuple(float(c) for c in similarities[0, : len(history)]),
            history=history,
        )
        return explanation.score, explanation

    def slot_similarity(self, granularity):
        """Cosine similarity between every pair of raw slot embeddings of a granularity"""
        self._check_granularity(granularity)
        table = self.store[f"slot.{granularity}"].data
        norms = np.linalg.norm(table, axis=1, keepdims=True)
        unit = table / np.where(norms == 0, 1.0, norms)
        return unit @ unit.T


def save_checkpoint(path, model, extra=None):
    """Write model parameters with a YAML header describing the model and their digest"""
    arrays = model.store.snapshot()
    header = {
        "model": model.config.to_dict(),
        "params_sha256": sha256_arrays(arrays),
        "extra": extra or {},
    }
    dc.save_params(path, arrays, dumps(header).encode("utf-8"))


def load_checkpoint(path):
    """Rebuild a model from save_checkpoint output, returning (model, extra)"""
    try:
        header_bytes, arrays = dc.load_params(path)
    except FileNotFoundError:
        raise InputError(f"Checkpoint {path} does not exist")
    header = loads(header_bytes.decode("utf-8"))
    expected = header.get("params_sha256")
    if expected is not None and sha256_arrays(arrays) != expected:
        raise InputError(
            f"Checkpoint {path}: parameters do not match their recorded sha256"
        )
    settings = dict(header["model"])
    settings.pop("granularity_config", None)
    model = TimelyRec(ModelConfig(**settings))
    model.store.load(arrays)
    return model, header.get("extra") or {}
