"""Next-place prediction model.

Multi-modal embeddings feed a bidirectional history encoder and a
unidirectional recent encoder; a user-conditioned attention summarizes
personal preference while prior-weighted sums of the encoder states form
long- and short-term group preferences; a linear head over the
concatenated preference vectors scores every location, with an auxiliary
linear branch regressed onto the frozen embedding of the true next
location.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import UNKNOWN_INDEX, QuerySample
from .lstm import LstmCellParams, init_lstm_params, lstm_sequence
from .priors import N_SLOTS, QueryWeights
from .util import derive_seed

VARIANTS = ("full", "GNet", "PNet", "L", "S", "no-node2vec", "no-aux")

# preference vectors entering the prediction concat, per variant; the user
# embedding is always appended last
_VARIANT_PARTS = {
    "full": ("personal", "long", "short"),
    "no-node2vec": ("personal", "long", "short"),
    "no-aux": ("personal", "long", "short"),
    "GNet": ("long", "short"),
    "PNet": ("personal",),
    "L": ("personal", "long"),
    "S": ("personal", "short"),
}


@dataclass
class ModelConfig:
    n_users: int
    n_locations: int
    n_categories: int
    user_dim: int = 40
    location_dim: int = 500
    category_dim: int = 50
    time_dim: int = 10
    hidden: int = 500
    has_categories: bool = True
    aux_weight: float = 0.1
    variant: str = "full"
    history_cap: int = 100
    seed: int = 0

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        for name in ("n_users", "n_locations", "user_dim", "location_dim",
                     "time_dim", "hidden", "history_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.has_categories and (self.n_categories <= 0 or self.category_dim <= 0):
            raise ValueError("category vocab and dimension must be positive "
                             "when categories are enabled")
        if self.aux_weight < 0:
            raise ValueError(f"aux_weight must be >= 0, got {self.aux_weight}")

    @property
    def input_dim(self) -> int:
        base = self.location_dim + self.time_dim
        return base + (self.category_dim if self.has_categories else 0)

    @property
    def parts(self) -> tuple[str, ...]:
        return _VARIANT_PARTS[self.variant] + ("user",)

    def part_dim(self, part: str) -> int:
        return {"personal": 2 * self.hidden, "long": 2 * self.hidden,
                "short": self.hidden, "user": self.user_dim}[part]

    @property
    def concat_dim(self) -> int:
        return sum(self.part_dim(p) for p in self.parts)

    def part_slices(self) -> dict[str, slice]:
        out, offset = {}, 0
        for part in self.parts:
            out[part] = slice(offset, offset + self.part_dim(part))
            offset += self.part_dim(part)
        return out

    @property
    def effective_aux_weight(self) -> float:
        return 0.0 if self.variant == "no-aux" else self.aux_weight


def random_frozen_table(n_rows: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Random stand-in for a learned embedding table; the UNKNOWN row stays
    zero like a never-walked node."""
    table = rng.uniform(-0.5 / dim, 0.5 / dim, size=(n_rows, dim))
    table[UNKNOWN_INDEX] = 0.0
    return table


class ParameterStore:
    """All model tensors, trainable and frozen, under stable names."""

    def __init__(self, config: ModelConfig, location_table: np.ndarray,
                 category_table: np.ndarray | None, rng: np.random.Generator):
        config.validate()
        self.config = config
        bound = 1.0 / np.sqrt(config.hidden)

        def trainable(shape, name):
            return Tensor(rng.uniform(-bound, bound, size=shape),
                          requires_grad=True, name=name)

        loc = np.array(location_table, dtype=np.float64, copy=True)
        if loc.shape != (config.n_locations, config.location_dim):
            raise ValueError(
                f"location table shape {loc.shape} does not match config "
                f"({config.n_locations}, {config.location_dim})")
        loc[UNKNOWN_INDEX] = 0.0
        self.location_table = Tensor(loc, name="location_table")
        if config.has_categories:
            cat = np.array(category_table, dtype=np.float64, copy=True)
            if cat.shape != (config.n_categories, config.category_dim):
                raise ValueError(
                    f"category table shape {cat.shape} does not match config "
                    f"({config.n_categories}, {config.category_dim})")
            cat[UNKNOWN_INDEX] = 0.0
            self.category_table = Tensor(cat, name="category_table")
        else:
            self.category_table = None

        self.user_table = trainable((config.n_users, config.user_dim), "user_table")
        self.time_table = trainable((N_SLOTS, config.time_dim), "time_table")
        self.history_fwd = init_lstm_params(config.input_dim, config.hidden, rng,
                                            name="history_fwd")
        self.history_bwd = init_lstm_params(config.input_dim, config.hidden, rng,
                                            name="history_bwd")
        self.recent_cell = init_lstm_params(config.input_dim, config.hidden, rng,
                                            name="recent")
        self.attention = trainable((config.user_dim, 2 * config.hidden), "attention")
        self.prediction = trainable((config.n_locations, config.concat_dim),
                                    "prediction")
        self.auxiliary = trainable((config.location_dim, config.concat_dim),
                                   "auxiliary")

    def trainables(self) -> list[Tensor]:
        out = [self.user_table, self.time_table]
        for cell in (self.history_fwd, self.history_bwd, self.recent_cell):
            out.extend(cell.tensors())
        out.extend([self.attention, self.prediction, self.auxiliary])
        return out

    def all_tensors(self) -> list[Tensor]:
        frozen = [self.location_table]
        if self.category_table is not None:
            frozen.append(self.category_table)
        return frozen + self.trainables()

    def state_entries(self) -> list[tuple[str, np.ndarray]]:
        return [(t.name, t.data) for t in self.all_tensors()]

    def expected_shapes(self) -> dict[str, tuple]:
        return {t.name: t.data.shape for t in self.all_tensors()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for t in self.all_tensors():
            arr = state[t.name]
            if arr.shape != t.data.shape:
                raise ValueError(
                    f"state shape {arr.shape} does not match parameter "
                    f"{t.name} of shape {t.data.shape}")
            t.data = np.array(arr, dtype=np.float64, copy=True)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {t.name: t.data.copy() for t in self.all_tensors()}


def build_parameters(config: ModelConfig, location_table: np.ndarray | None = None,
                     category_table: np.ndarray | None = None) -> ParameterStore:
    """Construct the store, generating random frozen tables for the
    no-node2vec variant (and requiring learned ones otherwise)."""
    config.validate()
    rng = np.random.default_rng(derive_seed(config.seed, "model-init", config.variant))
    if config.variant == "no-node2vec":
        location_table = random_frozen_table(
            config.n_locations, config.location_dim, rng)
        if config.has_categories:
            category_table = random_frozen_table(
                config.n_categories, config.category_dim, rng)
    if location_table is None:
        raise ValueError("location embedding table required for this variant")
    if config.has_categories and category_table is None:
        raise ValueError("category embedding table required when categories are on")
    return ParameterStore(config, location_table, category_table, rng)


@dataclass
class ForwardOutput:
    log_probs: Tensor
    aux_vector: Tensor
    concat_vector: Tensor
    p_personal: Tensor | None
    p_long: Tensor | None
    p_short: Tensor | None
    attention: np.ndarray | None
    group_vectors: dict[str, Tensor]


def clip_history(query: QuerySample, cap: int) -> QuerySample:
    """Keep only the most recent `cap` history positions."""
    if query.history_locations.size <= cap:
        return query
    return replace(query,
                   history_locations=query.history_locations[-cap:],
                   history_categories=query.history_categories[-cap:],
                   history_slots=query.history_slots[-cap:])


def prepare_query(query: QuerySample, priors, cap: int):
    """Clip history, then compute prior weights on the clipped view so the
    weight vectors line up with the encoder inputs."""
    clipped = clip_history(query, cap)
    return clipped, priors.weights_for(clipped)


class NextPlaceModel:
    def __init__(self, config: ModelConfig, params: ParameterStore):
        config.validate()
        self.config = config
        self.params = params

    # -- building blocks ----------------------------------------------------

    def embed_sequence(self, locations, slots, categories) -> Tensor:
        """Stack per-position embeddings location + time (+ category) into
        a [input_dim, n] matrix."""
        parts = [ad.embed_columns(self.params.location_table, locations),
                 ad.embed_columns(self.params.time_table, slots)]
        if self.config.has_categories:
            parts.append(ad.embed_columns(self.params.category_table, categories))
        return ad.concat(parts, axis=0)

    def encode_history(self, xs: Tensor) -> Tensor:
        """Bidirectional pass: forward states stacked over backward states,
        giving one [2H, n] matrix aligned with input positions."""
        fwd = lstm_sequence(xs, self.params.history_fwd)
        bwd = ad.flip_columns(
            lstm_sequence(ad.flip_columns(xs), self.params.history_bwd))
        return ad.concat([fwd, bwd], axis=0)

    def encode_recent(self, xs: Tensor) -> Tensor:
        return lstm_sequence(xs, self.params.recent_cell)

    def user_vector(self, user_index: int) -> Tensor:
        col = ad.embed_columns(self.params.user_table, [user_index])
        return ad.matmul(col, Tensor([1.0]))  # [D_u, 1] -> [D_u]

    def personalized_preference(self, h_hist: Tensor,
                                user_index: int) -> tuple[Tensor, Tensor]:
        """Attention over history states scored against the user embedding."""
        v_u = self.user_vector(user_index)
        projected = ad.matmul(self.params.attention, h_hist)   # [D_u, n]
        scores = ad.matmul(ad.transpose(projected), v_u)       # [n]
        attn = ad.softmax(scores)
        return ad.matmul(h_hist, attn), attn

    def group_preferences(self, h_hist: Tensor | None, h_recent: Tensor | None,
                          weights: QueryWeights):
        """Prior-weighted sums of encoder states.

        Each prior contributes one weighted sum per sequence; the long- and
        short-term group vectors are the sums over priors.
        """
        labels = ["spatial", "temporal"] + (
            ["activity"] if weights.activity_history is not None else [])
        group: dict[str, Tensor] = {}
        p_long = p_short = None
        if h_hist is not None:
            for label, alpha in zip(labels, weights.history_stack()):
                if alpha.size != h_hist.data.shape[1]:
                    raise ValueError(
                        f"{label} history weights have {alpha.size} entries for "
                        f"{h_hist.data.shape[1]} positions")
                vec = ad.matmul(h_hist, Tensor(alpha))
                group[f"{label}_long"] = vec
                p_long = vec if p_long is None else ad.add(p_long, vec)
        if h_recent is not None:
            for label, alpha in zip(labels, weights.recent_stack()):
                if alpha.size != h_recent.data.shape[1]:
                    raise ValueError(
                        f"{label} recent weights have {alpha.size} entries for "
                        f"{h_recent.data.shape[1]} positions")
                vec = ad.matmul(h_recent, Tensor(alpha))
                group[f"{label}_short"] = vec
                p_short = vec if p_short is None else ad.add(p_short, vec)
        return p_long, p_short, group

    def predict_distribution(self, p_personal, p_long, p_short, user_index):
        """Score every location from the concatenated preference vectors."""
        by_name = {"personal": p_personal, "long": p_long, "short": p_short,
                   "user": self.user_vector(user_index)}
        pieces = []
        for part in self.config.parts:
            if by_name[part] is None:
                raise ValueError(f"variant {self.config.variant!r} needs part {part!r}")
            pieces.append(by_name[part])
        g = ad.concat(pieces)
        log_probs = ad.log_softmax(ad.matmul(self.params.prediction, g))
        aux = ad.matmul(self.params.auxiliary, g)
        return log_probs, aux, g

    # -- whole forward pass ---------------------------------------------------

    def forward(self, query: QuerySample, weights: QueryWeights) -> ForwardOutput:
        query = clip_history(query, self.config.history_cap)
        parts = self.config.parts
        needs_history = "personal" in parts or "long" in parts
        h_hist = None
        if needs_history:
            x_hist = self.embed_sequence(query.history_locations,
                                         query.history_slots,
                                         query.history_categories)
            h_hist = self.encode_history(x_hist)
        h_recent = None
        if "short" in parts:
            x_recent = self.embed_sequence(query.recent_locations,
                                           query.recent_slots,
                                           query.recent_categories)
            h_recent = self.encode_recent(x_recent)

        p_personal, attn = (None, None)
        if "personal" in parts:
            p_personal, attn = self.personalized_preference(h_hist, query.user_index)
        p_long, p_short, group = self.group_preferences(
            h_hist if "long" in parts else None,
            h_recent if "short" in parts else None, weights)
        log_probs, aux, g = self.predict_distribution(
            p_personal, p_long, p_short, query.user_index)
        return ForwardOutput(
            log_probs=log_probs, aux_vector=aux, concat_vector=g,
            p_personal=p_personal, p_long=p_long, p_short=p_short,
            attention=attn.data.copy() if attn is not None else None,
            group_vectors=group)

    def loss(self, output: ForwardOutput, target_location: int) -> Tensor:
        """Negative log-likelihood plus the weighted auxiliary L2 branch."""
        if target_location == UNKNOWN_INDEX:
            raise ValueError("cannot train toward the UNKNOWN location")
        nll = ad.neg(ad.pick(output.log_probs, target_location))
        eps = self.config.effective_aux_weight
        if eps == 0.0:
            return nll
        target_row = Tensor(self.params.location_table.data[target_location])
        gap = ad.sub(output.aux_vector, target_row)
        return ad.add(nll, ad.scale(ad.sum_squares(gap), eps))

    def auxiliary_error(self, output: ForwardOutput, target_location: int) -> float:
        """Squared distance between the auxiliary vector and the frozen
        embedding of the true target, regardless of the loss weight."""
        gap = output.aux_vector.data - self.params.location_table.data[target_location]
        return float(gap @ gap)

    def predict_scores(self, query: QuerySample, weights: QueryWeights) -> np.ndarray:
        """Log-probabilities as a plain array (no tape, evaluation path)."""
        return self.forward(query, weights).log_probs.data
