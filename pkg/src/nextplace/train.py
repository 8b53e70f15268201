"""Training loop, evaluation driver, recent-only LSTM baseline, ablations.

Training runs single-worker with gradient accumulation: per-sample tapes,
grads averaged over each accumulation window, global-norm clipped, then one
Adam step. The best checkpoint is chosen by held-out loss, where the
held-out set is every query targeting a user's last training session.
Evaluation fans out over a frozen checkpoint and reduces in query order.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tape, Tensor, backward
from .data import UNKNOWN_INDEX, QuerySample
from .lstm import init_lstm_params, lstm_sequence
from . import autodiff as ad
from .metrics import K_VALUES, EvalReport, QueryResult, build_report, rank_target, top_k
from .model import (ModelConfig, NextPlaceModel, build_parameters,
                    prepare_query)
from .optim import AdamState, adam_step, clip_global_norm
from .priors import PriorSet
from .util import derive_seed

VARIANTS = ("full", "GNet", "PNet", "L", "S", "no-node2vec", "no-aux")


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-5
    clip_norm: float = 5.0
    epochs: int = 30
    accumulation: int = 32
    seed: int = 0
    patience: int = 5
    variant: str = "full"

    def validate(self):
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate and clip_norm must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if self.epochs < 0 or self.accumulation < 1 or self.patience < 1:
            raise ValueError("epochs >= 0, accumulation >= 1, patience >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")


@dataclass
class FitResult:
    best_state: dict[str, np.ndarray]
    loss_curve: list[tuple[int, float, float]]
    best_epoch: int
    stopped_epoch: int


def _session_index(qid: str) -> int:
    return int(qid.rsplit("/", 2)[1])


def holdout_split(queries: list[QuerySample]) -> tuple[list, list]:
    """Queries targeting each user's last training session are held out,
    unless that would leave the user with no training queries at all."""
    last_session: dict[int, int] = {}
    session_counts: dict[int, set[int]] = {}
    for q in queries:
        s = _session_index(q.qid)
        last_session[q.user_index] = max(last_session.get(q.user_index, -1), s)
        session_counts.setdefault(q.user_index, set()).add(s)
    train, holdout = [], []
    for q in queries:
        only_session = len(session_counts[q.user_index]) == 1
        if not only_session and _session_index(q.qid) == last_session[q.user_index]:
            holdout.append(q)
        else:
            train.append(q)
    return train, holdout


def fit_loop(loss_fn, trainables: list[Tensor], train_queries: list,
             holdout_queries: list, config: TrainConfig,
             snapshot, load_state) -> FitResult:
    """Generic accumulation loop shared by the full model and the baseline.

    loss_fn(query) must build the scalar loss tensor from current parameter
    values; snapshot()/load_state(state) capture and restore them.
    """
    config.validate()
    adam = AdamState(learning_rate=config.learning_rate,
                     weight_decay=config.weight_decay)
    best_state = snapshot()
    best_loss = np.inf
    best_epoch = 0
    curve: list[tuple[int, float, float]] = []
    since_best = 0
    stopped = 0

    def mean_loss(queries) -> float:
        vals = []
        for q in queries:
            if q.target_location == UNKNOWN_INDEX:
                continue
            vals.append(float(loss_fn(q).data))
        return float(np.mean(vals)) if vals else np.nan

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng(
            derive_seed(config.seed, "epoch-order", epoch)).permutation(
                len(train_queries))
        epoch_losses = []
        window: list[float] = []
        sums = [np.zeros_like(t.data) for t in trainables]

        def step():
            if not window:
                return
            grads = [s / len(window) for s in sums]
            clip_global_norm(grads, config.clip_norm)
            adam_step(trainables, grads, adam)
            window.clear()
            for s in sums:
                s[:] = 0.0

        for idx in order:
            q = train_queries[idx]
            if q.target_location == UNKNOWN_INDEX:
                continue
            for t in trainables:
                t.zero_grad()
            with Tape() as tape:
                loss = loss_fn(q)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at sample {q.qid}")
            backward(loss, tape)
            for s, t in zip(sums, trainables):
                if t.grad is not None:
                    s += t.grad
            window.append(value)
            epoch_losses.append(value)
            if len(window) == config.accumulation:
                step()
        step()

        train_loss = float(np.mean(epoch_losses)) if epoch_losses else np.nan
        holdout_loss = mean_loss(holdout_queries) if holdout_queries else train_loss
        curve.append((epoch, train_loss, holdout_loss))
        stopped = epoch
        if holdout_loss < best_loss:
            best_loss = holdout_loss
            best_state = snapshot()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    load_state(best_state)
    return FitResult(best_state=best_state, loss_curve=curve,
                     best_epoch=best_epoch, stopped_epoch=stopped)


def fit(model: NextPlaceModel, priors: PriorSet, queries: list[QuerySample],
        config: TrainConfig) -> FitResult:
    """Train the full model; holdout = last train session per user."""
    prepared = {q.qid: prepare_query(q, priors, model.config.history_cap)
                for q in queries}

    def loss_fn(query):
        clipped, weights = prepared[query.qid]
        out = model.forward(clipped, weights)
        return model.loss(out, clipped.target_location)

    train_queries, holdout_queries = holdout_split(queries)
    return fit_loop(loss_fn, model.params.trainables(), train_queries,
                    holdout_queries, config,
                    model.params.snapshot, model.params.load_state)


def evaluate_queries(score_fn, queries: list[QuerySample], variant: str,
                     seed: int, k_values=K_VALUES, workers: int = 1,
                     set_form: bool = False) -> EvalReport:
    """Score every query, rank the target, and aggregate.

    UNKNOWN targets cannot be ranked and count as misses. The UNKNOWN index
    never competes in rankings or top-K lists.
    """
    start = time.perf_counter()
    max_k = max(k_values)
    excluded = (UNKNOWN_INDEX,)

    def eval_one(q: QuerySample) -> QueryResult:
        if q.target_location == UNKNOWN_INDEX:
            return QueryResult(qid=q.qid, user_index=q.user_index,
                               target=q.target_location, rank=None)
        scores = score_fn(q)
        rank = rank_target(scores, q.target_location, excluded)
        top = tuple(int(i) for i in top_k(scores, max_k, excluded))
        return QueryResult(qid=q.qid, user_index=q.user_index,
                           target=q.target_location, rank=rank, top=top)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(eval_one, queries))
    else:
        results = [eval_one(q) for q in queries]
    runtime = time.perf_counter() - start
    return build_report(results, variant=variant, seed=seed,
                        k_values=k_values, runtime_seconds=runtime,
                        set_form=set_form)


def evaluate_model(model: NextPlaceModel, priors: PriorSet,
                   queries: list[QuerySample], k_values=K_VALUES,
                   workers: int = 1, set_form: bool = False) -> EvalReport:
    def score_fn(q):
        clipped, weights = prepare_query(q, priors, model.config.history_cap)
        return model.predict_scores(clipped, weights)

    return evaluate_queries(score_fn, queries, variant=model.config.variant,
                            seed=model.config.seed, k_values=k_values,
                            workers=workers, set_form=set_form)


def evaluate_markov(markov, queries: list[QuerySample], k_values=K_VALUES,
                    workers: int = 1, set_form: bool = False) -> EvalReport:
    return evaluate_queries(markov.predict, queries, variant="markov",
                            seed=0, k_values=k_values, workers=workers,
                            set_form=set_form)


# -- recent-only LSTM baseline ------------------------------------------------


class BaselineParams:
    """Recent-sequence LSTM over the same multi-modal embeddings, with a
    linear head; no history encoder, priors, attention, or aux branch."""

    def __init__(self, config: ModelConfig, location_table: np.ndarray,
                 category_table: np.ndarray | None):
        config.validate()
        self.config = config
        rng = np.random.default_rng(derive_seed(config.seed, "baseline-init"))
        bound = 1.0 / np.sqrt(config.hidden)
        loc = np.array(location_table, dtype=np.float64, copy=True)
        loc[UNKNOWN_INDEX] = 0.0
        self.location_table = Tensor(loc, name="location_table")
        self.category_table = None
        if config.has_categories:
            cat = np.array(category_table, dtype=np.float64, copy=True)
            cat[UNKNOWN_INDEX] = 0.0
            self.category_table = Tensor(cat, name="category_table")
        self.time_table = Tensor(
            rng.uniform(-bound, bound, size=(48, config.time_dim)),
            requires_grad=True, name="time_table")
        self.cell = init_lstm_params(config.input_dim, config.hidden, rng,
                                     name="recent")
        # zero head: the untrained baseline scores every location equally
        self.head = Tensor(np.zeros((config.n_locations, config.hidden)),
                           requires_grad=True, name="head")

    def trainables(self) -> list[Tensor]:
        return [self.time_table, *self.cell.tensors(), self.head]

    def all_tensors(self) -> list[Tensor]:
        frozen = [self.location_table]
        if self.category_table is not None:
            frozen.append(self.category_table)
        return frozen + self.trainables()

    def state_entries(self):
        return [(t.name, t.data) for t in self.all_tensors()]

    def expected_shapes(self):
        return {t.name: t.data.shape for t in self.all_tensors()}

    def snapshot(self):
        return {t.name: t.data.copy() for t in self.all_tensors()}

    def load_state(self, state):
        for t in self.all_tensors():
            arr = state[t.name]
            if arr.shape != t.data.shape:
                raise ValueError(f"state shape {arr.shape} does not match "
                                 f"parameter {t.name} of shape {t.data.shape}")
            t.data = np.array(arr, dtype=np.float64, copy=True)


class RecentLstmBaseline:
    def __init__(self, config: ModelConfig, params: BaselineParams):
        self.config = config
        self.params = params

    def log_probs(self, query: QuerySample) -> Tensor:
        p = self.params
        parts = [ad.embed_columns(p.location_table, query.recent_locations),
                 ad.embed_columns(p.time_table, query.recent_slots)]
        if self.config.has_categories:
            parts.append(ad.embed_columns(p.category_table,
                                          query.recent_categories))
        xs = ad.concat(parts, axis=0)
        hs = lstm_sequence(xs, p.cell)
        last = ad.matmul(hs, Tensor(
            np.eye(hs.data.shape[1])[:, -1]))  # [H, m] -> last column
        return ad.log_softmax(ad.matmul(p.head, last))

    def loss(self, query: QuerySample) -> Tensor:
        if query.target_location == UNKNOWN_INDEX:
            raise ValueError("cannot train toward the UNKNOWN location")
        return ad.neg(ad.pick(self.log_probs(query), query.target_location))

    def predict_scores(self, query: QuerySample) -> np.ndarray:
        return self.log_probs(query).data


def fit_baseline(baseline: RecentLstmBaseline, queries: list[QuerySample],
                 config: TrainConfig) -> FitResult:
    train_queries, holdout_queries = holdout_split(queries)
    return fit_loop(baseline.loss, baseline.params.trainables(),
                    train_queries, holdout_queries, config,
                    baseline.params.snapshot, baseline.params.load_state)


def evaluate_baseline(baseline: RecentLstmBaseline,
                      queries: list[QuerySample], k_values=K_VALUES,
                      workers: int = 1, set_form: bool = False) -> EvalReport:
    return evaluate_queries(baseline.predict_scores, queries,
                            variant="lstm-baseline",
                            seed=baseline.config.seed, k_values=k_values,
                            workers=workers, set_form=set_form)


def run_ablation(variant: str, model_config: ModelConfig, priors: PriorSet,
                 train_queries: list[QuerySample],
                 test_queries: list[QuerySample], train_config: TrainConfig,
                 location_table: np.ndarray | None = None,
                 category_table: np.ndarray | None = None,
                 workers: int = 1) -> tuple[NextPlaceModel, FitResult, EvalReport]:
    """Train and evaluate one variant end to end."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    config = replace(model_config, variant=variant)
    params = build_parameters(config, location_table, category_table)
    model = NextPlaceModel(config, params)
    result = fit(model, priors, train_queries,
                 replace(train_config, variant=variant))
    report = evaluate_model(model, priors, test_queries, workers=workers)
    return model, result, report
