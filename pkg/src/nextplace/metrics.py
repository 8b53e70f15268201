"""Ranking metrics and evaluation reports.

Each test query has exactly one ground-truth next location, so Recall@K and
NDCG@K reduce to per-query functions of the target's rank. A set-form
reading (per-user target sets) is available behind a flag for comparability
with set-based definitions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

K_VALUES = (1, 5, 10)


def rank_target(scores: np.ndarray, target: int, excluded: tuple = ()) -> int:
    """Rank of `target` under descending score, ties broken by ascending
    index; indices in `excluded` never compete."""
    scores = np.asarray(scores)
    if target in excluded:
        raise ValueError(f"target {target} is excluded from ranking")
    s_t = scores[target]
    greater = scores > s_t
    tied_earlier = (scores == s_t) & (np.arange(scores.size) < target)
    ahead = greater | tied_earlier
    for idx in excluded:
        ahead[idx] = False
    ahead[target] = False
    return 1 + int(np.count_nonzero(ahead))


def top_k(scores: np.ndarray, k: int, excluded: tuple = ()) -> np.ndarray:
    """Indices of the k best scores, descending, ties by ascending index."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((np.arange(scores.size), -scores))
    if excluded:
        drop = np.isin(order, np.asarray(excluded, dtype=np.intp))
        order = order[~drop]
    return order[:k]


def recall_at_k(rank: int | None, k: int) -> float:
    if rank is None:
        return 0.0
    return 1.0 if rank <= k else 0.0


def ndcg_at_k(rank: int | None, k: int) -> float:
    """Single relevant item: DCG = 1/log2(rank+1) inside the list, ideal
    DCG = 1."""
    if rank is None or rank > k:
        return 0.0
    return 1.0 / math.log2(rank + 1)


@dataclass
class QueryResult:
    qid: str
    user_index: int
    target: int
    rank: int | None
    top: tuple[int, ...] = ()


def aggregate_metrics(results: list[QueryResult],
                      k_values=K_VALUES) -> tuple[dict, dict]:
    if not results:
        raise ValueError("cannot aggregate metrics over zero queries")
    recall = {k: float(np.mean([recall_at_k(r.rank, k) for r in results]))
              for k in k_values}
    ndcg = {k: float(np.mean([ndcg_at_k(r.rank, k) for r in results]))
            for k in k_values}
    return recall, ndcg


def set_form_metrics(results: list[QueryResult],
                     k_values=K_VALUES) -> tuple[dict, dict]:
    """Set-form reading: each query's top-K list is scored against the set
    of all test targets of the same user, with the ideal DCG computed from
    the size of that set."""
    if not results:
        raise ValueError("cannot aggregate metrics over zero queries")
    targets_by_user: dict[int, set[int]] = {}
    for r in results:
        targets_by_user.setdefault(r.user_index, set()).add(r.target)
    recall, ndcg = {}, {}
    for k in k_values:
        rec_vals, ndcg_vals = [], []
        for r in results:
            relevant = targets_by_user[r.user_index]
            top = list(r.top[:k])
            hits = sum(1 for loc in top if loc in relevant)
            rec_vals.append(hits / min(k, len(relevant)))
            dcg = sum(1.0 / math.log2(i + 2)
                      for i, loc in enumerate(top) if loc in relevant)
            ideal = sum(1.0 / math.log2(j + 2)
                        for j in range(min(k, len(relevant))))
            ndcg_vals.append(dcg / ideal)
        recall[k] = float(np.mean(rec_vals))
        ndcg[k] = float(np.mean(ndcg_vals))
    return recall, ndcg


@dataclass
class EvalReport:
    variant: str
    seed: int
    n_queries: int
    recall: dict[int, float]
    ndcg: dict[int, float]
    per_query: list[QueryResult] = field(default_factory=list)
    runtime_seconds: float = 0.0
    set_recall: dict[int, float] | None = None
    set_ndcg: dict[int, float] | None = None

    def to_json_dict(self) -> dict:
        # runtime deliberately left out: serialized reports must be
        # bit-identical across reruns of the same seed
        out = {
            "variant": self.variant,
            "seed": self.seed,
            "n_queries": self.n_queries,
            "recall": {str(k): v for k, v in self.recall.items()},
            "ndcg": {str(k): v for k, v in self.ndcg.items()},
            "per_query": [
                {"qid": r.qid, "target": r.target, "rank": r.rank}
                for r in self.per_query],
        }
        if self.set_recall is not None:
            out["set_recall"] = {str(k): v for k, v in self.set_recall.items()}
            out["set_ndcg"] = {str(k): v for k, v in self.set_ndcg.items()}
        return out

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def table(self) -> str:
        """Aligned text summary."""
        ks = sorted(self.recall)
        header = f"{'metric':<10}" + "".join(f"@{k:<9}" for k in ks)
        rec = f"{'recall':<10}" + "".join(f"{self.recall[k]:<10.4f}" for k in ks)
        ndcg = f"{'ndcg':<10}" + "".join(f"{self.ndcg[k]:<10.4f}" for k in ks)
        lines = [f"variant={self.variant} seed={self.seed} "
                 f"queries={self.n_queries}", header, rec, ndcg]
        if self.set_recall is not None:
            lines.append(f"{'set-rec':<10}"
                         + "".join(f"{self.set_recall[k]:<10.4f}" for k in ks))
            lines.append(f"{'set-ndcg':<10}"
                         + "".join(f"{self.set_ndcg[k]:<10.4f}" for k in ks))
        return "\n".join(lines)


def build_report(results: list[QueryResult], variant: str, seed: int,
                 k_values=K_VALUES, runtime_seconds: float = 0.0,
                 set_form: bool = False) -> EvalReport:
    recall, ndcg = aggregate_metrics(results, k_values)
    set_recall = set_ndcg = None
    if set_form:
        set_recall, set_ndcg = set_form_metrics(results, k_values)
    return EvalReport(variant=variant, seed=seed, n_queries=len(results),
                      recall=recall, ndcg=ndcg, per_query=results,
                      runtime_seconds=runtime_seconds,
                      set_recall=set_recall, set_ndcg=set_ndcg)


def load_report(path) -> EvalReport:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    per_query = [QueryResult(qid=r["qid"], user_index=-1, target=r["target"],
                             rank=r["rank"]) for r in raw["per_query"]]
    return EvalReport(
        variant=raw["variant"], seed=raw["seed"], n_queries=raw["n_queries"],
        recall={int(k): v for k, v in raw["recall"].items()},
        ndcg={int(k): v for k, v in raw["ndcg"].items()},
        per_query=per_query,
        set_recall=({int(k): v for k, v in raw["set_recall"].items()}
                    if "set_recall" in raw else None),
        set_ndcg=({int(k): v for k, v in raw["set_ndcg"].items()}
                  if "set_ndcg" in raw else None))
