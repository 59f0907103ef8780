"""Full-ranking top-K evaluation: Recall@K, NDCG@K, and the
interaction-count group breakdown.

Every test user is ranked against the whole item catalog (training
positives removed), scores are dot products of final embeddings, and ties
break by ascending item id.
"""

from dataclasses import dataclass

import numpy as np

from .graph import DatasetSplit, MultiplexBipartiteGraph

SPARSITY_BUCKETS = ((0, 4), (4, 5), (5, 6), (6, 7), (7, 10), (10, 60), (60, None))


def rank_items(e_final: np.ndarray, num_users: int, user: int,
               exclude=()) -> np.ndarray:
    """All items ordered by descending score (ascending id on ties),
    with excluded items removed. Returns global item indices."""
    items = np.arange(num_users, e_final.shape[0])
    scores = e_final[items] @ e_final[user]
    if len(exclude):
        keep = ~np.isin(items, np.asarray(list(exclude)))
        items, scores = items[keep], scores[keep]
    order = np.lexsort((items, -scores))
    return items[order]


def _top_k(scores: np.ndarray, k: int, excluded: np.ndarray) -> np.ndarray:
    """Exact top-k local indices by (-score, index) with exclusions removed."""
    s = scores.copy()
    s[excluded] = -np.inf
    n_valid = s.shape[0] - int(excluded.sum())
    k = min(k, n_valid)
    if k <= 0:
        return np.empty(0, dtype=np.int64)
    if k < s.shape[0]:
        part = np.argpartition(-s, k - 1)[:k]
        thr = s[part].min()
        cand = np.flatnonzero(s >= thr)
    else:
        cand = np.arange(s.shape[0])
    cand = cand[~excluded[cand]]
    return cand[np.lexsort((cand, -s[cand]))][:k]


def recall_at_k(ranked, test_items, k: int) -> float:
    """|top-k intersect test| / |test| (denominator never capped at k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(test_items)
    if not test:
        raise ValueError("empty test set")
    hits = sum(1 for it in list(ranked)[:k] if it in test)
    return hits / len(test)


_LOG2 = np.log(2.0)


def ndcg_at_k(ranked, test_items, k: int) -> float:
    """Binary-gain DCG@k over ideal DCG at min(|test|, k) positions."""
    if k < 1:
        raise ValueError("k must be >= 1")
    test = set(test_items)
    if not test:
        raise ValueError("empty test set")
    dcg = 0.0
    for rank, item in enumerate(list(ranked)[:k], start=1):
        if item in test:
            dcg += _LOG2 / np.log(rank + 1.0)
    ideal = sum(_LOG2 / np.log(r + 1.0) for r in range(1, min(len(test), k) + 1))
    return dcg / ideal


@dataclass
class RankingResult:
    """Per-user top lists and metrics plus the per-K aggregates."""

    users: np.ndarray                 # evaluated users (>= 1 test item)
    top_items: list                   # per user: global item ids, top max(ks)
    per_user: dict                    # k -> {"recall": array, "ndcg": array}
    aggregates: dict                  # k -> {"recall": float, "ndcg": float}
    ks: tuple

    def recall(self, k: int) -> float:
        return self.aggregates[k]["recall"]

    def ndcg(self, k: int) -> float:
        return self.aggregates[k]["ndcg"]


def evaluate(e_final: np.ndarray, graph: MultiplexBipartiteGraph,
             split: DatasetSplit, ks=(5, 10, 20, 40),
             chunk: int = 512) -> RankingResult:
    """Rank the full catalog for every user with test interactions.

    Training positives of the target relation are excluded from each
    user's candidate list; users without test items are skipped.
    """
    ks = tuple(sorted(ks))
    kmax = ks[-1]
    num_users = graph.num_users
    tu, tv = split.test_edges
    test_of = {}
    for u, v in zip(tu, tv):
        test_of.setdefault(int(u), []).append(int(v))
    su, sv = split.train_pairs(graph.schema.target)
    train_of = {}
    for u, v in zip(su, sv):
        train_of.setdefault(int(u), []).append(int(v))

    users = np.asarray(sorted(test_of.keys()), dtype=np.int64)
    user_emb = e_final[:num_users]
    item_emb = e_final[num_users:]
    top_lists = []
    per_user = {k: {"recall": np.zeros(len(users)), "ndcg": np.zeros(len(users))}
                for k in ks}

    for start in range(0, len(users), chunk):
        batch = users[start:start + chunk]
        scores = user_emb[batch] @ item_emb.T
        for row, u in enumerate(batch):
            excluded = np.zeros(item_emb.shape[0], dtype=bool)
            for v in train_of.get(int(u), ()):
                excluded[v - num_users] = True
            top_local = _top_k(scores[row], kmax, excluded)
            top_global = top_local + num_users
            top_lists.append(top_global)
            test = test_of[int(u)]
            for k in ks:
                i = start + row
                per_user[k]["recall"][i] = recall_at_k(top_global, test, k)
                per_user[k]["ndcg"][i] = ndcg_at_k(top_global, test, k)

    aggregates = {k: {"recall": float(per_user[k]["recall"].mean()) if len(users) else 0.0,
                      "ndcg": float(per_user[k]["ndcg"].mean()) if len(users) else 0.0}
                  for k in ks}
    return RankingResult(users=users, top_items=top_lists, per_user=per_user,
                         aggregates=aggregates, ks=ks)


def _bucket_label(lo, hi) -> str:
    return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"


def sparsity_groups(result: RankingResult, graph: MultiplexBipartiteGraph,
                    split: DatasetSplit, k: int = 10) -> dict:
    """Mean metrics per user group, bucketed by the user's number of
    training interactions summed over every relation.

    The six standard buckets plus an explicit [60,inf) overflow so the
    group counts always partition the evaluated users.
    """
    if k not in result.per_user:
        k = result.ks[0]
    counts = np.zeros(graph.num_users, dtype=np.int64)
    for r in graph.schema.relations:
        u, _ = split.train_pairs(r)
        counts += np.bincount(u, minlength=graph.num_users)

    groups = {}
    for lo, hi in SPARSITY_BUCKETS:
        label = _bucket_label(lo, hi)
        if hi is None:
            sel = counts[result.users] >= lo
        else:
            sel = (counts[result.users] >= lo) & (counts[result.users] < hi)
        n = int(sel.sum())
        entry = {"users": n, "recall": None, "ndcg": None}
        if n:
            entry["recall"] = float(result.per_user[k]["recall"][sel].mean())
            entry["ndcg"] = float(result.per_user[k]["ndcg"][sel].mean())
        groups[label] = entry
    return groups
