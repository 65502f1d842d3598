"""Ranking metrics over embedding scores."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def recall_at_k(top_items, relevant) -> float:
    """Fraction of the relevant items that appear in the recommended list."""
    if not relevant:
        raise ConfigError("recall needs a nonempty relevant set")
    hits = sum(1 for item in top_items if item in relevant)
    return hits / len(relevant)


def ndcg_at_k(top_items, relevant) -> float:
    """Binary-relevance NDCG; the ideal list front-loads all relevant items."""
    if not relevant:
        raise ConfigError("ndcg needs a nonempty relevant set")
    dcg = 0.0
    for pos, item in enumerate(top_items, 1):
        if item in relevant:
            dcg += 1.0 / np.log2(pos + 1)
    ideal = min(len(top_items), len(relevant))
    if len(top_items) == 0:
        return 0.0
    idcg = sum(1.0 / np.log2(pos + 1) for pos in range(1, ideal + 1))
    return dcg / idcg if idcg > 0 else 0.0


def top_k_items(scores: np.ndarray, exclude, k: int) -> np.ndarray:
    """Indices of the k highest scores outside the excluded set.

    Ties break toward the smaller index so rankings are deterministic.
    """
    masked = scores.astype(np.float64, copy=True)
    if len(exclude):
        masked[np.asarray(list(exclude), dtype=np.int64)] = -np.inf
    order = np.argsort(-masked, kind="stable")
    order = order[np.isfinite(masked[order])]
    return order[:k]


def ranking_metrics(
    final_users: np.ndarray,
    final_hashtags: np.ndarray,
    exclude_by_user,
    relevant_by_user: dict[int, set[int]],
    k: int = 20,
) -> tuple[float, float, int]:
    """Mean recall@k and NDCG@k over users with a nonempty relevant set.

    exclude_by_user maps a user to the items removed from the candidate
    pool (their training positives). Users whose pool is empty are skipped.
    """
    recalls = []
    ndcgs = []
    for u in sorted(relevant_by_user):
        relevant = relevant_by_user[u]
        if not relevant:
            continue
        exclude = exclude_by_user(u) if callable(exclude_by_user) else exclude_by_user[u]
        if len(exclude) >= final_hashtags.shape[0]:
            continue
        scores = final_hashtags @ final_users[u]
        top = top_k_items(scores, exclude, k)
        recalls.append(recall_at_k(top, relevant))
        ndcgs.append(ndcg_at_k(top, relevant))
    if not recalls:
        return 0.0, 0.0, 0
    return float(np.mean(recalls)), float(np.mean(ndcgs)), len(recalls)
