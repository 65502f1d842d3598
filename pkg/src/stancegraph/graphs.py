"""Graph construction and normalization.

Builds the weighted user-hashtag bipartite graph, the social user graph,
and meta-path similarity user graphs, and normalizes each into the
symmetric propagation operator used by the embedding model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, EmptyChannel, EmptyCorpus, ShapeError
from .ingest import InteractionCounts

LOGGER = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-9

META_PATH_RELATIONS = ("tweet", "retweet", "reply")


@dataclass
class BipartiteGraph:
    """Weighted user-hashtag graph. R rows are usage distributions: row i
    holds user i's interaction counts divided by the user's total."""

    R: sp.csr_matrix

    def __post_init__(self):
        self.R = self.R.tocsr().astype(np.float64)
        self.R.sort_indices()
        n, m = self.R.shape
        if n < 1 or m < 1:
            raise EmptyCorpus("bipartite graph needs at least one user and one hashtag")
        if self.R.nnz and self.R.data.min() < 0:
            raise ShapeError("negative interaction weight")

    @property
    def n_users(self) -> int:
        return self.R.shape[0]

    @property
    def n_hashtags(self) -> int:
        return self.R.shape[1]

    def neighbors(self, u: int) -> np.ndarray:
        return self.R.indices[self.R.indptr[u]:self.R.indptr[u + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """All (user, hashtag) pairs with positive weight, row-major order."""
        coo = self.R.tocoo()
        pairs = np.column_stack([coo.row, coo.col]).astype(np.int64)
        return pairs, coo.data.copy()

    def validate_row_stochastic(self) -> None:
        sums = np.asarray(self.R.sum(axis=1)).ravel()
        active = sums > 0
        if active.any() and np.abs(sums[active] - 1.0).max() > ROW_SUM_TOL:
            raise ShapeError("rows with edges must sum to 1")


@dataclass
class UserGraph:
    """Symmetric nonnegative user-user graph with zero diagonal."""

    W: sp.csr_matrix
    kind: str = "user"

    def __post_init__(self):
        self.W = self.W.tocsr().astype(np.float64)
        self.W.sort_indices()
        n, m = self.W.shape
        if n != m:
            raise ShapeError(f"user graph must be square, got {self.W.shape}")
        if self.W.nnz and self.W.data.min() < 0:
            raise ShapeError("negative edge weight in user graph")

    @property
    def n_users(self) -> int:
        return self.W.shape[0]


@dataclass
class NormalizedAdjacency:
    """Symmetrically normalized operator D^-1/2 A D^-1/2."""

    matrix: sp.csr_matrix

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MetaPathSpec:
    """User -> hashtag -> user meta-path named by its two relations."""

    left: str = "retweet"
    right: str = "tweet"

    def __post_init__(self):
        for name in (self.left, self.right):
            if name not in META_PATH_RELATIONS:
                raise ConfigError(f"unknown meta-path relation {name!r}")


def build_interaction_graph(counts: InteractionCounts) -> BipartiteGraph:
    """Row-normalize the usage counts T into edge weights."""
    T = counts.T.tocsr().astype(np.float64)
    rowsum = np.asarray(T.sum(axis=1)).ravel()
    scale = np.divide(1.0, rowsum, out=np.zeros_like(rowsum), where=rowsum > 0)
    R = sp.diags(scale) @ T
    graph = BipartiteGraph(R=R)
    graph.validate_row_stochastic()
    return graph


def binarize(graph: BipartiteGraph) -> BipartiteGraph:
    """Replace every positive weight with 1 (unweighted-graph reduction)."""
    R = graph.R.copy()
    R.data = np.ones_like(R.data)
    return BipartiteGraph(R=R)


def _symmetric_normalize(A: sp.coo_matrix) -> sp.csr_matrix:
    deg = np.asarray(A.sum(axis=1)).ravel()
    with np.errstate(divide="ignore"):
        dinv = np.power(deg, -0.5)
    dinv[np.isinf(dinv)] = 0.0
    # Scaling COO entries keeps the result exactly symmetric: the factor
    # dinv[r]*dinv[c] is computed identically for (r,c) and (c,r).
    data = dinv[A.row] * dinv[A.col] * A.data
    out = sp.csr_matrix((data, (A.row, A.col)), shape=A.shape)
    out.sort_indices()
    return out


def build_adjacency(graph: BipartiteGraph) -> NormalizedAdjacency:
    """Block adjacency over users then hashtags, symmetrically normalized.

    Isolated nodes keep zero rows: a zero degree maps to a zero scale
    factor instead of a division error.
    """
    A = sp.bmat([[None, graph.R], [graph.R.T, None]], format="coo")
    return NormalizedAdjacency(matrix=_symmetric_normalize(A))


def normalize_user_graph(graph: UserGraph) -> NormalizedAdjacency:
    W = graph.W.tocoo()
    if (W.row == W.col).any():
        raise ShapeError("user graph has diagonal entries")
    return NormalizedAdjacency(matrix=_symmetric_normalize(W))


@dataclass(frozen=True)
class SocialWeights:
    follow: float = 1.0
    mention: float = 1.0
    reply: float = 1.0


def build_social_graph(counts: InteractionCounts, weights: SocialWeights = SocialWeights()) -> UserGraph:
    """Combine mutual-follow, mention, and reply relations into one
    symmetric user graph."""
    if weights.follow == 0.0 and weights.mention == 0.0 and weights.reply == 0.0:
        raise EmptyChannel("all social coefficients are zero")
    if min(weights.follow, weights.mention, weights.reply) < 0:
        raise ConfigError("social coefficients must be nonnegative")
    W = (
        weights.follow * counts.mutual_follow
        + weights.mention * (counts.mention + counts.mention.T)
        + weights.reply * (counts.reply + counts.reply.T)
    )
    W = (W + W.T) * 0.5
    W = sp.csr_matrix(W)
    W.setdiag(0.0)
    W.eliminate_zeros()
    return UserGraph(W=W, kind="social")


def pathsim_scores(M1: sp.csr_matrix, M2: sp.csr_matrix) -> sp.csr_matrix:
    """Meta-path similarity before symmetrization.

    s(i, j) = 2*C[i, j] / (C[i, i] + C[j, j]) with C = M1 @ M2.T; pairs
    whose diagonal mass is zero get similarity 0.
    """
    if M1.shape != M2.shape:
        raise ShapeError(f"relation shapes differ: {M1.shape} vs {M2.shape}")
    C = (M1 @ M2.T).tocoo()
    diag = (M1 @ M2.T).diagonal()
    den = diag[C.row] + diag[C.col]
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.where(den > 0, 2.0 * C.data / np.where(den > 0, den, 1.0), 0.0)
    out = sp.csr_matrix((data, (C.row, C.col)), shape=C.shape)
    out.eliminate_zeros()
    return out


def compute_pathsim(counts: InteractionCounts, spec: MetaPathSpec = MetaPathSpec()) -> UserGraph:
    """PathSim user graph for a user -> hashtag -> user meta-path."""
    S = pathsim_scores(counts.relation(spec.left), counts.relation(spec.right))
    W = (S + S.T) * 0.5
    W = sp.csr_matrix(W)
    W.setdiag(0.0)
    W.eliminate_zeros()
    return UserGraph(W=W, kind=f"pathsim:{spec.left}-{spec.right}")


def sparsify(graph: UserGraph, min_weight: float = 0.01, top_k: int | None = None) -> UserGraph:
    """Drop edges below min_weight, then optionally keep only each node's
    top_k strongest edges. An edge survives the top_k pass if either
    endpoint keeps it, so the result stays symmetric."""
    if min_weight < 0:
        raise ConfigError("min_weight must be nonnegative")
    if top_k is not None and top_k < 1:
        raise ConfigError("top_k must be at least 1")
    W = graph.W.tocoo()
    keep = W.data >= min_weight
    W = sp.csr_matrix((W.data[keep], (W.row[keep], W.col[keep])), shape=W.shape)
    if top_k is not None:
        W.sort_indices()
        kept = set()
        indptr, indices, data = W.indptr, W.indices, W.data
        for i in range(W.shape[0]):
            lo, hi = indptr[i], indptr[i + 1]
            if lo == hi:
                continue
            cols = indices[lo:hi]
            vals = data[lo:hi]
            # Ties break toward the smaller neighbor index.
            order = np.lexsort((cols, -vals))[:top_k]
            for j in cols[order]:
                kept.add((i, int(j)))
        coo = W.tocoo()
        mask = np.array(
            [(int(r), int(c)) in kept or (int(c), int(r)) in kept
             for r, c in zip(coo.row, coo.col)],
            dtype=bool,
        ) if coo.nnz else np.zeros(0, dtype=bool)
        W = sp.csr_matrix((coo.data[mask], (coo.row[mask], coo.col[mask])), shape=W.shape)
    return UserGraph(W=W, kind=graph.kind)


def propagate_once(adj: NormalizedAdjacency, H: np.ndarray) -> np.ndarray:
    if H.shape[0] != adj.size:
        raise ShapeError(f"operator size {adj.size} does not match input rows {H.shape[0]}")
    return adj.matrix @ H


def save_matrix_coo(mat: sp.spmatrix, path) -> None:
    """Text coordinate format: 'rows cols nnz' header then one edge per
    line with 17 significant digits for exact float64 round-trips."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}\n")


def load_matrix_coo(path) -> sp.csr_matrix:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ShapeError(f"bad coo header in {path}")
        n, m, nnz = (int(x) for x in header)
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        data = np.empty(nnz, dtype=np.float64)
        for k in range(nnz):
            parts = fh.readline().split()
            if len(parts) != 3:
                raise ShapeError(f"truncated coo entry {k} in {path}")
            rows[k], cols[k], data[k] = int(parts[0]), int(parts[1]), float(parts[2])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, m))


def save_bipartite(graph: BipartiteGraph, path) -> None:
    save_matrix_coo(graph.R, path)


def load_bipartite(path) -> BipartiteGraph:
    return BipartiteGraph(R=load_matrix_coo(path))


def save_user_graph(graph: UserGraph, path) -> None:
    save_matrix_coo(graph.W, path)


def load_user_graph(path, kind: str = "user") -> UserGraph:
    return UserGraph(W=load_matrix_coo(path), kind=kind)
