"""Embedding model: initialization, propagation, channel combination.

The model is linear in the initial embeddings: each channel applies an
average of powers of its normalized adjacency, user embeddings are averaged
across channels, and affinity is an inner product.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RecordError, ShapeError
from .graphs import (
    BipartiteGraph,
    NormalizedAdjacency,
    UserGraph,
    build_adjacency,
    normalize_user_graph,
)

LOGGER = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SGEMB\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 16
    n_layers: int = 3
    use_social: bool = False
    use_pathsim: bool = False
    use_pretrained: bool = False
    # The layer average includes the initial embeddings by default; turning
    # this off keeps the same divisor but drops the k=0 term.
    include_layer0: bool = True

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be at least 1")
        if self.n_layers < 0:
            raise ConfigError("n_layers must be nonnegative")


@dataclass
class EmbeddingState:
    users: np.ndarray  # (n_users, dim)
    hashtags: np.ndarray  # (n_hashtags, dim)
    seed: int = 0

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.users, self.hashtags], axis=0)

    @staticmethod
    def from_stacked(stacked: np.ndarray, n_users: int, seed: int = 0) -> "EmbeddingState":
        return EmbeddingState(
            users=stacked[:n_users].copy(),
            hashtags=stacked[n_users:].copy(),
            seed=seed,
        )


@dataclass
class ChannelSet:
    """Optional side channels next to the bipartite graph."""

    social: UserGraph | None = None
    pathsim: UserGraph | None = None
    pretrained: dict[int, np.ndarray] | None = None


def init_embeddings(
    n_users: int,
    n_hashtags: int,
    cfg: ModelConfig,
    seed: int,
    pretrained: dict[int, np.ndarray] | None = None,
) -> EmbeddingState:
    """Xavier-uniform initialization; bounds depend on each side's count.

    Pretrained hashtag vectors overwrite their rows after the draw, so the
    random stream is independent of which rows are pinned.
    """
    rng = np.random.default_rng(seed)
    bound_u = np.sqrt(6.0 / (n_users + cfg.dim))
    users = rng.uniform(-bound_u, bound_u, size=(n_users, cfg.dim))
    bound_h = np.sqrt(6.0 / (n_hashtags + cfg.dim))
    hashtags = rng.uniform(-bound_h, bound_h, size=(n_hashtags, cfg.dim))
    if cfg.use_pretrained:
        if pretrained is None:
            raise ConfigError("use_pretrained is set but no vectors were given")
        for idx, vec in pretrained.items():
            vec = np.asarray(vec, dtype=np.float64)
            if not (0 <= idx < n_hashtags):
                raise ShapeError(f"pretrained row {idx} out of range")
            if vec.shape != (cfg.dim,):
                raise ShapeError(
                    f"pretrained vector for row {idx} has shape {vec.shape}, want ({cfg.dim},)"
                )
            hashtags[idx] = vec
    return EmbeddingState(users=users, hashtags=hashtags, seed=seed)


def load_pretrained_vectors(path, hashtags: list[str], dim: int) -> dict[int, np.ndarray]:
    """Read whitespace-separated 'hashtag v1 .. vd' lines; tags absent from
    the corpus are skipped with a warning."""
    index = {h: j for j, h in enumerate(hashtags)}
    out: dict[int, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            tag, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ShapeError(
                    f"line {line_no}: expected {dim} components, got {len(values)}"
                )
            try:
                vec = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise RecordError(f"bad float: {exc}", line_no) from exc
            if tag not in index:
                LOGGER.warning("pretrained vector for unknown hashtag %r skipped", tag)
                continue
            out[index[tag]] = vec
    return out


def propagate(adj: NormalizedAdjacency, E0: np.ndarray, n_layers: int) -> list[np.ndarray]:
    """All layer outputs H^0 .. H^K of repeated operator application."""
    if E0.shape[0] != adj.size:
        raise ShapeError(f"embedding rows {E0.shape[0]} do not match operator size {adj.size}")
    layers = [E0]
    H = E0
    for _ in range(n_layers):
        H = adj.matrix @ H
        layers.append(H)
    return layers


def layer_averaged_propagate(
    adj: NormalizedAdjacency, X: np.ndarray, n_layers: int, include_layer0: bool = True
) -> np.ndarray:
    """Average of layer outputs; the divisor is always n_layers + 1."""
    if X.shape[0] != adj.size:
        raise ShapeError(f"embedding rows {X.shape[0]} do not match operator size {adj.size}")
    acc = X.copy() if include_layer0 else np.zeros_like(X)
    H = X
    for _ in range(n_layers):
        H = adj.matrix @ H
        acc += H
    return acc / (n_layers + 1)


def combine_channels(user_embeddings: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of per-channel user embeddings."""
    if not user_embeddings:
        raise ConfigError("no channels to combine")
    shape = user_embeddings[0].shape
    for e in user_embeddings[1:]:
        if e.shape != shape:
            raise ShapeError("channel embedding shapes differ")
    return sum(user_embeddings) / len(user_embeddings)


@dataclass
class ChannelOperators:
    """Normalized operators for every enabled channel."""

    bipartite: NormalizedAdjacency
    n_users: int
    social: NormalizedAdjacency | None = None
    pathsim: NormalizedAdjacency | None = None

    def user_channels(self) -> list[NormalizedAdjacency]:
        return [op for op in (self.social, self.pathsim) if op is not None]


def build_operators(
    graph: BipartiteGraph, channels: ChannelSet | None, cfg: ModelConfig
) -> ChannelOperators:
    social = pathsim = None
    if cfg.use_social:
        if channels is None or channels.social is None:
            raise ConfigError("use_social is set but no social graph was given")
        if channels.social.n_users != graph.n_users:
            raise ShapeError("social graph size does not match user count")
        social = normalize_user_graph(channels.social)
    if cfg.use_pathsim:
        if channels is None or channels.pathsim is None:
            raise ConfigError("use_pathsim is set but no meta-path graph was given")
        if channels.pathsim.n_users != graph.n_users:
            raise ShapeError("meta-path graph size does not match user count")
        pathsim = normalize_user_graph(channels.pathsim)
    return ChannelOperators(
        bipartite=build_adjacency(graph),
        n_users=graph.n_users,
        social=social,
        pathsim=pathsim,
    )


@dataclass
class PropagationOutput:
    final_users: np.ndarray
    final_hashtags: np.ndarray
    per_channel: dict[str, np.ndarray] = field(default_factory=dict)


def forward(stacked: np.ndarray, ops: ChannelOperators, cfg: ModelConfig) -> PropagationOutput:
    """Run every enabled channel and average the user sides.

    Hashtag embeddings come from the bipartite channel alone; user-user
    channels have no hashtag nodes.
    """
    n = ops.n_users
    bip = layer_averaged_propagate(ops.bipartite, stacked, cfg.n_layers, cfg.include_layer0)
    per_channel = {"bipartite": bip}
    user_parts = [bip[:n]]
    if ops.social is not None:
        su = layer_averaged_propagate(ops.social, stacked[:n], cfg.n_layers, cfg.include_layer0)
        per_channel["social"] = su
        user_parts.append(su)
    if ops.pathsim is not None:
        pu = layer_averaged_propagate(ops.pathsim, stacked[:n], cfg.n_layers, cfg.include_layer0)
        per_channel["pathsim"] = pu
        user_parts.append(pu)
    return PropagationOutput(
        final_users=combine_channels(user_parts),
        final_hashtags=bip[n:],
        per_channel=per_channel,
    )


def affinity(user_vec: np.ndarray, hashtag_vec: np.ndarray) -> float:
    return float(np.dot(user_vec, hashtag_vec))


def score_all(final_users: np.ndarray, final_hashtags: np.ndarray, u: int) -> np.ndarray:
    """Affinity of user u to every hashtag."""
    return final_hashtags @ final_users[u]


def save_checkpoint(path, state: EmbeddingState, users: list[str], hashtags: list[str]) -> None:
    """Binary embedding dump plus a text index mapping rows to ids."""
    n, d = state.users.shape
    m = state.hashtags.shape[0]
    if state.hashtags.shape[1] != d:
        raise ShapeError("user and hashtag embedding widths differ")
    if len(users) != n or len(hashtags) != m:
        raise ShapeError("id lists do not match embedding shapes")
    header = CHECKPOINT_MAGIC + struct.pack("<IQQQq", CHECKPOINT_VERSION, n, m, d, state.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.users, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.hashtags, dtype="<f8").tobytes())
    with open(str(path) + ".idx", "w", encoding="utf-8") as fh:
        for uid in users:
            fh.write(f"u\t{uid}\n")
        for tag in hashtags:
            fh.write(f"h\t{tag}\n")


def load_checkpoint(path) -> tuple[EmbeddingState, list[str], list[str]]:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic = blob[: len(CHECKPOINT_MAGIC)]
    if magic != CHECKPOINT_MAGIC:
        raise RecordError("not an embedding checkpoint (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    version, n, m, d, seed = struct.unpack_from("<IQQQq", blob, offset)
    if version != CHECKPOINT_VERSION:
        raise RecordError(f"unsupported checkpoint version {version}")
    offset += struct.calcsize("<IQQQq")
    need = offset + (n + m) * d * 8
    if len(blob) != need:
        raise ShapeError(f"checkpoint size {len(blob)} does not match header ({need})")
    flat = np.frombuffer(blob, dtype="<f8", offset=offset)
    users_mat = flat[: n * d].reshape(n, d).astype(np.float64)
    tags_mat = flat[n * d:].reshape(m, d).astype(np.float64)

    user_ids: list[str] = []
    tag_ids: list[str] = []
    with open(str(path) + ".idx", "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            kind, _, name = line.partition("\t")
            if kind == "u":
                user_ids.append(name)
            elif kind == "h":
                tag_ids.append(name)
            else:
                raise RecordError(f"bad index row {line!r}", line_no)
    if len(user_ids) != n or len(tag_ids) != m:
        raise ShapeError("index row counts do not match checkpoint header")
    state = EmbeddingState(users=users_mat, hashtags=tags_mat, seed=int(seed))
    return state, user_ids, tag_ids
