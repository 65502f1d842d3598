"""Embedding initialization, propagation, channel mixing, checkpoints."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from stancegraph.errors import ConfigError, RecordError, ShapeError
from stancegraph.graphs import (
    BipartiteGraph,
    UserGraph,
    build_adjacency,
    normalize_user_graph,
)
from stancegraph.model import (
    ChannelSet,
    ModelConfig,
    affinity,
    build_operators,
    combine_channels,
    forward,
    init_embeddings,
    layer_averaged_propagate,
    load_checkpoint,
    load_pretrained_vectors,
    propagate,
    save_checkpoint,
    score_all,
    EmbeddingState,
)

from conftest import random_bipartite, random_user_graph


def swap_adjacency():
    # one user, one hashtag: the operator exchanges the two rows
    return build_adjacency(BipartiteGraph(R=sp.csr_matrix(np.array([[1.0]]))))


# initialization -------------------------------------------------------------

def test_init_is_deterministic():
    cfg = ModelConfig(dim=8)
    a = init_embeddings(5, 4, cfg, seed=99)
    b = init_embeddings(5, 4, cfg, seed=99)
    assert np.array_equal(a.users, b.users)
    assert np.array_equal(a.hashtags, b.hashtags)


def test_init_different_seeds_differ():
    cfg = ModelConfig(dim=8)
    a = init_embeddings(5, 4, cfg, seed=1)
    b = init_embeddings(5, 4, cfg, seed=2)
    assert not np.array_equal(a.users, b.users)


def test_init_xavier_bound():
    # d=4, N=2: user entries live in [-1, 1] since sqrt(6/(2+4)) = 1
    cfg = ModelConfig(dim=4)
    state = init_embeddings(2, 50, cfg, seed=0)
    assert np.abs(state.users).max() <= 1.0
    bound_ht = np.sqrt(6.0 / (50 + 4))
    assert np.abs(state.hashtags).max() <= bound_ht


def test_init_pretrained_rows_copied_exactly():
    cfg = ModelConfig(dim=3, use_pretrained=True)
    v = np.array([0.25, -1.5, 3.0])
    state = init_embeddings(4, 6, cfg, seed=0, pretrained={2: v})
    assert np.array_equal(state.hashtags[2], v)
    # untouched rows still follow the Xavier draw
    assert np.abs(state.hashtags[[0, 1, 3, 4, 5]]).max() <= np.sqrt(6.0 / (6 + 3))


def test_init_pretrained_dim_mismatch():
    cfg = ModelConfig(dim=3, use_pretrained=True)
    with pytest.raises(ShapeError):
        init_embeddings(4, 6, cfg, seed=0, pretrained={0: np.zeros(2)})


def test_load_pretrained_vectors(tmp_path):
    path = tmp_path / "vec.tsv"
    path.write_text("apruebo\t0.5\t1.5\nunknown\t9\t9\n", encoding="utf-8")
    vecs = load_pretrained_vectors(path, ["apruebo", "rechazo"], dim=2)
    assert set(vecs) == {0}
    assert np.array_equal(vecs[0], [0.5, 1.5])


def test_stacked_roundtrip():
    cfg = ModelConfig(dim=2)
    state = init_embeddings(3, 2, cfg, seed=4)
    back = EmbeddingState.from_stacked(state.stacked(), n_users=3, seed=4)
    assert np.array_equal(back.users, state.users)
    assert np.array_equal(back.hashtags, state.hashtags)


# propagation ----------------------------------------------------------------

def test_propagate_zero_layers_is_identity():
    adj = swap_adjacency()
    E0 = np.array([[1.5], [-2.0]])
    layers = propagate(adj, E0, n_layers=0)
    assert len(layers) == 1
    assert np.array_equal(layers[0], E0)
    assert np.array_equal(layer_averaged_propagate(adj, E0, 0), E0)


def test_propagate_single_layer_average():
    # swap operator: H1 = (b, a), average = ((a+b)/2, (a+b)/2)
    adj = swap_adjacency()
    a, b = 3.0, 7.0
    E0 = np.array([[a], [b]])
    out = layer_averaged_propagate(adj, E0, 1)
    assert np.allclose(out, [[(a + b) / 2], [(a + b) / 2]], atol=1e-15)


def test_propagate_zero_operator_keeps_scaled_layer0():
    adj = normalize_user_graph(UserGraph(W=sp.csr_matrix((3, 3))))
    E0 = np.arange(6.0).reshape(3, 2)
    for K in (1, 2, 3):
        out = layer_averaged_propagate(adj, E0, K)
        assert np.allclose(out, E0 / (K + 1), atol=1e-15)


def test_propagate_matches_dense_powers():
    rng = np.random.default_rng(61)
    for _ in range(15):
        g = random_bipartite(rng, int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        adj = build_adjacency(g)
        E0 = rng.standard_normal((adj.size, 3))
        K = int(rng.integers(0, 4))
        dense = adj.matrix.toarray()
        layers = propagate(adj, E0, K)
        for k in range(K + 1):
            want = np.linalg.matrix_power(dense, k) @ E0
            assert np.abs(layers[k] - want).max() <= 1e-10


def test_layer_average_excluding_layer0():
    adj = swap_adjacency()
    E0 = np.array([[2.0], [4.0]])
    # K=1 without the identity term: only H1/(K+1) = (4,2)/2 remains
    out = layer_averaged_propagate(adj, E0, 1, include_layer0=False)
    assert np.allclose(out, [[2.0], [1.0]], atol=1e-15)


def test_propagation_linear_in_e0():
    rng = np.random.default_rng(67)
    g = random_bipartite(rng, 5, 4)
    adj = build_adjacency(g)
    E0 = rng.standard_normal((9, 3))
    for alpha in (2.0, -0.5):
        lhs = layer_averaged_propagate(adj, alpha * E0, 3)
        rhs = alpha * layer_averaged_propagate(adj, E0, 3)
        assert np.abs(lhs - rhs).max() <= 1e-10


def test_propagate_shape_mismatch():
    adj = swap_adjacency()
    with pytest.raises(ShapeError):
        propagate(adj, np.zeros((5, 2)), 1)


# channel combination --------------------------------------------------------

def test_combine_single_channel_is_identity():
    x = np.array([[1.0, 2.0]])
    assert np.array_equal(combine_channels([x]), x)


def test_combine_two_channels_means():
    a = np.array([[1.0, 1.0]])
    b = np.array([[3.0, 3.0]])
    assert np.array_equal(combine_channels([a, b]), [[2.0, 2.0]])


def test_combine_is_commutative():
    rng = np.random.default_rng(71)
    x, y, z = (rng.standard_normal((4, 2)) for _ in range(3))
    forward_order = combine_channels([x, y, z])
    reverse_order = combine_channels([z, y, x])
    assert np.abs(forward_order - reverse_order).max() <= 1e-15


def test_combine_shape_mismatch():
    with pytest.raises(ShapeError):
        combine_channels([np.zeros((2, 2)), np.zeros((3, 2))])


def test_combine_empty_rejected():
    with pytest.raises(ConfigError):
        combine_channels([])


# scoring --------------------------------------------------------------------

def test_affinity_examples():
    assert affinity(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0.0
    assert affinity(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 11.0
    e = np.array([2.0, -3.0])
    assert affinity(e, e) == 13.0


def test_score_all_one_dimensional_case():
    users = np.array([[2.0]])
    tags = np.array([[1.0], [-1.0], [0.0]])
    assert np.array_equal(score_all(users, tags, 0), [2.0, -2.0, 0.0])


def test_score_all_matches_affinity_loop():
    rng = np.random.default_rng(73)
    users = rng.standard_normal((4, 5))
    tags = rng.standard_normal((6, 5))
    for u in range(4):
        scores = score_all(users, tags, u)
        looped = np.array([affinity(users[u], tags[j]) for j in range(6)])
        assert np.abs(scores - looped).max() <= 1e-12


def test_score_all_zero_user():
    users = np.zeros((1, 3))
    tags = np.ones((4, 3))
    assert not score_all(users, tags, 0).any()


# forward pass ---------------------------------------------------------------

def test_forward_without_user_channels_uses_bipartite_only():
    rng = np.random.default_rng(79)
    g = random_bipartite(rng, 4, 3)
    cfg = ModelConfig(dim=2, n_layers=2)
    ops = build_operators(g, None, cfg)
    state = init_embeddings(4, 3, cfg, seed=0)
    out = forward(state.stacked(), ops, cfg)
    full = layer_averaged_propagate(ops.bipartite, state.stacked(), 2)
    assert np.array_equal(out.final_users, full[:4])
    assert np.array_equal(out.final_hashtags, full[4:])


def test_forward_with_social_channel_averages_users():
    rng = np.random.default_rng(83)
    g = random_bipartite(rng, 4, 3)
    social = random_user_graph(rng, 4)
    cfg = ModelConfig(dim=2, n_layers=1, use_social=True)
    ops = build_operators(g, ChannelSet(social=social), cfg)
    state = init_embeddings(4, 3, cfg, seed=1)
    out = forward(state.stacked(), ops, cfg)
    bip = layer_averaged_propagate(ops.bipartite, state.stacked(), 1)
    soc = layer_averaged_propagate(ops.social, state.stacked()[:4], 1)
    assert np.abs(out.final_users - (bip[:4] + soc) / 2).max() <= 1e-15
    # hashtags never mix with user-graph channels
    assert np.array_equal(out.final_hashtags, bip[4:])


def test_forward_missing_channel_rejected():
    rng = np.random.default_rng(89)
    g = random_bipartite(rng, 3, 3)
    cfg = ModelConfig(use_social=True)
    with pytest.raises(ConfigError):
        build_operators(g, None, cfg)


def test_forward_channel_size_mismatch_rejected():
    rng = np.random.default_rng(97)
    g = random_bipartite(rng, 3, 3)
    social = random_user_graph(rng, 4)
    cfg = ModelConfig(use_social=True)
    with pytest.raises(ShapeError):
        build_operators(g, ChannelSet(social=social), cfg)


def test_model_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(dim=0)
    with pytest.raises(ConfigError):
        ModelConfig(n_layers=-1)


# checkpoints ----------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    cfg = ModelConfig(dim=3)
    state = init_embeddings(4, 2, cfg, seed=42)
    users = [f"u{i}" for i in range(4)]
    tags = ["alpha", "beta"]
    path = tmp_path / "ck.bin"
    save_checkpoint(path, state, users, tags)
    back, back_users, back_tags = load_checkpoint(path)
    assert np.array_equal(back.users, state.users)
    assert np.array_equal(back.hashtags, state.hashtags)
    assert back.seed == 42
    assert back_users == users and back_tags == tags


def test_checkpoint_corrupt_magic(tmp_path):
    cfg = ModelConfig(dim=2)
    state = init_embeddings(2, 2, cfg, seed=0)
    path = tmp_path / "ck.bin"
    save_checkpoint(path, state, ["a", "b"], ["x", "y"])
    raw = bytearray(path.read_bytes())
    raw[0] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(RecordError):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    cfg = ModelConfig(dim=2)
    state = init_embeddings(2, 2, cfg, seed=0)
    path = tmp_path / "ck.bin"
    save_checkpoint(path, state, ["a", "b"], ["x", "y"])
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 8])
    with pytest.raises(ShapeError):
        load_checkpoint(path)
