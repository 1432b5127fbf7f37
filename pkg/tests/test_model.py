"""
Tests per il forward pass: encoder, fusione, decoder, loss e score
"""
import numpy as np
import pytest

from conftest import make_network, random_network
from middleware.errors import ShapeMismatchError
from models import EncoderMode, FusionMode, HyperParams
from services.graph_core import SparseMatrix, binary_adjacency, normalize, union_adjacency
from services.model import (
    ModelParams,
    anomaly_scores,
    decode_attributes,
    decode_structure,
    encode_view,
    forward,
    fuse,
    init_params,
    prepare,
    run_forward,
    structure_row_errors,
)


def _params_1d(enc, attn_W=1.0, attn_b=0.0, attn_q=1.0, dec=1.0, K=1):
    return ModelParams(
        enc_weights=[[np.array([[enc]])] for _ in range(K)],
        attn_W=np.array([[attn_W]]),
        attn_b=np.array([attn_b]),
        attn_q=np.array([attn_q]),
        dec_W=np.array([[dec]]),
    )


def _hp(**overrides):
    values = dict(n_views=1, filter_order=1, embedding_dim=1, attention_dim=1)
    values.update(overrides)
    return HyperParams(**values)


# ==================== Encoder ====================

def test_encode_single_node():
    network = make_network({"v": []}, [[1.0]])
    for L in (1, 2, 5):
        Z = encode_view(network, 0, _params_1d(2.0), _hp(filter_order=L))
        assert Z.tolist() == [[2.0]]


def test_encode_complete_pair_smooths_to_mean():
    network = make_network({"v": [(0, 1)]}, [[1.0], [3.0]])
    Z = encode_view(network, 0, _params_1d(1.0), _hp())
    assert np.allclose(Z, [[2.0], [2.0]], atol=1e-15)


def test_simplified_propagation_matches_dense_oracle():
    network = random_network(seed=11, n=8, K=1, d=3)
    hp = HyperParams(n_views=1, filter_order=3, embedding_dim=4, attention_dim=2)
    prepared = prepare(network, hp)
    A = network.views[0].normalized.toarray()
    expected = A @ (A @ (A @ network.attributes))
    assert np.allclose(prepared.propagated[0], expected, atol=1e-12)


def test_simplified_and_multilayer_agree_for_one_layer():
    network = random_network(seed=4, n=7, K=2, d=3)
    simplified = HyperParams(n_views=2, filter_order=1, embedding_dim=4, attention_dim=3)
    multilayer = simplified.model_copy(update={"encoder_mode": EncoderMode.MULTILAYER})
    params = init_params(3, simplified)
    for k in range(2):
        assert np.allclose(encode_view(network, k, params, simplified),
                           encode_view(network, k, params, multilayer), atol=1e-12)


def test_multilayer_has_one_weight_per_layer():
    hp = HyperParams(n_views=2, filter_order=3, embedding_dim=5, encoder_mode=EncoderMode.MULTILAYER)
    params = init_params(4, hp)
    assert [w.shape for w in params.enc_weights[0]] == [(4, 5), (5, 5), (5, 5)]


def test_constant_attribute_column_stays_constant():
    """Sul grafo regolare connesso il vettore costante è autovettore di Ã"""
    n = 6
    cycle = [(i, (i + 1) % n) for i in range(n)]
    network = make_network({"v": cycle}, np.column_stack([np.full(n, 2.5), np.arange(n)]))
    propagated = prepare(network, HyperParams(n_views=1, filter_order=3)).propagated[0]
    assert np.allclose(propagated[:, 0], 2.5, atol=1e-9)


# ==================== Fusion ====================

def test_identical_views_get_equal_weights():
    Z = np.random.default_rng(0).standard_normal((5, 3))
    hp = HyperParams(n_views=3, embedding_dim=3, attention_dim=2)
    params = init_params(4, hp)
    fused, alpha = fuse([Z, Z, Z], params, hp)
    assert np.allclose(alpha, 1 / 3, atol=1e-12)
    assert np.allclose(fused, Z, atol=1e-12)


def test_single_view_fusion():
    Z = np.random.default_rng(1).standard_normal((4, 2))
    hp = HyperParams(n_views=1, embedding_dim=2, attention_dim=2)
    fused, alpha = fuse([Z], init_params(3, hp), hp)
    assert alpha.tolist() == [1.0]
    assert np.array_equal(fused, Z)


def test_attention_weights_hand_evaluated():
    Z1 = np.array([[0.5], [1.5]])
    Z2 = np.array([[-1.0], [2.0]])
    fused, alpha = fuse([Z1, Z2], _params_1d(1.0, K=2), _hp(n_views=2))
    e = np.array([np.tanh(Z1).mean(), np.tanh(Z2).mean()])
    expected = np.exp(e) / np.exp(e).sum()
    assert np.allclose(alpha, expected, atol=1e-12)
    assert np.allclose(fused, expected[0] * Z1 + expected[1] * Z2, atol=1e-12)


def test_average_fusion():
    Z1, Z2 = np.ones((3, 2)), np.zeros((3, 2))
    hp = HyperParams(n_views=2, embedding_dim=2, attention_dim=2, fusion_mode=FusionMode.AVERAGE)
    fused, alpha = fuse([Z1, Z2], init_params(2, hp), hp)
    assert alpha.tolist() == [0.5, 0.5]
    assert np.allclose(fused, 0.5)


def test_view_permutation_permutes_weights():
    rng = np.random.default_rng(2)
    Zs = [rng.standard_normal((6, 3)) for _ in range(3)]
    hp = HyperParams(n_views=3, embedding_dim=3, attention_dim=4)
    params = init_params(2, hp)
    fused, alpha = fuse(Zs, params, hp)
    fused_perm, alpha_perm = fuse([Zs[2], Zs[0], Zs[1]], params, hp)
    assert np.allclose(alpha_perm, alpha[[2, 0, 1]], atol=1e-12)
    assert np.allclose(fused_perm, fused, atol=1e-12)


def test_fusion_shape_mismatch():
    hp = HyperParams(n_views=2, embedding_dim=2, attention_dim=2)
    with pytest.raises(ShapeMismatchError):
        fuse([np.ones((3, 2)), np.ones((4, 2))], init_params(2, hp), hp)


# ==================== Decoders ====================

def test_structure_loss_zero_embeddings():
    n = 5
    empty = binary_adjacency([], [], n)
    assert decode_structure(np.zeros((n, 2)), empty) == pytest.approx(0.5 * n * n, abs=1e-12)


def test_structure_loss_two_nodes_hand_evaluated():
    Z = np.array([[10.0], [10.0]])
    A = binary_adjacency([0], [1], 2)
    s = 1.0 / (1.0 + np.exp(-30.0))   # logit 100 oltre il clamp
    expected = 2 * (1 - s) + 2 * s
    assert decode_structure(Z, A) == pytest.approx(expected, abs=1e-12)


def test_blockwise_structure_loss_equals_dense():
    rng = np.random.default_rng(3)
    for n in (1, 2, 7, 20, 33, 64):
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.3]
        A = binary_adjacency([e[0] for e in edges], [e[1] for e in edges], n)
        Z = rng.standard_normal((n, 3))
        dense = np.abs(1 / (1 + np.exp(-(Z @ Z.T))) - A.toarray())
        for block in (1, 5, 256):
            assert decode_structure(Z, A, block) == pytest.approx(dense.sum(), abs=1e-9)
            assert np.allclose(structure_row_errors(Z, A, block), dense.sum(axis=1), atol=1e-9)


def test_structure_dimension_mismatch():
    with pytest.raises(ShapeMismatchError):
        decode_structure(np.zeros((3, 2)), binary_adjacency([], [], 4))


def test_decode_attributes_relu_clips():
    X_hat = decode_attributes(np.array([[1.0]]), SparseMatrix.identity(1), _params_1d(1.0, dec=-2.0))
    assert X_hat.tolist() == [[0.0]]


def test_decode_attributes_identity_filter():
    X = np.array([[1.0, -2.0], [0.5, 3.0]])
    params = ModelParams(enc_weights=[[np.eye(2)]], attn_W=np.eye(2), attn_b=np.zeros(2),
                         attn_q=np.ones(2), dec_W=np.eye(2))
    X_hat = decode_attributes(X, SparseMatrix.identity(2), params)
    assert np.array_equal(X_hat, np.maximum(X, 0))


def test_decode_attributes_matches_dense_oracle():
    network = random_network(seed=8, n=10, K=2, d=4)
    union = normalize(union_adjacency(network))
    rng = np.random.default_rng(8)
    fused = rng.standard_normal((10, 3))
    hp = HyperParams(n_views=2, embedding_dim=3, attention_dim=2)
    params = init_params(4, hp)
    expected = np.maximum(union.toarray() @ fused @ params.dec_W, 0)
    assert np.allclose(decode_attributes(fused, union, params, hp), expected, atol=1e-12)


# ==================== Forward and Scores ====================

def _straight_line_loss(network, params, hp):
    """Reimplementazione densa indipendente della loss congiunta"""
    n = network.n
    X = network.attributes

    def normalized(A):
        looped = A + np.eye(n)
        d = looped.sum(axis=1)
        return looped / np.sqrt(np.outer(d, d))

    adjacencies = [view.adjacency.toarray() for view in network.views]
    Zs = []
    for k, A in enumerate(adjacencies):
        P = X
        for _ in range(hp.filter_order):
            P = normalized(A) @ P
        Zs.append(np.maximum(P @ params.enc_weights[k][0], 0))

    e = np.array([np.mean(np.tanh(Z @ params.attn_W + params.attn_b) @ params.attn_q) for Z in Zs])
    alpha = np.exp(e - e.max()) / np.exp(e - e.max()).sum()
    fused = sum(a * Z for a, Z in zip(alpha, Zs))
    union = (sum(adjacencies) > 0).astype(float)
    X_hat = np.maximum(normalized(union) @ fused @ params.dec_W, 0)

    structure = [np.abs(1 / (1 + np.exp(-(Z @ Z.T))) - A).sum() for Z, A in zip(Zs, adjacencies)]
    attribute = ((X_hat - X) ** 2).sum()
    return hp.epsilon * np.mean(structure) + (1 - hp.epsilon) * attribute


def test_forward_matches_straight_line_oracle():
    for seed in range(5):
        network = random_network(seed=seed, n=6, K=2, d=3)
        hp = HyperParams(n_views=2, filter_order=3, embedding_dim=4, attention_dim=3, seed=seed)
        params = init_params(3, hp)
        outputs = forward(network, params, hp)
        assert outputs.loss_total == pytest.approx(_straight_line_loss(network, params, hp), abs=1e-9)


def test_loss_total_decomposition(small_network, small_hp):
    outputs = forward(small_network, init_params(3, small_hp), small_hp)
    expected = small_hp.epsilon * outputs.loss_structure_mean + (1 - small_hp.epsilon) * outputs.loss_attribute
    assert outputs.loss_total == pytest.approx(expected, abs=1e-9)
    assert outputs.attn_weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(outputs.attn_weights > 0)


def test_scores_sum_to_total_loss(small_network, small_hp):
    params = init_params(3, small_hp)
    scores = anomaly_scores(small_network, params, small_hp)
    assert scores.shape == (small_network.n,)
    assert scores.sum() == pytest.approx(forward(small_network, params, small_hp).loss_total, abs=1e-9)


def test_forward_edgeless_zero_params_deterministic():
    network = make_network({"v": []}, [[0.3], [0.7]])
    hp = _hp(embedding_dim=2, attention_dim=2)
    params = ModelParams.zeros(1, hp)
    first, second = forward(network, params, hp), forward(network, params, hp)
    assert np.isfinite(first.loss_total)
    assert first.loss_total == second.loss_total
    assert np.array_equal(first.recon_X, second.recon_X)
    # σ(0) = 0.5 su tutte le 4 coppie, X̂ = 0
    assert first.loss_structure == [2.0]
    assert first.loss_attribute == pytest.approx(0.3 ** 2 + 0.7 ** 2)


def test_exact_reconstruction_scores_zero():
    """Rete a un nodo con attributo nullo: ricostruzione perfetta tranne σ sul self-pair"""
    network = make_network({"v": []}, [[0.0]])
    hp = _hp()
    params = _params_1d(1.0, dec=1.0)
    outputs = forward(network, params, hp)
    assert outputs.attribute_row_errors.tolist() == [0.0]


def test_params_shape_mismatch_rejected(small_network, small_hp):
    params = init_params(4, small_hp)
    with pytest.raises(ShapeMismatchError):
        forward(small_network, params, small_hp)


def test_checksum_changes_with_values(small_hp):
    params = init_params(3, small_hp)
    other = params.copy()
    other.dec_W[0, 0] += 1e-12
    assert params.checksum() == params.copy().checksum()
    assert params.checksum() != other.checksum()


def test_forward_graph_has_no_dangling_outputs(small_network, small_hp):
    for hp in (small_hp, small_hp.model_copy(update={"encoder_mode": EncoderMode.MULTILAYER})):
        tape, total, _ = run_forward(prepare(small_network, hp), init_params(3, hp), hp)
        assert tape.dangling_outputs([total]) == []
