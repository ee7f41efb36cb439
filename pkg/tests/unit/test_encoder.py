#!/usr/bin/env python
# encoding: utf-8
#
# Copyright © 2024, AugAN developers.  All Rights Reserved.
# SPDX-License-Identifier: Apache-2.0

from functools import partial

import numpy as np
import pytest
import torch

from augan.config import TrainConfig
from augan.core import AttributedGraph, NodeRef
from augan.detector import (
    SyntheticAnomaly,
    batch_loss,
    bce_loss,
    deviation_loss,
    init_model,
)
from augan.encoder import (
    Batch,
    EncoderParams,
    GraphTensors,
    batch_embeddings,
    encode,
    encode_with_gradients,
    init_encoder,
)
from augan.exceptions import NumericalError, ShapeError


def _random_graph(rng, n=30, d=5, graph_id="g"):
    rows, cols = np.triu_indices(n, k=1)
    keep = rng.random(len(rows)) < 0.1
    return AttributedGraph(
        graph_id=graph_id,
        n=n,
        edges=np.column_stack([rows[keep], cols[keep]]),
        features=rng.standard_normal((n, d)),
    )


def test_single_layer_is_linear_propagation(two_nodes):
    params = EncoderParams(weights=(np.eye(2),))

    h = encode(two_nodes, two_nodes.normalized_adjacency, params)

    np.testing.assert_allclose(h, np.full((2, 2), 0.5))


def test_relu_between_layers(two_nodes):
    """A negative first layer is zeroed by the activation."""
    params = EncoderParams(weights=(-np.eye(2), np.eye(2)))

    h = encode(two_nodes, two_nodes.normalized_adjacency, params)

    np.testing.assert_array_equal(h, np.zeros((2, 2)))


def test_no_activation_after_last_layer(two_nodes):
    params = EncoderParams(weights=(np.eye(2), -np.eye(2)))

    h = encode(two_nodes, two_nodes.normalized_adjacency, params)

    assert (h < 0).all()


def test_feature_dimension_mismatch(two_nodes):
    params = init_encoder(3, hidden_dim=4)

    with pytest.raises(ShapeError):
        encode(two_nodes, two_nodes.normalized_adjacency, params)


def test_adjacency_of_another_graph(two_nodes, path3):
    params = init_encoder(2, hidden_dim=4)

    with pytest.raises(ShapeError):
        encode(two_nodes, path3.normalized_adjacency, params)


def test_layer_shapes_must_chain():
    with pytest.raises(ShapeError):
        EncoderParams(weights=(np.ones((3, 4)), np.ones((5, 2))))


def test_non_finite_weights():
    with pytest.raises(NumericalError):
        EncoderParams(weights=(np.array([[np.nan]]),))


def test_init_encoder_is_seeded():
    first = init_encoder(5, 4, 2, np.random.default_rng(7))
    second = init_encoder(5, 4, 2, np.random.default_rng(7))

    assert first.dims == [5, 4, 4]
    for a, b in zip(first.weights, second.weights):
        assert torch.equal(a, b)

    limit = np.sqrt(6.0 / (5 + 4))
    assert float(first.weights[0].abs().max()) <= limit


def test_encoder_params_round_trip():
    params = init_encoder(3, 2, 2, np.random.default_rng(0))
    loaded = EncoderParams.from_dict(params.to_dict())

    assert loaded.dims == params.dims
    for a, b in zip(params.weights, loaded.weights):
        assert torch.equal(a, b)


def test_batch_label_count_must_match():
    with pytest.raises(ShapeError):
        Batch(refs=[NodeRef(0, 0)], labels=[1, 0])


def test_batch_embeddings_interpolates_pairs():
    rng = np.random.default_rng(1)
    graphs = [_random_graph(rng, n=10, graph_id="a"), _random_graph(rng, n=12, graph_id="b")]
    params = init_encoder(5, 3, 2, rng)
    h_a = encode(graphs[0], graphs[0].normalized_adjacency, params)
    h_b = encode(graphs[1], graphs[1].normalized_adjacency, params)

    refs = [
        NodeRef(1, 4),
        SyntheticAnomaly(NodeRef(0, 2), NodeRef(1, 7), 0.25),
    ]
    with torch.no_grad():
        h = batch_embeddings(graphs, params.weights, refs).numpy()

    np.testing.assert_allclose(h[0], h_b[4])
    np.testing.assert_allclose(h[1], 0.75 * h_a[2] + 0.25 * h_b[7])


def test_unknown_graph_in_batch():
    rng = np.random.default_rng(2)
    graphs = [_random_graph(rng, n=5)]
    params = init_encoder(5, 3, 1, rng)

    with pytest.raises(ShapeError):
        batch_embeddings(graphs, params.weights, [NodeRef(1, 0)])


def _finite_differences(graphs, params, batch, loss_fn, eps=1e-6):
    tensors = [t.clone() for t in params.tensors()]
    estimates = []
    with torch.no_grad():
        for t in tensors:
            flat = t.view(-1)
            for i in range(flat.numel()):
                original = float(flat[i])
                flat[i] = original + eps
                upper = float(batch_loss(graphs, tensors, params.num_layers, batch, loss_fn))
                flat[i] = original - eps
                lower = float(batch_loss(graphs, tensors, params.num_layers, batch, loss_fn))
                flat[i] = original
                estimates.append((upper - lower) / (2 * eps))
    return np.array(estimates)


@pytest.mark.parametrize(
    "loss_fn",
    [bce_loss, partial(deviation_loss, ref_mean=0.0, ref_std=1.0, margin=5.0)],
    ids=["bce", "deviation"],
)
def test_gradients_match_finite_differences(loss_fn):
    rng = np.random.default_rng(2024)
    config = TrainConfig(hidden_dim=4, num_layers=2)

    for _ in range(20):
        graphs = [_random_graph(rng)]
        params = init_model(5, config, rng)
        nodes = rng.choice(30, size=8, replace=False)
        batch = Batch(
            refs=[NodeRef(0, int(v)) for v in nodes], labels=[1] * 4 + [0] * 4
        )

        loss, grads = encode_with_gradients(graphs, params, batch, loss_fn)
        analytic = np.concatenate([g.numpy().ravel() for g in grads.tensors()])
        numeric = _finite_differences(graphs, params, batch, loss_fn)

        assert np.isfinite(loss)
        error = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert error < 1e-4


def test_non_finite_loss_carries_batch():
    rng = np.random.default_rng(3)
    graphs = [_random_graph(rng)]
    params = init_model(5, TrainConfig(hidden_dim=4), rng)
    batch = Batch(refs=[NodeRef(0, 0), NodeRef(0, 1)], labels=[1, 0])

    def bad_loss(scores, labels):
        return scores.sum() * float("inf")

    with pytest.raises(NumericalError) as e:
        encode_with_gradients(graphs, params, batch, bad_loss)

    assert e.value.batch is batch
    assert e.value.exit_code == 4


def _permuted(graph, perm):
    """Copy of `graph` whose node i is node perm[i] of the original."""
    inverse = np.argsort(perm)
    return AttributedGraph(
        graph_id=graph.graph_id + "-perm",
        n=graph.n,
        edges=inverse[graph.edges],
        features=graph.features[perm],
    )


@pytest.mark.parametrize("seed", range(5))
def test_encode_is_permutation_equivariant(seed):
    rng = np.random.default_rng(seed)
    graph = _random_graph(rng)
    perm = rng.permutation(graph.n)
    params = init_encoder(graph.d, hidden_dim=4, rng=rng)

    h = encode(graph, graph.normalized_adjacency, params)
    shuffled = _permuted(graph, perm)
    h_perm = encode(shuffled, shuffled.normalized_adjacency, params)

    np.testing.assert_allclose(h_perm, h[perm], rtol=0, atol=1e-12)


def test_isolated_node_leaves_other_rows_unchanged():
    rng = np.random.default_rng(7)
    graph = _random_graph(rng)
    extended = AttributedGraph(
        graph_id="extended",
        n=graph.n + 1,
        edges=graph.edges,
        features=np.vstack([graph.features, rng.standard_normal((1, graph.d))]),
    )
    params = init_encoder(graph.d, hidden_dim=4, rng=rng)

    h = encode(graph, graph.normalized_adjacency, params)
    h_ext = encode(extended, extended.normalized_adjacency, params)

    np.testing.assert_allclose(h_ext[: graph.n], h, rtol=0, atol=1e-12)


def test_graph_tensors_keep_adjacency_sparse(path3):
    tensors = GraphTensors(path3)

    assert tensors.adjacency.is_sparse
    np.testing.assert_allclose(
        tensors.adjacency.to_dense().numpy(), path3.normalized_adjacency.toarray()
    )
