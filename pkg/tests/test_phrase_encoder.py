import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sgcap.autodiff as ad
from oracles import check_gradients, softmax_rows_reference
from sgcap.datamodel import DataError, Rng
from sgcap.phrase_encoder import PhraseEncoderParams, encode_phrases


def make_params(d_w, seed=0, layers=1, positions=8, zero=False):
    rng = Rng(seed)

    def mat():
        data = np.zeros((d_w, d_w)) if zero else rng.normal(0, 0.5, (d_w, d_w))
        return ad.parameter(data)

    pos = ad.parameter(rng.normal(0, 0.1, (positions, d_w)))
    return PhraseEncoderParams(
        layers=[(mat(), mat(), mat()) for _ in range(layers)],
        positions=pos,
    )


def test_single_word_attention_is_one():
    d_w = 4
    params = make_params(d_w, seed=1)
    W = ad.constant(Rng(2).normal(0, 1, (1, d_w)))
    state = encode_phrases(W, params, use_positional=False)
    assert np.allclose(state.A.data, [[1.0]])
    # P equals the projected word vector A @ (W V) = W V
    wv = W.data @ params.layers[0][2].data
    assert np.allclose(state.P.data, wv)


def test_zero_input_gives_uniform_attention():
    d_w = 4
    params = make_params(d_w, seed=3)
    W = ad.constant(np.zeros((3, d_w)))
    state = encode_phrases(W, params, use_positional=False)
    assert np.allclose(state.A.data, np.full((3, 3), 1.0 / 3.0))


def test_matches_matrix_arithmetic_oracle():
    d_w = 6
    params = make_params(d_w, seed=5)
    W = ad.constant(Rng(6).normal(0, 1, (3, d_w)))  # t=4
    state = encode_phrases(W, params, use_positional=False)
    q, k, v = (m.data for m in params.layers[0])
    logits = (W.data @ q) @ (W.data @ k).T / np.sqrt(d_w)
    A = softmax_rows_reference(logits)
    P = A @ (W.data @ v)
    assert np.allclose(state.A.data, A, atol=1e-12)
    assert np.allclose(state.P.data, P, atol=1e-12)
    assert np.allclose(state.A.data.sum(axis=1), 1.0, atol=1e-5)


@given(st.integers(min_value=1, max_value=7), st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_rows_are_stochastic_for_all_inputs(n_rows, seed):
    d_w = 5
    params = make_params(d_w, seed=11)
    W = ad.constant(Rng(seed).normal(0, 2.0, (n_rows, d_w)))
    state = encode_phrases(W, params, use_positional=True)
    assert np.all(state.A.data >= 0)
    assert np.allclose(state.A.data.sum(axis=1), 1.0, atol=1e-5)
    assert state.P.shape == (n_rows, d_w)
    assert state.A.shape[0] == state.P.shape[0]


def test_permutation_equivariance_without_positions():
    d_w = 5
    params = make_params(d_w, seed=7)
    W = Rng(8).normal(0, 1, (4, d_w))
    perm = [2, 0, 3, 1]
    base = encode_phrases(ad.constant(W), params, use_positional=False)
    permuted = encode_phrases(ad.constant(W[perm]), params, use_positional=False)
    assert np.allclose(permuted.P.data, base.P.data[perm], atol=1e-12)
    assert np.allclose(permuted.A.data, base.A.data[np.ix_(perm, perm)], atol=1e-12)


def test_positions_break_equivariance():
    d_w = 5
    params = make_params(d_w, seed=7)
    W = Rng(8).normal(0, 1, (4, d_w))
    perm = [2, 0, 3, 1]
    base = encode_phrases(ad.constant(W), params, use_positional=True)
    permuted = encode_phrases(ad.constant(W[perm]), params, use_positional=True)
    assert not np.allclose(permuted.P.data, base.P.data[perm])


def test_final_layer_attention_returned_with_multiple_layers():
    d_w = 4
    params = make_params(d_w, seed=9, layers=2)
    W = ad.constant(Rng(10).normal(0, 1, (3, d_w)))
    state = encode_phrases(W, params, use_positional=False)
    # recompute layer by layer with plain numpy
    h = W.data
    for q, k, v in ((m.data for m in layer) for layer in params.layers):
        A = softmax_rows_reference((h @ q) @ (h @ k).T / np.sqrt(d_w))
        h = A @ (h @ v)
    assert np.allclose(state.P.data, h, atol=1e-12)
    assert np.allclose(state.A.data, A, atol=1e-12)


def test_empty_input_rejected():
    params = make_params(4)
    with pytest.raises(DataError):
        encode_phrases(ad.constant(np.zeros((0, 4))), params)


def test_gradients_match_finite_differences():
    d_w = 4
    params = make_params(d_w, seed=13)
    W = ad.parameter(Rng(14).normal(0, 1, (3, d_w)))
    weights = Rng(15).normal(0, 1, (3, d_w))
    named = {"W": W, **params.named()}

    def build_loss():
        state = encode_phrases(W, params, use_positional=True)
        return ad.tsum(ad.mul(ad.tanh(state.P), ad.constant(weights)))

    assert check_gradients(named, build_loss) < 1e-4
