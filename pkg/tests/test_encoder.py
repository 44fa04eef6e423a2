"""Stage-I encoder tests: recurrence oracles, padding semantics, gradients.

The LSTM recurrence is verified against a step-by-step scalar evaluation
written independently with math.exp/math.tanh; structural behaviours
(masking, truncation, unknown tokens, concatenation order) get direct
assertions, and every encoder parameter is finite-difference checked on a
toy configuration.
"""

import math

import numpy as np
import pytest

from hyfet import autodiff as ad
from hyfet.encoder import (
    BiLstm,
    EncoderConfig,
    Lstm,
    MentionEncoder,
    Vocab,
    concat_encoding,
    load_word_vectors,
)
from helpers import fd_check_params


def lstm_oracle(xs, wx, wh, b, hidden):
    """Independent per-step LSTM evaluation (pure python floats)."""

    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    h = [0.0] * hidden
    c = [0.0] * hidden
    for x in xs:
        z = [
            sum(x[d] * wx[d][k] for d in range(len(x)))
            + sum(h[j] * wh[j][k] for j in range(hidden))
            + b[k]
            for k in range(4 * hidden)
        ]
        for j in range(hidden):
            i = sig(z[j])
            f = sig(z[hidden + j])
            g = math.tanh(z[2 * hidden + j])
            o = sig(z[3 * hidden + j])
            c[j] = f * c[j] + i * g
            h[j] = o * math.tanh(c[j])
    return h


def tiny_config(**overrides) -> EncoderConfig:
    base = dict(
        char_hidden=3,
        context_hidden=2,
        position_hidden=2,
        word_embedding_dim=3,
        char_embedding_dim=2,
        position_embedding_dim=2,
        window=3,
    )
    base.update(overrides)
    return EncoderConfig(**base)


def tiny_encoder(seed=0, **overrides) -> MentionEncoder:
    words = Vocab(["the", "river", "bank", "loan", "money", "flows"])
    chars = Vocab(list("abcdefghijklmnopqrstuvwxyz "))
    return MentionEncoder(tiny_config(**overrides), words, chars, np.random.default_rng(seed))


class TestLstmCell:
    def test_two_step_recurrence_matches_scalar_oracle(self):
        """Hand-stepped 1-dim LSTM equals the vectorized implementation."""
        rng = np.random.default_rng(0)
        cell = Lstm(rng, in_dim=2, hidden=1, prefix="t")
        cell.wx.data = np.array([[0.3, -0.2, 0.5, 0.1], [-0.4, 0.2, 0.3, -0.1]])
        cell.wh.data = np.array([[0.2, -0.3, 0.1, 0.4]])
        cell.b.data = np.array([0.05, 1.0, -0.05, 0.1])
        xs = [[0.7, -0.3], [0.2, 0.9]]
        x = ad.Tensor(np.array(xs)[None, :, :])
        got = cell.run(x, np.ones((1, 2)))
        want = lstm_oracle(xs, cell.wx.data, cell.wh.data, cell.b.data, hidden=1)
        np.testing.assert_allclose(got.data[0], want, atol=1e-14)

    def test_multi_dim_recurrence_matches_oracle(self):
        rng = np.random.default_rng(1)
        cell = Lstm(rng, in_dim=3, hidden=2, prefix="t")
        xs = [[0.1, -0.2, 0.4], [0.5, 0.0, -0.3], [-0.1, 0.2, 0.2]]
        x = ad.Tensor(np.array(xs)[None, :, :])
        got = cell.run(x, np.ones((1, 3)))
        want = lstm_oracle(xs, cell.wx.data, cell.wh.data, cell.b.data, hidden=2)
        np.testing.assert_allclose(got.data[0], want, atol=1e-14)

    def test_forget_bias_initialized_to_one(self):
        cell = Lstm(np.random.default_rng(0), in_dim=2, hidden=4, prefix="t")
        np.testing.assert_array_equal(cell.b.data[4:8], np.ones(4))
        np.testing.assert_array_equal(cell.b.data[:4], np.zeros(4))
        np.testing.assert_array_equal(cell.b.data[8:], np.zeros(8))

    def test_masked_steps_are_exact_noops(self):
        """A padded middle step must not change state even bitwise."""
        rng = np.random.default_rng(2)
        cell = Lstm(rng, in_dim=2, hidden=3, prefix="t")
        x0, x2 = [0.4, -0.1], [0.3, 0.8]
        garbage = [9.9, -7.7]
        padded = ad.Tensor(np.array([x0, garbage, x2])[None, :, :])
        plain = ad.Tensor(np.array([x0, x2])[None, :, :])
        h_padded = cell.run(padded, np.array([[1.0, 0.0, 1.0]]))
        h_plain = cell.run(plain, np.array([[1.0, 1.0]]))
        np.testing.assert_array_equal(h_padded.data, h_plain.data)

    def test_all_zero_weights_give_zero_state(self):
        cell = Lstm(np.random.default_rng(3), in_dim=2, hidden=3, prefix="t")
        for p in (cell.wx, cell.wh, cell.b):
            p.data = np.zeros_like(p.data)
        x = ad.Tensor(np.ones((1, 4, 2)))
        np.testing.assert_array_equal(cell.run(x, np.ones((1, 4))).data, np.zeros((1, 3)))

    def test_bilstm_output_is_backward_then_forward(self):
        rng = np.random.default_rng(4)
        bi = BiLstm(rng, in_dim=2, hidden=1, prefix="t")
        xs = np.array([[0.2, -0.5], [0.7, 0.1], [-0.3, 0.4]])
        x = ad.Tensor(xs[None, :, :])
        mask = np.ones((1, 3))
        got = bi.run(x, mask)
        fwd = bi.fwd.run(x, mask)
        bwd = bi.bwd.run(ad.Tensor(xs[::-1][None, :, :]), mask)
        np.testing.assert_allclose(got.data[0, 0], bwd.data[0, 0], atol=1e-15)
        np.testing.assert_allclose(got.data[0, 1], fwd.data[0, 0], atol=1e-15)


class TestMentionChars:
    def test_identical_mentions_encode_identically(self):
        enc = tiny_encoder()
        a = enc.encode_mention_chars(["bank"])
        b = enc.encode_mention_chars(["bank"])
        np.testing.assert_array_equal(a.data, b.data)

    def test_empty_mention_rejected(self):
        enc = tiny_encoder()
        with pytest.raises(ValueError):
            enc.encode_mention_chars([])
        with pytest.raises(ValueError):
            enc.encode_mention_chars([""])

    def test_tokens_joined_with_separator(self):
        """Two tokens encode like their space-joined character stream."""
        enc = tiny_encoder()
        joined = enc.encode_mention_chars(["river bank"])
        split = enc.encode_mention_chars(["river", "bank"])
        np.testing.assert_array_equal(joined.data, split.data)

    def test_zero_weights_fixed_point(self):
        enc = tiny_encoder()
        for p in (enc.mention_lstm.wx, enc.mention_lstm.wh, enc.mention_lstm.b):
            p.data = np.zeros_like(p.data)
        out = enc.encode_mention_chars(["a"])
        np.testing.assert_array_equal(out.data, np.zeros(enc.config.char_hidden))


class TestContext:
    def test_empty_side_encodes_to_zero(self):
        enc = tiny_encoder()
        left, right = enc.encode_context([], ["money", "flows"])
        np.testing.assert_array_equal(left.data, np.zeros(2 * enc.config.context_hidden))
        assert np.any(right.data != 0.0)

    def test_sides_use_separate_parameters(self):
        enc = tiny_encoder()
        left, right = enc.encode_context(["the", "bank"], ["the", "bank"])
        assert not np.allclose(left.data, right.data)

    def test_single_token_context_matches_oracle(self):
        enc = tiny_encoder()
        left, _ = enc.encode_context(["bank"], [])
        emb = enc.word_emb.data[enc.word_vocab.index("bank")]
        fwd = lstm_oracle([list(emb)], enc.left_ctx.fwd.wx.data, enc.left_ctx.fwd.wh.data,
                          enc.left_ctx.fwd.b.data, hidden=enc.config.context_hidden)
        bwd = lstm_oracle([list(emb)], enc.left_ctx.bwd.wx.data, enc.left_ctx.bwd.wh.data,
                          enc.left_ctx.bwd.b.data, hidden=enc.config.context_hidden)
        np.testing.assert_allclose(left.data, np.concatenate([bwd, fwd]), atol=1e-14)

    def test_unknown_token_maps_to_unk(self):
        enc = tiny_encoder()
        a, _ = enc.encode_context(["zzzunseen"], [])
        b, _ = enc.encode_context(["<unk>"], [])
        np.testing.assert_array_equal(a.data, b.data)

    def test_truncation_keeps_tokens_nearest_the_mention(self):
        enc = tiny_encoder(window=2)
        long_left, _ = enc.encode_context(["money", "river", "bank"], [])
        short_left, _ = enc.encode_context(["river", "bank"], [])
        np.testing.assert_array_equal(long_left.data, short_left.data)
        _, long_right = enc.encode_context([], ["money", "river", "bank"])
        _, short_right = enc.encode_context([], ["money", "river"])
        np.testing.assert_array_equal(long_right.data, short_right.data)


class TestPositions:
    def test_zero_length_side_is_zero_vector(self):
        enc = tiny_encoder()
        left, right = enc.encode_positions(0, 3)
        np.testing.assert_array_equal(left.data, np.zeros(enc.config.position_hidden))
        assert np.any(right.data != 0.0)

    def test_deterministic(self):
        enc = tiny_encoder()
        a, _ = enc.encode_positions(2, 1)
        b, _ = enc.encode_positions(2, 1)
        np.testing.assert_array_equal(a.data, b.data)

    def test_negative_length_rejected(self):
        enc = tiny_encoder()
        with pytest.raises(ValueError):
            enc.encode_positions(-1, 0)

    def test_two_offset_sequence_matches_oracle(self):
        enc = tiny_encoder()
        left, _ = enc.encode_positions(2, 0)
        w = enc.config.window
        rows = [list(enc.pos_emb.data[-1 + w]), list(enc.pos_emb.data[-2 + w])]
        cell = enc.left_pos
        want = lstm_oracle(rows, cell.wx.data, cell.wh.data, cell.b.data,
                           hidden=enc.config.position_hidden)
        np.testing.assert_allclose(left.data, want, atol=1e-14)

    def test_lengths_beyond_window_saturate(self):
        enc = tiny_encoder(window=2)
        a, _ = enc.encode_positions(2, 0)
        b, _ = enc.encode_positions(7, 0)
        np.testing.assert_array_equal(a.data, b.data)


class TestConcat:
    def test_output_dim_formula(self):
        """e=2, c=4, p=3 gives L = 2 + 2*4 + 2*3 = 16."""
        parts = [
            ad.Tensor(np.full(3, 1.0)),  # left positions (p)
            ad.Tensor(np.full(4, 2.0)),  # left context (c)
            ad.Tensor(np.full(2, 3.0)),  # mention (e)
            ad.Tensor(np.full(4, 4.0)),  # right context (c)
            ad.Tensor(np.full(3, 5.0)),  # right positions (p)
        ]
        out = concat_encoding(parts)
        assert out.data.shape == (16,)
        np.testing.assert_array_equal(out.data[3:7], np.full(4, 2.0))
        np.testing.assert_array_equal(out.data[7:9], np.full(2, 3.0))

    def test_zero_parts_give_zero_vector(self):
        parts = [ad.Tensor(np.zeros(k)) for k in (3, 4, 2, 4, 3)]
        np.testing.assert_array_equal(concat_encoding(parts).data, np.zeros(16))

    def test_wrong_arity_rejected(self):
        with pytest.raises(ValueError):
            concat_encoding([ad.Tensor(np.zeros(2))] * 4)

    def test_encoder_output_dim_matches_config(self):
        enc = tiny_encoder()
        out = enc.encode_mention(["bank"], ["the"], ["money", "flows"])
        assert out.data.shape == (enc.config.output_dim,)
        assert np.all(np.isfinite(out.data))

    def test_batch_agrees_with_itself_across_calls(self):
        enc = tiny_encoder()
        batch = enc.encode_batch(
            [["bank"], ["river"]], [["the"], []], [["money"], ["flows", "the"]]
        )
        again = enc.encode_batch(
            [["bank"], ["river"]], [["the"], []], [["money"], ["flows", "the"]]
        )
        np.testing.assert_array_equal(batch.data, again.data)
        assert batch.data.shape == (2, enc.config.output_dim)


class TestEncoderGradients:
    def test_all_parameters_match_finite_differences(self):
        """Backprop through chars/context/position paths vs central FD."""
        enc = tiny_encoder(seed=7, window=2)

        def forward():
            out = enc.encode_batch(
                [["bank"], ["loan", "a"]],
                [["the", "river"], []],
                [["money"], ["flows", "the", "river"]],
            )
            return ad.sum(out * out)

        fd_check_params(enc.params(), forward, eps=1e-5, rtol=1e-4, atol=1e-8)


class TestWordVectorLoading:
    def test_plain_table_and_header_table(self, tmp_path):
        plain = tmp_path / "vecs.txt"
        plain.write_text("bank 0.1 0.2 0.3\nriver -1.0 0.5 0.0\n")
        vecs = load_word_vectors(plain)
        np.testing.assert_allclose(vecs["bank"], [0.1, 0.2, 0.3])
        with_header = tmp_path / "vecs2.txt"
        with_header.write_text("2 3\nbank 0.1 0.2 0.3\nriver -1.0 0.5 0.0\n")
        assert set(load_word_vectors(with_header)) == {"bank", "river"}

    def test_dimension_mismatch_rejected(self, tmp_path):
        bad = tmp_path / "vecs.txt"
        bad.write_text("bank 0.1 0.2\nriver 0.1 0.2 0.3\n")
        with pytest.raises(ValueError):
            load_word_vectors(bad)

    def test_pretrained_rows_installed_missing_words_keep_unk(self):
        words = Vocab(["bank", "river"])
        chars = Vocab(list("abcdefghijklmnopqrstuvwxyz "))
        enc = MentionEncoder(
            tiny_config(),
            words,
            chars,
            np.random.default_rng(0),
            word_vectors={"bank": np.array([1.0, 2.0, 3.0]), "zzz": np.array([9.0, 9.0, 9.0])},
        )
        np.testing.assert_array_equal(enc.word_emb.data[words.index("bank")], [1.0, 2.0, 3.0])
        assert not np.array_equal(enc.word_emb.data[words.index("river")], [9.0, 9.0, 9.0])
