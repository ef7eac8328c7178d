import numpy as np
import pytest

from genret.errors import DataFormatError
from genret.model import (
    decode_fwd,
    decode_hidden,
    dense_representation,
    dense_representations,
    encode,
    encode_fwd,
    log_prob_score,
    make_decoder_state,
    prefix_score,
    prefix_score_from_hidden,
)
from genret.model.config import ModelConfig
from genret.model.layers import softmax
from genret.model.params import init_params
from genret.model.scoring import pad_batch


class TestEncode:
    def test_deterministic(self, tiny_cfg, tiny_params):
        rng = np.random.default_rng(0)
        toks = rng.integers(0, tiny_cfg.token_vocab, size=7)
        a = encode(tiny_params, tiny_cfg, toks)
        b = encode(tiny_params, tiny_cfg, toks)
        assert np.array_equal(a, b)

    def test_output_length_equals_input_length(self, tiny_cfg, tiny_params):
        for n in (1, 3, tiny_cfg.max_seq_len):
            toks = np.arange(n) % tiny_cfg.token_vocab
            assert encode(tiny_params, tiny_cfg, toks).shape == (n, tiny_cfg.D)

    def test_empty_query_rejected(self, tiny_cfg, tiny_params):
        with pytest.raises(DataFormatError):
            encode(tiny_params, tiny_cfg, [])

    def test_too_long_rejected(self, tiny_cfg, tiny_params):
        with pytest.raises(DataFormatError):
            encode(tiny_params, tiny_cfg, [0] * (tiny_cfg.max_seq_len + 1))

    def test_degenerate_params_reduce_to_token_embeddings(self, tiny_cfg):
        # zero attention/FFN weights and zero position embeddings: the
        # residual stream passes the raw token embeddings through
        params = init_params(tiny_cfg, seed=1)
        for name, arr in params.items():
            if ".attn." in name or ".ff." in name:
                params[name] = np.zeros_like(arr)
        params["enc_pos"] = np.zeros_like(params["enc_pos"])
        toks = np.array([3, 1, 4, 1, 5])
        out = encode(params, tiny_cfg, toks)
        assert np.allclose(out, params["tok_emb"][toks], atol=1e-15)


class TestDecodeHidden:
    def test_empty_prefix_gives_first_state(self, tiny_cfg, tiny_params):
        enc = encode(tiny_params, tiny_cfg, [1, 2, 3])
        h1 = decode_hidden(tiny_params, tiny_cfg, enc, [])
        assert h1.shape == (tiny_cfg.D,)
        assert np.isfinite(h1).all()

    def test_causal_consistency_incremental_vs_full(self, tiny_cfg, tiny_params):
        # h for prefix p equals the corresponding row when decoding p plus
        # more tokens in one pass
        rng = np.random.default_rng(2)
        enc = encode(tiny_params, tiny_cfg, rng.integers(0, 30, size=6))
        codes = rng.integers(0, tiny_cfg.V, size=tiny_cfg.L - 1)
        full, _ = decode_fwd(
            tiny_params, tiny_cfg, enc[None], np.ones((1, enc.shape[0])), codes[None]
        )
        for p in range(tiny_cfg.L):
            h = decode_hidden(tiny_params, tiny_cfg, enc, codes[:p])
            assert np.allclose(h, full[0, p], atol=1e-12)

    def test_prefix_too_long_rejected(self, tiny_cfg, tiny_params):
        enc = encode(tiny_params, tiny_cfg, [1])
        with pytest.raises(DataFormatError):
            decode_hidden(tiny_params, tiny_cfg, enc, [0] * tiny_cfg.L)

    def test_code_out_of_range_rejected(self, tiny_cfg, tiny_params):
        enc = encode(tiny_params, tiny_cfg, [1])
        with pytest.raises(DataFormatError):
            decode_hidden(tiny_params, tiny_cfg, enc, [tiny_cfg.V])

    def test_finite_for_random_params(self, tiny_cfg):
        for seed in range(3):
            params = init_params(tiny_cfg, seed)
            enc = encode(params, tiny_cfg, [5, 6, 7, 8])
            h = decode_hidden(params, tiny_cfg, enc, [1, 2])
            assert np.isfinite(h).all()

    def test_incremental_state_matches_full_decode(self, tiny_cfg, tiny_params):
        rng = np.random.default_rng(3)
        toks, mask = pad_batch([rng.integers(0, 30, size=5), rng.integers(0, 30, size=8)],
                               tiny_cfg)
        enc, _ = encode_fwd(tiny_params, tiny_cfg, toks, mask)
        codes = rng.integers(0, tiny_cfg.V, size=(2, tiny_cfg.L - 1))
        full, _ = decode_fwd(tiny_params, tiny_cfg, enc, mask, codes)
        state = make_decoder_state(tiny_params, tiny_cfg, enc, mask)
        x = np.tile(tiny_params["start_emb"] + tiny_params["dec_pos"][0], (2, 1))
        hs = [state.step(x)]
        for t in range(codes.shape[1]):
            x = tiny_params["docid_emb"][t][codes[:, t]] + tiny_params["dec_pos"][t + 1]
            hs.append(state.step(x))
        assert np.allclose(np.stack(hs, axis=1), full, atol=1e-9)


class TestDenseRepresentation:
    def test_equals_decode_hidden_with_empty_prefix(self, tiny_cfg, tiny_params):
        toks = [4, 9, 2]
        enc = encode(tiny_params, tiny_cfg, toks)
        expected = decode_hidden(tiny_params, tiny_cfg, enc, [])
        assert np.array_equal(dense_representation(tiny_params, tiny_cfg, toks), expected)

    def test_identical_documents_identical_vectors(self, tiny_cfg, tiny_params):
        a = dense_representation(tiny_params, tiny_cfg, [7, 7, 3])
        b = dense_representation(tiny_params, tiny_cfg, [7, 7, 3])
        assert np.array_equal(a, b)

    def test_batched_matches_single(self, tiny_cfg, tiny_params):
        seqs = [[1, 2, 3], [4, 5], [6, 7, 8, 9, 10]]
        batched = dense_representations(tiny_params, tiny_cfg, seqs, batch_size=2)
        for i, s in enumerate(seqs):
            single = dense_representation(tiny_params, tiny_cfg, s)
            assert np.allclose(batched[i], single, atol=1e-12)


class TestPrefixScore:
    def test_empty_prefix_scores_zero(self, tiny_cfg, tiny_params):
        enc = encode(tiny_params, tiny_cfg, [1, 2])
        assert prefix_score(tiny_params, tiny_cfg, enc, []) == 0.0

    def test_additivity(self, tiny_cfg, tiny_params):
        rng = np.random.default_rng(4)
        enc = encode(tiny_params, tiny_cfg, rng.integers(0, 30, size=5))
        codes = rng.integers(0, tiny_cfg.V, size=tiny_cfg.L)
        for i in range(1, tiny_cfg.L + 1):
            prev = prefix_score(tiny_params, tiny_cfg, enc, codes[: i - 1])
            h_i = decode_hidden(tiny_params, tiny_cfg, enc, codes[: i - 1])
            term = float(tiny_params["docid_emb"][i - 1][codes[i - 1]] @ h_i)
            total = prefix_score(tiny_params, tiny_cfg, enc, codes[:i])
            assert total == pytest.approx(prev + term, abs=1e-9)

    def test_one_step_toy_dot_product(self):
        # E_1[c] = (1, 0), h_1 = (0.5, 0.5) -> score 0.5
        docid_emb = np.zeros((1, 2, 2))
        docid_emb[0, 1] = [1.0, 0.0]
        hidden = np.array([[0.5, 0.5]])
        assert prefix_score_from_hidden(docid_emb, hidden, [1]) == pytest.approx(0.5)


class TestLogProbScore:
    def test_single_code_vocab_scores_zero(self):
        cfg = ModelConfig(D=8, L=2, V=2, n_layers=1, n_heads=2, token_vocab=10,
                          max_seq_len=6, d_ff=16)
        params = init_params(cfg, 0)
        # collapse to a singleton softmax by making both rows identical
        params["docid_emb"][:, 1, :] = params["docid_emb"][:, 0, :]
        enc = encode(params, cfg, [1, 2])
        assert log_prob_score(params, cfg, enc, [0, 0]) == pytest.approx(
            2 * np.log(0.5)
        )

    def test_always_nonpositive(self, tiny_cfg, tiny_params):
        rng = np.random.default_rng(5)
        enc = encode(tiny_params, tiny_cfg, rng.integers(0, 30, size=4))
        for _ in range(10):
            docid = rng.integers(0, tiny_cfg.V, size=tiny_cfg.L)
            assert log_prob_score(tiny_params, tiny_cfg, enc, docid) <= 0.0

    def test_per_step_softmax_normalizes(self, tiny_cfg, tiny_params):
        # exp of per-step terms sums to 1 over all V codes at one step
        rng = np.random.default_rng(6)
        enc = encode(tiny_params, tiny_cfg, rng.integers(0, 30, size=4))
        prefix = rng.integers(0, tiny_cfg.V, size=2)
        h3 = decode_hidden(tiny_params, tiny_cfg, enc, prefix)
        logits = tiny_params["docid_emb"][2] @ h3
        assert softmax(logits).sum() == pytest.approx(1.0, abs=1e-12)

    def test_requires_full_length(self, tiny_cfg, tiny_params):
        enc = encode(tiny_params, tiny_cfg, [1])
        with pytest.raises(DataFormatError):
            log_prob_score(tiny_params, tiny_cfg, enc, [0] * (tiny_cfg.L - 1))
