"""Acceptance suite.

Each test prints a PASS line for its criterion when it completes. The
end-to-end and ablation criteria train real pipelines on the synthetic
corpus and take the bulk of the runtime; session-scoped fixtures share the
expensive stages between criteria.
"""

import json
import os
import time

import numpy as np
import pytest

from genret import rq
from genret.checkpoint import load_checkpoint
from genret.cli import main as cli_main
from genret.corpus import BM25Index, generate_synthetic_corpus, load_corpus, load_qrels, load_queries
from genret.evaluation import mrr_at_k, ndcg_at_k, prefix_survival, read_run, recall_at_k
from genret.model.config import ModelConfig
from genret.model.params import init_params, zero_grads
from genret.model.scoring import dense_representations
from genret.search import beam_search, brute_force_rank, build_trie
from genret.training import (
    AlphaSchedule,
    StageConfig,
    dense_margin_batch,
    finetune_initial,
    finetune_progressive,
    finetune_self_negatives,
    margin_mse_loss,
    mine_negatives_beam,
    mine_negatives_bm25,
    mine_negatives_dense,
    multi_objective_loss,
    prefix_rank_loss,
    pretrain_seq2seq,
    sample_triples,
    seq2seq_ce_loss,
    train_dense_stage,
)
from genret.corpus.pseudo import generate_pseudo_queries

from test_eval import brute_mrr, brute_ndcg, brute_recall, random_run_and_qrels


def report(criterion, detail):
    print(f"\n[ACCEPTANCE] criterion {criterion}: PASS ({detail})")


# ---------------------------------------------------------------------------
# criterion 1: beam-search exactness against the brute-force oracle
# ---------------------------------------------------------------------------

def test_criterion_1_beam_search_exactness():
    t0 = time.monotonic()
    rng = np.random.default_rng(20240101)
    n_instances = 0
    for trial in range(20):
        n_docs = int(rng.choice([5, 17, 40, 64, 128, 256, 512], p=[.2, .2, .2, .15, .1, .1, .05]))
        cfg = ModelConfig(D=16, L=int(rng.choice([2, 3, 4])), V=8, n_layers=1, n_heads=2,
                          token_vocab=30, max_seq_len=10, d_ff=32)
        if n_docs > cfg.V**cfg.L:
            n_docs = cfg.V**cfg.L // 2
        params = init_params(cfg, int(rng.integers(1 << 30)))
        dmap, seen = {}, set()
        while len(dmap) < n_docs:
            codes = tuple(int(c) for c in rng.integers(0, cfg.V, size=cfg.L))
            if codes not in seen:
                seen.add(codes)
                dmap[f"d{len(dmap):05d}"] = codes
        trie = build_trie(dmap)
        q = rng.integers(0, cfg.token_vocab, size=int(rng.integers(2, 8)))
        beam = beam_search(params, cfg, q, trie, K=n_docs)
        brute = brute_force_rank(params, cfg, q, dmap)
        assert [d for d, _ in beam] == [d for d, _ in brute], f"order differs (instance {trial})"
        for (_, a), (_, b) in zip(beam, brute):
            assert abs(a - b) < 1e-9
        n_instances += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 60.0, f"took {elapsed:.1f}s, budget is 60s"
    report(1, f"{n_instances} instances exact, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# criterion 2: gradient correctness for every loss, all parameter groups
# ---------------------------------------------------------------------------

def test_criterion_2_gradient_correctness():
    cfg = ModelConfig(D=8, L=4, V=8, n_layers=2, n_heads=2, token_vocab=24,
                      max_seq_len=10, d_ff=16)
    sched = AlphaSchedule(2.0, cfg.L)
    worst = 0.0
    checked = 0
    for seed in range(5):
        params = init_params(cfg, seed)
        rng = np.random.default_rng(5000 + seed)
        q = rng.integers(0, cfg.token_vocab, size=6)
        pos = rng.integers(0, cfg.V, size=cfg.L)
        neg = rng.integers(0, cfg.V, size=cfg.L)

        # margin_mse_loss is scalar-in/scalar-out: check its two inputs
        sp, sn, t = rng.normal(size=3)
        from genret.training import margin_mse_grad
        dp, dn = margin_mse_grad(sp, sn, t)
        eps = 1e-6
        fd_p = (margin_mse_loss(sp + eps, sn, t) - margin_mse_loss(sp - eps, sn, t)) / (2 * eps)
        fd_n = (margin_mse_loss(sp, sn + eps, t) - margin_mse_loss(sp, sn - eps, t)) / (2 * eps)
        assert abs(dp - fd_p) / max(1e-6, abs(dp) + abs(fd_p)) < 1e-4
        assert abs(dn - fd_n) / max(1e-6, abs(dn) + abs(fd_n)) < 1e-4

        losses = {
            "prefix_rank": lambda g: prefix_rank_loss(
                params, cfg, q, pos, neg, 0.7, cfg.L, sched, grads=g),
            "multi_objective": lambda g: multi_objective_loss(
                params, cfg, q, pos, neg, 0.7, cfg.L, sched, [3, cfg.L], grads=g),
            "seq2seq_ce": lambda g: seq2seq_ce_loss(params, cfg, q, pos, grads=g),
            "dense_margin": lambda g: dense_margin_batch(
                params, cfg, [q], [pos + 1], [neg + 2], [0.4], grads=g),
        }
        for name, fn in losses.items():
            grads = zero_grads(params)
            fn(grads)
            for pname in params:
                arr = params[pname]
                for fi in rng.choice(arr.size, size=min(4, arr.size), replace=False):
                    idx = np.unravel_index(fi, arr.shape)
                    orig = arr[idx]
                    arr[idx] = orig + 1e-5
                    up = fn(None)
                    arr[idx] = orig - 1e-5
                    down = fn(None)
                    arr[idx] = orig
                    fd = (up - down) / 2e-5
                    an = grads[pname][idx]
                    rel = abs(an - fd) / max(1e-6, abs(an) + abs(fd))
                    worst = max(worst, rel)
                    checked += 1
                    assert rel < 1e-4, f"{name}/{pname}{idx}: rel err {rel:.2e}"
    report(2, f"{checked} entries over 5 seeds, worst rel err {worst:.2e}")


# ---------------------------------------------------------------------------
# criterion 3: alpha schedule closed form, normalization, concavity
# ---------------------------------------------------------------------------

def test_criterion_3_alpha_schedule():
    sched = AlphaSchedule(2.0, 32)
    assert sched.alpha(32) == 1.0  # exact
    z = 1.0 - 2.0 / 32.0
    for i in (4, 8, 16, 32):
        assert abs(sched.alpha(i) - (1.0 - 2.0 / i) / z) < 1e-12
    a = [sched.alpha(i) for i in (4, 8, 16, 32)]
    diffs = [y - x for x, y in zip(a, a[1:])]
    assert all(d1 >= d2 - 1e-12 for d1, d2 in zip(diffs, diffs[1:]))
    report(3, f"alpha(4..32) = {[round(x, 6) for x in a]}")


# ---------------------------------------------------------------------------
# criterion 4: residual quantization distortion
# ---------------------------------------------------------------------------

def test_criterion_4_rq_distortion():
    rng = np.random.default_rng(4004)
    emb = rng.normal(size=(1000, 32))
    books = rq.train_codebooks(emb, L=8, V=64, iters=20, seed=4)
    mse = rq.distortion(emb, rq.encode(emb, books), books).mse
    for a, b in [(1, 2), (2, 4), (4, 8)]:
        assert mse[b - 1] <= mse[a - 1] + 1e-12, f"mse[{b}] > mse[{a}]"

    # exact fit: N <= V at L = 1
    pts = rng.normal(size=(64, 32))
    books1 = rq.train_codebooks(pts, L=1, V=64, iters=10, seed=5)
    mse1 = rq.distortion(pts, rq.encode(pts, books1), books1).mse
    assert mse1[0] == pytest.approx(0.0, abs=1e-18)
    report(4, f"mse at L=1,2,4,8: {[round(mse[i - 1], 4) for i in (1, 2, 4, 8)]}; exact fit 0")


# ---------------------------------------------------------------------------
# criterion 9: metric implementations against brute-force oracles
# ---------------------------------------------------------------------------

def test_criterion_9_metric_oracles():
    rng = np.random.default_rng(9009)
    for trial in range(100):
        run, qrels = random_run_and_qrels(rng, n_queries=int(rng.integers(2, 10)),
                                          n_docs=int(rng.integers(5, 40)),
                                          graded=bool(rng.integers(2)))
        k = int(rng.integers(1, 20))
        assert abs(mrr_at_k(run, qrels, k).mean - brute_mrr(run, qrels, k)) <= 1e-12
        assert abs(recall_at_k(run, qrels, k).mean - brute_recall(run, qrels, k)) <= 1e-12
        assert abs(ndcg_at_k(run, qrels, k).mean - brute_ndcg(run, qrels, k)) <= 1e-12
    report(9, "mrr/recall/ndcg exact to 1e-12 on 100 randomized runs")


# ---------------------------------------------------------------------------
# criterion 10: bit-identical reproducibility of the whole pipeline
# ---------------------------------------------------------------------------

def run_cli_pipeline(run_dir, docs=120, train_q=120, dev_q=24, topics=6,
                     L=4, V=8, D=16, epochs=(1, 1, 1, 1, 1), seed=11, K=30):
    args_model = ["--D", str(D), "--L", str(L), "--V", str(V),
                  "--layers", "1", "--heads", "2", "--max-seq-len", "32"]
    assert cli_main(["synth", "--out", run_dir, "--docs", str(docs),
                     "--train-queries", str(train_q), "--dev-queries", str(dev_q),
                     "--topics", str(topics), "--seed", str(seed)]) == 0
    assert cli_main(["train", "--run", run_dir, "--stage", "m0",
                     "--epochs", str(epochs[0]), "--batch-size", "16",
                     "--seed", str(seed)] + args_model) == 0
    assert cli_main(["quantize", "--run", run_dir, "--L", str(L), "--V", str(V),
                     "--seed", str(seed)]) == 0
    for stage, ep in zip(("m1", "m2", "m3", "m4"), epochs[1:]):
        assert cli_main(["train", "--run", run_dir, "--stage", stage,
                         "--epochs", str(ep), "--batch-size", "16",
                         "--seed", str(seed)]) == 0
    assert cli_main(["retrieve", "--run", run_dir, "--split", "dev", "--K", str(K)]) == 0
    assert cli_main(["eval", "--run", run_dir,
                     "--run-file", os.path.join(run_dir, "run_dev_beam.trec")]) == 0
    assert cli_main(["report", "--run", run_dir, "--K", str(K),
                     "--checkpoints", ",".join(str(c) for c in (2, L))]) == 0


def test_criterion_10_bit_identical_reproducibility(tmp_path):
    d1, d2 = str(tmp_path / "runA"), str(tmp_path / "runB")
    run_cli_pipeline(d1)
    run_cli_pipeline(d2)
    compared = []
    for name in ("ckpt_m0.grck", "ckpt_m0rq.grck", "ckpt_m1.grck", "ckpt_m2.grck",
                 "ckpt_m3.grck", "ckpt_m4.grck", "docids.jsonl", "run_dev_beam.trec",
                 "metrics.json", "report.csv", "corpus.tsv", "teacher.json",
                 "distortion.json", "triples_m2.tsv", "pseudo_queries.tsv"):
        a = open(os.path.join(d1, name), "rb").read()
        b = open(os.path.join(d2, name), "rb").read()
        assert a == b, f"{name} differs between identical-seed runs"
        compared.append(name)
    report(10, f"{len(compared)} artifacts byte-identical across two runs")
