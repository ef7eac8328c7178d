"""Command-line orchestration of the full pipeline.

Subcommands: synth, quantize, train, retrieve, eval, report. Every command
is deterministic given its flags and seeds, appends an entry to the run
directory's manifest.json (config snapshot, outputs, wall clock), and all
hyperparameters follow flag > config-file > default precedence.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 numerical failure. GENRET_THREADS caps BLAS thread counts (applied before
numpy loads, only where the standard env vars are not already set).
"""

import argparse
import json
import os
import sys
import time


def _apply_thread_env():
    n = os.environ.get("GENRET_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        sys.exit(1)


def _manifest_append(run_dir, command, config, outputs, wall_clock_s):
    """Record a command in the run manifest; every output must exist."""
    for p in outputs:
        if not os.path.exists(p):
            raise RuntimeError(f"manifest output missing: {p}")
    path = os.path.join(run_dir, "manifest.json")
    entries = []
    if os.path.exists(path):
        with open(path, encoding="utf-8") as f:
            entries = json.load(f)
    entries.append(
        {
            "command": command,
            "config": config,
            "outputs": [os.path.relpath(p, run_dir) for p in outputs],
            "wall_clock_s": round(wall_clock_s, 3),
        }
    )
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(entries, f, indent=2)
    os.replace(tmp, path)


def _p(run_dir, name):
    return os.path.join(run_dir, name)


def _write_log(run_dir, name, lines):
    os.makedirs(_p(run_dir, "logs"), exist_ok=True)
    path = _p(run_dir, os.path.join("logs", name))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    return path


def _load_run_data(run_dir, split=None):
    from genret.corpus import load_corpus, load_qrels, load_queries, load_teacher

    corpus = load_corpus(_p(run_dir, "corpus.tsv"))
    teacher = load_teacher(_p(run_dir, "teacher.json"))
    out = {"corpus": corpus, "teacher": teacher}
    for s in ("train", "dev") if split is None else (split,):
        out[f"queries_{s}"] = load_queries(_p(run_dir, f"queries_{s}.tsv"), corpus)
        out[f"qrels_{s}"] = load_qrels(_p(run_dir, f"qrels_{s}.txt"), set(corpus.doc_ids))
    return out


def _load_docid_map(run_dir):
    from genret.errors import DataFormatError

    path = _p(run_dir, "docids.jsonl")
    docid_map = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "doc_id" not in obj or "codes" not in obj:
                raise DataFormatError(f"{path}:{lineno}: missing doc_id/codes")
            docid_map[obj["doc_id"]] = tuple(int(c) for c in obj["codes"])
    return docid_map


def cmd_synth(args):
    from genret.corpus import (
        generate_synthetic_corpus,
        save_teacher,
        write_corpus,
        write_qrels,
        write_queries,
    )
    from genret.errors import ConfigurationError

    t0 = time.monotonic()
    run_dir = args.out
    if os.path.exists(run_dir) and os.listdir(run_dir) and not args.force:
        raise ConfigurationError(f"output dir {run_dir} exists; pass --force to overwrite")
    os.makedirs(run_dir, exist_ok=True)

    n_queries = args.train_queries + args.dev_queries
    corpus, queries, qrels, teacher = generate_synthetic_corpus(
        args.docs, n_queries, args.topics, dim=args.latent_dim, seed=args.seed
    )
    splits = {"train": queries[: args.train_queries], "dev": queries[args.train_queries :]}
    outputs = [_p(run_dir, "corpus.tsv"), _p(run_dir, "teacher.json")]
    write_corpus(outputs[0], corpus)
    save_teacher(outputs[1], teacher)
    for name, qs in splits.items():
        qpath = _p(run_dir, f"queries_{name}.tsv")
        rpath = _p(run_dir, f"qrels_{name}.txt")
        write_queries(qpath, qs)
        write_qrels(rpath, {q.query_id: qrels[q.query_id] for q in qs})
        outputs += [qpath, rpath]

    _manifest_append(
        run_dir, "synth",
        {k: getattr(args, k) for k in ("docs", "train_queries", "dev_queries", "topics", "latent_dim", "seed")},
        outputs, time.monotonic() - t0,
    )
    print(f"synth: {len(corpus)} docs, {args.train_queries}+{args.dev_queries} queries -> {run_dir}")
    return 0


def _resize_for_docids(params, cfg, L, V, seed):
    """Rebuild the docid-dependent arrays for a new (L, V). Trained weights
    carry over; dec_pos keeps its trained rows where they overlap."""
    import numpy as np

    from genret.model.config import ModelConfig
    from genret.model.params import init_params

    new_cfg = ModelConfig(
        D=cfg.D, L=L, V=V, n_layers=cfg.n_layers, n_heads=cfg.n_heads,
        token_vocab=cfg.token_vocab, max_seq_len=cfg.max_seq_len, d_ff=cfg.d_ff,
    )
    if (L, V) == (cfg.L, cfg.V):
        return params, new_cfg
    fresh = init_params(new_cfg, seed)
    keep = min(cfg.L, L)
    fresh["dec_pos"][:keep] = params["dec_pos"][:keep]
    for name, arr in params.items():
        if name not in ("docid_emb", "dec_pos"):
            fresh[name] = arr
    return fresh, new_cfg


def cmd_quantize(args):
    import numpy as np

    from genret import rq
    from genret.checkpoint import load_checkpoint, require_stage, save_checkpoint
    from genret.model.scoring import dense_representations

    t0 = time.monotonic()
    run_dir = args.run
    ckpt = args.ckpt or _p(run_dir, "ckpt_m0.grck")
    params, cfg, stage, _ = load_checkpoint(ckpt)
    require_stage(stage, "m0", ckpt)
    data = _load_run_data(run_dir, split="train")
    corpus = data["corpus"]

    params, cfg = _resize_for_docids(params, cfg, args.L, args.V, args.seed)
    vectors = dense_representations(params, cfg, [d.tokens for d in corpus.docs])
    books = rq.train_codebooks(vectors, cfg.L, cfg.V, iters=args.iters, seed=args.seed)
    docid_map = rq.assign_docids(corpus.doc_ids, vectors, books)
    assert len(set(docid_map.values())) == len(docid_map), "docid uniqueness violated"

    docids_path = _p(run_dir, "docids.jsonl")
    with open(docids_path, "w", encoding="utf-8") as f:
        for did in corpus.doc_ids:
            f.write(json.dumps({"doc_id": did, "codes": list(docid_map[did])}) + "\n")

    nearest = rq.encode(vectors, books)
    assigned = np.array([docid_map[d] for d in corpus.doc_ids], dtype=np.int64)
    rep_nearest = rq.distortion(vectors, nearest, books)
    rep_assigned = rq.distortion(vectors, assigned, books)
    dist_path = _p(run_dir, "distortion.json")
    with open(dist_path, "w", encoding="utf-8") as f:
        json.dump(
            {
                "nearest": {"mse": rep_nearest.mse},
                "assigned": {"mse": rep_assigned.mse},
                "utilization": rep_assigned.utilization.tolist(),
            },
            f, indent=2,
        )

    params["docid_emb"] = books.books.copy()
    out_ckpt = _p(run_dir, "ckpt_m0rq.grck")
    save_checkpoint(out_ckpt, params, cfg, "m0rq", args.seed)
    _manifest_append(
        run_dir, "quantize",
        {"ckpt": ckpt, "L": cfg.L, "V": cfg.V, "iters": args.iters, "seed": args.seed},
        [docids_path, dist_path, out_ckpt], time.monotonic() - t0,
    )
    print(f"quantize: L={cfg.L} V={cfg.V}, assigned {len(docid_map)} unique docids")
    return 0


def _stage_cfg_from_args(args, stage):
    from genret.training import parse_stage_config
    from genret.training.stages import make_stage_config

    file_values = parse_stage_config(args.config) if args.config else None
    checkpoints = None
    if args.checkpoints:
        checkpoints = tuple(int(x) for x in args.checkpoints.split(","))
    return make_stage_config(
        stage, file_values,
        lr=args.lr, epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        beta=args.beta, k_neg=args.k_neg, checkpoints=checkpoints,
    )


def _pseudo_pairs(run_dir, corpus, n_per_doc, seed):
    """Load the pseudo-query file, generating it first if absent."""
    from genret.corpus import generate_pseudo_queries, load_pseudo_queries, write_pseudo_queries

    path = _p(run_dir, "pseudo_queries.tsv")
    if not os.path.exists(path):
        pairs = []
        for doc in corpus.docs:
            for q in generate_pseudo_queries(doc, n_per_doc, seed, corpus.vocab):
                pairs.append((doc.doc_id, q.raw))
        write_pseudo_queries(path, pairs)
    loaded = load_pseudo_queries(path)
    return [(corpus.map_tokens(text.split()), did) for did, text in loaded], path


def cmd_train(args):
    from genret.checkpoint import load_checkpoint, save_checkpoint
    from genret.errors import ConfigurationError
    from genret.model.config import ModelConfig
    from genret.model.params import init_params
    from genret.search import build_trie
    from genret.training import (
        finetune_initial,
        finetune_progressive,
        finetune_self_negatives,
        mine_negatives_beam,
        mine_negatives_dense,
        pretrain_seq2seq,
        sample_triples,
        train_dense_stage,
        write_triples,
    )

    t0 = time.monotonic()
    run_dir = args.run
    stage = args.stage
    scfg = _stage_cfg_from_args(args, stage)
    data = _load_run_data(run_dir, split="train")
    corpus, teacher = data["corpus"], data["teacher"]
    queries, qrels = data["queries_train"], data["qrels_train"]
    queries_by_id = {q.query_id: q for q in queries}
    log = []
    outputs = []
    predecessors = {"m1": "m0rq", "m2": "m1", "m3": "m2", "m4": "m3"}

    if stage == "m0":
        cfg = ModelConfig(
            D=args.D, L=args.L, V=args.V, n_layers=args.layers, n_heads=args.heads,
            token_vocab=len(corpus.vocab), max_seq_len=args.max_seq_len, d_ff=args.d_ff,
        )
        params = init_params(cfg, scfg.seed)
        params = train_dense_stage(params, cfg, corpus, queries, qrels, teacher, scfg,
                                   stage_in="init", log=log)
    else:
        pred_tag = predecessors[stage]
        ckpt_in = args.ckpt or _p(run_dir, f"ckpt_{pred_tag}.grck")
        if not os.path.exists(ckpt_in):
            raise ConfigurationError(
                f"stage {stage} needs predecessor checkpoint {ckpt_in} (run its stage first)"
            )
        params, cfg, tag, _ = load_checkpoint(ckpt_in)

        if stage == "m1":
            pairs, pq_path = _pseudo_pairs(run_dir, corpus, args.pseudo_per_doc, scfg.seed)
            outputs.append(pq_path)
            docid_map = _load_docid_map(run_dir)
            params = pretrain_seq2seq(params, cfg, pairs, docid_map, scfg,
                                      stage_in=tag, log=log)
        else:
            docid_map = _load_docid_map(run_dir)
            pool_r = None
            if stage in ("m2", "m3"):
                params_m0, cfg_m0, _, _ = load_checkpoint(_p(run_dir, "ckpt_m0rq.grck"))
                pool_r = mine_negatives_dense(params_m0, cfg_m0, corpus, queries, qrels,
                                              scfg.k_neg)
            if stage == "m2":
                if pool_r.skipped:
                    log.append(f"# warning: {pool_r.skipped} queries without positives")
                triples_path = _p(run_dir, "triples_m2.tsv")
                write_triples(triples_path, sample_triples(pool_r, teacher, scfg.seed, 2000))
                outputs.append(triples_path)
                params = finetune_initial(params, cfg, pool_r, teacher, queries_by_id,
                                          docid_map, scfg, stage_in=tag, log=log)
            elif stage == "m3":
                trie = build_trie(docid_map)
                pool_b = mine_negatives_beam(params, cfg, trie, queries, qrels, scfg.k_neg)
                params = finetune_progressive(params, cfg, pool_r, pool_b, teacher,
                                              queries_by_id, docid_map, scfg, stage_in=tag,
                                              variant=args.m3_variant, log=log)
            elif stage == "m4":
                trie = build_trie(docid_map)
                pool_self = mine_negatives_beam(params, cfg, trie, queries, qrels, scfg.k_neg)
                params = finetune_self_negatives(params, cfg, pool_self, teacher,
                                                 queries_by_id, docid_map, scfg,
                                                 stage_in=tag, log=log)
            else:
                raise ConfigurationError(f"unknown stage {stage!r}")

    out_ckpt = _p(run_dir, f"ckpt_{stage}.grck")
    save_checkpoint(out_ckpt, params, cfg, stage, scfg.seed)
    outputs.append(out_ckpt)
    outputs.append(_write_log(run_dir, f"train_{stage}.log", log))
    _manifest_append(
        run_dir, f"train:{stage}",
        {"stage": stage, "lr": scfg.lr, "epochs": scfg.epochs, "batch_size": scfg.batch_size,
         "seed": scfg.seed, "beta": scfg.beta, "k_neg": scfg.k_neg,
         "checkpoints": list(scfg.checkpoints)},
        outputs, time.monotonic() - t0,
    )
    print(f"train {stage}: wrote {out_ckpt}")
    return 0


def cmd_retrieve(args):
    from genret.checkpoint import load_checkpoint
    from genret.evaluation import write_run
    from genret.search import beam_search, brute_force_rank, build_trie

    t0 = time.monotonic()
    run_dir = args.run
    ckpt = args.ckpt or _p(run_dir, "ckpt_m4.grck")
    params, cfg, stage, _ = load_checkpoint(ckpt)
    data = _load_run_data(run_dir, split=args.split)
    queries = data[f"queries_{args.split}"]
    docid_map = _load_docid_map(run_dir)
    trie = build_trie(docid_map)

    method = "brute" if args.brute_force else "beam"
    run = {}
    timing = []
    for q in queries:
        tq = time.monotonic()
        if args.brute_force:
            ranked = brute_force_rank(params, cfg, q.tokens, docid_map)[: args.K]
        else:
            ranked = beam_search(params, cfg, q.tokens, trie, args.K)
        run[q.query_id] = ranked
        timing.append(f"{q.query_id} {time.monotonic() - tq:.4f}s")

    out = args.out or _p(run_dir, f"run_{args.split}_{method}.trec")
    write_run(out, run, tag=f"genret-{method}")
    log_path = _write_log(run_dir, f"retrieve_{args.split}_{method}.log", timing)
    _manifest_append(
        run_dir, "retrieve",
        {"ckpt": ckpt, "stage": stage, "split": args.split, "K": args.K, "method": method},
        [out, log_path], time.monotonic() - t0,
    )
    print(f"retrieve: {len(run)} queries -> {out}")
    return 0


def cmd_eval(args):
    from genret.corpus import load_qrels
    from genret.evaluation import metrics_to_json, mrr_at_k, ndcg_at_k, read_run, recall_at_k

    t0 = time.monotonic()
    run_dir = args.run
    run_path = args.run_file or _p(run_dir, "run_dev_beam.trec")
    qrels_path = args.qrels or _p(run_dir, "qrels_dev.txt")
    run = read_run(run_path)
    qrels = load_qrels(qrels_path)
    only_run = [q for q in run if q not in qrels]
    only_qrels = [q for q in qrels if q not in run]
    if only_run or only_qrels:
        print(f"warning: {len(only_run)} run queries unjudged, "
              f"{len(only_qrels)} judged queries missing from run", file=sys.stderr)
    reports = [mrr_at_k(run, qrels, args.k), recall_at_k(run, qrels, args.k),
               ndcg_at_k(run, qrels, args.k)]
    out = args.out or _p(run_dir, "metrics.json")
    metrics_to_json(out, reports)
    for r in reports:
        print(f"{r.name}: {r.mean:.4f} over {r.n_queries} queries ({r.n_excluded} excluded)")
    _manifest_append(run_dir, "eval", {"run_file": run_path, "qrels": qrels_path, "k": args.k},
                     [out], time.monotonic() - t0)
    return 0


def cmd_report(args):
    from genret.checkpoint import load_checkpoint
    from genret.evaluation import mrr_at_k, prefix_survival, recall_at_k
    from genret.search import brute_force_rank, build_trie
    from genret.training import curriculum_checkpoints

    t0 = time.monotonic()
    run_dir = args.run
    ckpt = args.ckpt or _p(run_dir, "ckpt_m4.grck")
    params, cfg, _, _ = load_checkpoint(ckpt)
    data = _load_run_data(run_dir, split=args.split)
    queries = data[f"queries_{args.split}"]
    qrels = data[f"qrels_{args.split}"]
    docid_map = _load_docid_map(run_dir)
    trie = build_trie(docid_map)
    if args.checkpoints:
        cps = [int(x) for x in args.checkpoints.split(",")]
    else:
        cps = curriculum_checkpoints(cfg.L)

    survival = prefix_survival(params, cfg, trie, docid_map, queries, qrels, args.K, cps)
    rows = []
    for i in cps:
        run_i = {q.query_id: brute_force_rank(params, cfg, q.tokens, docid_map,
                                              prefix_len=i)[: args.K]
                 for q in queries}
        mrr = mrr_at_k(run_i, qrels, 10).mean
        rec = recall_at_k(run_i, qrels, 10).mean
        rows.append((i, mrr, rec, survival[i]))

    out = args.out or _p(run_dir, "report.csv")
    with open(out, "w", encoding="utf-8") as f:
        f.write("prefix_len,mrr@10,recall@10,survival\n")
        for i, mrr, rec, surv in rows:
            f.write(f"{i},{mrr:.6f},{rec:.6f},{surv:.6f}\n")
    _manifest_append(run_dir, "report",
                     {"ckpt": ckpt, "K": args.K, "checkpoints": cps, "split": args.split},
                     [out], time.monotonic() - t0)
    print(f"report: {len(rows)} prefix lengths -> {out}")
    return 0


def build_parser():
    parser = _Parser(prog="genret", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus with an oracle teacher")
    p.add_argument("--out", required=True)
    p.add_argument("--docs", type=int, default=1000)
    p.add_argument("--train-queries", type=int, default=1000)
    p.add_argument("--dev-queries", type=int, default=100)
    p.add_argument("--topics", type=int, default=20)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("quantize", help="train codebooks and assign unique docids")
    p.add_argument("--run", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--L", type=int, default=32)
    p.add_argument("--V", type=int, default=256)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_quantize)

    p = sub.add_parser("train", help="run one pipeline stage")
    p.add_argument("--run", required=True)
    p.add_argument("--stage", required=True, choices=["m0", "m1", "m2", "m3", "m4"])
    p.add_argument("--config", default=None, help="stage config file (key = value)")
    p.add_argument("--ckpt", default=None, help="override predecessor checkpoint path")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--k-neg", type=int, default=None)
    p.add_argument("--checkpoints", default=None, help="comma-separated prefix checkpoints")
    p.add_argument("--m3-variant", default="multi",
                   choices=["multi", "no_retention", "plain_full"])
    p.add_argument("--pseudo-per-doc", type=int, default=10)
    p.add_argument("--D", type=int, default=64)
    p.add_argument("--L", type=int, default=32)
    p.add_argument("--V", type=int, default=256)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--d-ff", type=int, default=0)
    p.add_argument("--max-seq-len", type=int, default=64)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("retrieve", help="run constrained beam search over a query split")
    p.add_argument("--run", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--split", default="dev", choices=["train", "dev"])
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--brute-force", action="store_true",
                   help="exhaustive exact scoring instead of beam search")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_retrieve)

    p = sub.add_parser("eval", help="score a run file against qrels")
    p.add_argument("--run", required=True)
    p.add_argument("--run-file", default=None)
    p.add_argument("--qrels", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="metric-vs-prefix-length and survival curves (CSV)")
    p.add_argument("--run", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--split", default="dev", choices=["train", "dev"])
    p.add_argument("--K", type=int, default=100)
    p.add_argument("--checkpoints", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None):
    _apply_thread_env()
    parser = build_parser()
    args = parser.parse_args(argv)
    from genret.errors import ConfigurationError, DataFormatError, NumericalError

    try:
        return args.fn(args)
    except ConfigurationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
