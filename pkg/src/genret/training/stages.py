"""Five-stage optimization pipeline.

  m0  dense fine-tuning of the encoder-decoder as a dense retriever, first
      on BM25-mined negatives, then on self-retrieved dense negatives
  m1  seq2seq pretraining on (pseudo query -> docid) pairs
  m2  initial rank fine-tuning at full docid length on dense-mined triples
  m3  progressive prefix training over the curriculum checkpoints with the
      multi-objective retention loss, on dense- plus beam-mined triples
  m4  self-negative fine-tuning: multi-objective at full length on triples
      beam-mined from the m3 model itself

Each stage validates the tag of the checkpoint it consumes and refuses
anything but its predecessor. Stages mutate ``params`` in place and return
them; non-finite losses abort with NumericalError. ``log`` collects one
"step loss lr" line per step plus a per-epoch summary.

Stage config files are plain ``key = value`` text; recognized keys:
stage, lr, epochs, batch_size, seed, checkpoints, beta, K_neg.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from genret.checkpoint import require_stage
from genret.corpus.bm25 import BM25Index
from genret.errors import ConfigurationError, NumericalError
from genret.model.config import ModelConfig
from genret.model.params import zero_grads
from genret.model.scoring import dense_representations
from genret.training.losses import (
    AlphaSchedule,
    curriculum_checkpoints,
    dense_margin_batch,
    rank_margin_batch,
    seq2seq_ce_batch,
)
from genret.training.mining import (
    mine_negatives_bm25,
    mine_negatives_dense,
    sample_triples,
)
from genret.training.optim import Adam, clip_grads, linear_schedule


@dataclass
class StageConfig:
    stage: str
    lr: float = 1e-3
    epochs: int = 3
    batch_size: int = 32
    seed: int = 0
    checkpoints: tuple = (4, 8, 16, 32)
    beta: float = 2.0
    k_neg: int = 100
    warmup_ratio: float = 0.045
    clip_norm: float = 1.0


_KEY_PARSERS = {
    "stage": str,
    "lr": float,
    "epochs": int,
    "batch_size": int,
    "seed": int,
    "checkpoints": lambda s: tuple(int(x) for x in s.split(",") if x.strip()),
    "beta": float,
    "k_neg": int,
    "warmup_ratio": float,
    "clip_norm": float,
}


def parse_stage_config(path) -> dict:
    """Parse a key=value stage-config file (``#`` starts a comment)."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key not in _KEY_PARSERS:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[key] = _KEY_PARSERS[key](value.strip())
            except ValueError:
                raise ConfigurationError(f"{path}:{lineno}: bad value for {key!r}")
    return out


def make_stage_config(stage: str, file_values: dict = None, **overrides) -> StageConfig:
    """Precedence: explicit overrides > config file > defaults."""
    cfg = StageConfig(stage=stage)
    if file_values:
        cfg = replace(cfg, **{k: v for k, v in file_values.items() if k != "stage"})
    clean = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **clean)


def _log(log, line):
    if log is not None:
        log.append(line)


def _fit(params, cfg: ModelConfig, scfg: StageConfig, epoch_items, step_fn, log,
         epochs=None, epoch_offset=0, step_offset=0, total_steps=None):
    """Generic epoch/batch loop.

    epoch_items(epoch) -> list of training items (re-sampled per epoch);
    step_fn(items, grads) -> loss. Returns (per-epoch mean losses, steps run).
    """
    epochs = scfg.epochs if epochs is None else epochs
    first = epoch_items(epoch_offset)
    if not first:
        raise ConfigurationError("no training items (all queries skipped?)")
    steps_per_epoch = math.ceil(len(first) / scfg.batch_size)
    if total_steps is None:
        total_steps = steps_per_epoch * epochs
    adam = Adam(lr=scfg.lr)
    sched = linear_schedule(total_steps, scfg.warmup_ratio)
    step = step_offset
    epoch_means = []
    for e in range(epochs):
        items = first if e == 0 else epoch_items(epoch_offset + e)
        order = np.random.default_rng([scfg.seed, 7919, epoch_offset + e]).permutation(len(items))
        losses = []
        for lo in range(0, len(items), scfg.batch_size):
            batch = [items[i] for i in order[lo : lo + scfg.batch_size]]
            grads = zero_grads(params)
            loss = step_fn(batch, grads)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss {loss} at step {step}")
            clip_grads(grads, scfg.clip_norm)
            lr_scale = sched(step)
            adam.step(params, grads, lr_scale)
            _log(log, f"{step} {loss:.6f} {scfg.lr * lr_scale:.6g}")
            losses.append(loss)
            step += 1
        mean = float(np.mean(losses))
        epoch_means.append(mean)
        _log(log, f"# epoch {epoch_offset + e} mean_loss {mean:.6f} items {len(items)}")
    return epoch_means, step - step_offset


def _margin_step(params, cfg, corpus, queries_by_id):
    def step_fn(triples, grads):
        q = [queries_by_id[t.query_id].tokens for t in triples]
        p = [corpus.get(t.pos_doc_id).tokens for t in triples]
        n = [corpus.get(t.neg_doc_id).tokens for t in triples]
        m = [t.margin for t in triples]
        return dense_margin_batch(params, cfg, q, p, n, m, grads)
    return step_fn


def train_dense_stage(params, cfg: ModelConfig, corpus, queries, qrels, teacher,
                      scfg: StageConfig, stage_in: str = "init", log=None):
    """Stage m0: dense margin regression; sub-stage (a) uses BM25 negatives,
    sub-stage (b) re-mines with the model's own dense retrieval. Each
    sub-stage runs ``epochs`` epochs."""
    require_stage(stage_in, "init")
    queries_by_id = {q.query_id: q for q in queries}
    step_fn = _margin_step(params, cfg, corpus, queries_by_id)

    bm25 = BM25Index(corpus)
    pool_a = mine_negatives_bm25(bm25, queries, qrels, scfg.k_neg)
    if pool_a.skipped:
        _log(log, f"# warning: {pool_a.skipped} queries without positives skipped")
    _log(log, "# m0 sub-stage a: bm25 negatives")
    _fit(params, cfg, scfg, lambda e: sample_triples(pool_a, teacher, scfg.seed, e),
         step_fn, log)

    doc_vectors = dense_representations(params, cfg, [d.tokens for d in corpus.docs])
    pool_b = mine_negatives_dense(params, cfg, corpus, queries, qrels, scfg.k_neg,
                                  doc_vectors=doc_vectors)
    _log(log, "# m0 sub-stage b: dense self-retrieved negatives")
    _fit(params, cfg, scfg, lambda e: sample_triples(pool_b, teacher, scfg.seed, 1000 + e),
         step_fn, log, epoch_offset=scfg.epochs)
    return params


def pretrain_seq2seq(params, cfg: ModelConfig, pseudo_pairs, docid_map,
                     scfg: StageConfig, stage_in: str = "m0rq", log=None):
    """Stage m1: cross-entropy from pseudo queries to docids.

    pseudo_pairs: list of (token sequence, doc_id)."""
    require_stage(stage_in, "m0rq")
    items = [(tokens, docid_map[did]) for tokens, did in pseudo_pairs if tokens]
    if len(items) < len(pseudo_pairs):
        _log(log, f"# warning: dropped {len(pseudo_pairs) - len(items)} empty pseudo queries")

    def step_fn(batch, grads):
        q = [b[0] for b in batch]
        t = [b[1] for b in batch]
        return seq2seq_ce_batch(params, cfg, q, t, grads)

    _log(log, "# m1 seq2seq pretraining")
    _fit(params, cfg, scfg, lambda e: items, step_fn, log)
    return params


def _rank_step(params, cfg, queries_by_id, docid_map, terms):
    def step_fn(triples, grads):
        q = [queries_by_id[t.query_id].tokens for t in triples]
        p = [docid_map[t.pos_doc_id] for t in triples]
        n = [docid_map[t.neg_doc_id] for t in triples]
        m = [t.margin for t in triples]
        return rank_margin_batch(params, cfg, q, p, n, m, terms, grads)
    return step_fn


def finetune_initial(params, cfg: ModelConfig, pool_r, teacher, queries_by_id, docid_map,
                     scfg: StageConfig, stage_in: str = "m1", log=None):
    """Stage m2: full-length rank loss only (alpha_L = 1), on dense-mined
    triples."""
    require_stage(stage_in, "m1")
    schedule = AlphaSchedule(scfg.beta, cfg.L)
    terms = [(cfg.L, schedule.alpha(cfg.L))]
    _log(log, "# m2 initial rank fine-tuning (full length)")
    _fit(params, cfg, scfg,
         lambda e: sample_triples(pool_r, teacher, scfg.seed, 2000 + e),
         _rank_step(params, cfg, queries_by_id, docid_map, terms), log)
    return params


def _phase_epochs(total_epochs: int, n_phases: int) -> list:
    """Split a stage's epoch budget equally; remainder goes to the later
    phases; every phase gets at least one epoch."""
    base = total_epochs // n_phases
    rem = total_epochs % n_phases
    return [max(1, base + (1 if i >= n_phases - rem else 0)) for i in range(n_phases)]


def finetune_progressive(params, cfg: ModelConfig, pool_r, pool_b, teacher, queries_by_id,
                         docid_map, scfg: StageConfig, stage_in: str = "m2",
                         variant: str = "multi", log=None):
    """Stage m3: curriculum over prefix checkpoints, shortest to longest,
    on the union of dense- and beam-mined triples.

    variant:
      "multi"         multi-objective loss (retention terms) at each phase
      "no_retention"  progressive but only the current checkpoint's term
      "plain_full"    full-length-only training, no prefix curriculum
    """
    require_stage(stage_in, "m2")
    schedule = AlphaSchedule(scfg.beta, cfg.L)
    cps = curriculum_checkpoints(cfg.L, scfg.checkpoints)
    if variant == "multi":
        phases = [(i, [(k, schedule.alpha(k)) for k in cps if k <= i]) for i in cps]
    elif variant == "no_retention":
        phases = [(i, [(i, schedule.alpha(i))]) for i in cps]
    elif variant == "plain_full":
        phases = [(cfg.L, [(cfg.L, schedule.alpha(cfg.L))])]
    else:
        raise ConfigurationError(f"unknown progressive variant {variant!r}")

    def epoch_items(e):
        return (
            sample_triples(pool_r, teacher, scfg.seed, 3000 + e)
            + sample_triples(pool_b, teacher, scfg.seed, 4000 + e)
        )

    budget = _phase_epochs(scfg.epochs, len(phases))
    offset = 0
    for (i, terms), n_ep in zip(phases, budget):
        _log(log, f"# m3 phase i={i} ({variant}) epochs={n_ep}")
        _fit(params, cfg, scfg, epoch_items,
             _rank_step(params, cfg, queries_by_id, docid_map, terms),
             log, epochs=n_ep, epoch_offset=offset)
        offset += n_ep
    return params


def finetune_self_negatives(params, cfg: ModelConfig, pool_bself, teacher, queries_by_id,
                            docid_map, scfg: StageConfig, stage_in: str = "m3", log=None):
    """Stage m4: multi-objective loss in the full-length setting on
    self-mined beam negatives."""
    require_stage(stage_in, "m3")
    schedule = AlphaSchedule(scfg.beta, cfg.L)
    cps = curriculum_checkpoints(cfg.L, scfg.checkpoints)
    terms = [(k, schedule.alpha(k)) for k in cps]
    _log(log, "# m4 self-negative fine-tuning (full length, multi-objective)")
    _fit(params, cfg, scfg,
         lambda e: sample_triples(pool_bself, teacher, scfg.seed, 5000 + e),
         _rank_step(params, cfg, queries_by_id, docid_map, terms), log)
    return params
