from genret.training.losses import (
    AlphaSchedule,
    curriculum_checkpoints,
    dense_margin_batch,
    margin_mse_grad,
    margin_mse_loss,
    multi_objective_loss,
    prefix_rank_loss,
    rank_margin_batch,
    seq2seq_ce_batch,
    seq2seq_ce_loss,
)
from genret.training.mining import (
    NegativePool,
    TrainingTriple,
    load_triples,
    mine_negatives_beam,
    mine_negatives_bm25,
    mine_negatives_dense,
    sample_triples,
    write_triples,
)
from genret.training.optim import Adam, linear_schedule
from genret.training.stages import (
    StageConfig,
    finetune_initial,
    finetune_progressive,
    finetune_self_negatives,
    parse_stage_config,
    pretrain_seq2seq,
    train_dense_stage,
)

__all__ = [
    "AlphaSchedule",
    "curriculum_checkpoints",
    "margin_mse_loss",
    "margin_mse_grad",
    "prefix_rank_loss",
    "multi_objective_loss",
    "seq2seq_ce_loss",
    "dense_margin_batch",
    "rank_margin_batch",
    "seq2seq_ce_batch",
    "TrainingTriple",
    "NegativePool",
    "mine_negatives_bm25",
    "mine_negatives_dense",
    "mine_negatives_beam",
    "sample_triples",
    "write_triples",
    "load_triples",
    "Adam",
    "linear_schedule",
    "StageConfig",
    "parse_stage_config",
    "train_dense_stage",
    "pretrain_seq2seq",
    "finetune_initial",
    "finetune_progressive",
    "finetune_self_negatives",
]
