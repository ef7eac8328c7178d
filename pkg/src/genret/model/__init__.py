from genret.model.config import ModelConfig
from genret.model.params import init_params, param_shapes, zero_grads
from genret.model.network import (
    DecoderState,
    decode_bwd,
    decode_fwd,
    encode_bwd,
    encode_fwd,
    make_decoder_state,
)
from genret.model.scoring import (
    decode_hidden,
    dense_representation,
    dense_representations,
    encode,
    log_prob_score,
    prefix_score,
    prefix_score_from_hidden,
    step_score_terms,
)

__all__ = [
    "ModelConfig",
    "init_params",
    "param_shapes",
    "zero_grads",
    "encode_fwd",
    "encode_bwd",
    "decode_fwd",
    "decode_bwd",
    "DecoderState",
    "make_decoder_state",
    "encode",
    "decode_hidden",
    "dense_representation",
    "dense_representations",
    "prefix_score",
    "prefix_score_from_hidden",
    "step_score_terms",
    "log_prob_score",
]
