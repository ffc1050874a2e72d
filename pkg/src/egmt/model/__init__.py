"""Network definition: config, parameters, and the forward pass."""

from .config import ModelConfig
from .network import (
    ForwardTrace,
    align_entities,
    assemble_shared,
    cgha,
    channel_cross_attention,
    classify,
    encode_shallow,
    forward_full,
    from_tokens,
    reconstruct,
    to_tokens,
    token_self_attention,
)
from .params import ModelParams, init_params, trunc_normal

__all__ = [
    "ForwardTrace",
    "ModelConfig",
    "ModelParams",
    "align_entities",
    "assemble_shared",
    "cgha",
    "channel_cross_attention",
    "classify",
    "encode_shallow",
    "forward_full",
    "from_tokens",
    "init_params",
    "reconstruct",
    "to_tokens",
    "token_self_attention",
    "trunc_normal",
]
