"""
Denoiser package
Parameters and the forward/backward pass of the structure-aware denoising network
"""

from .params import DenoiserParams, parameter_shapes
from .network import (
    DenoiserOutput,
    ForwardCache,
    backward,
    denoise,
    denoise_with_cache,
    fuse_graphs,
    rce_init,
    rce_layer,
    rel_attention,
    reldit_block,
    time_embedding,
)

__all__ = [
    "DenoiserParams",
    "parameter_shapes",
    "DenoiserOutput",
    "ForwardCache",
    "backward",
    "denoise",
    "denoise_with_cache",
    "fuse_graphs",
    "rce_init",
    "rce_layer",
    "rel_attention",
    "reldit_block",
    "time_embedding",
]
