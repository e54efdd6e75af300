from .config import ModelConfig
from .vocab import TokenizeError, Vocabulary, default_vocabulary, tokenize
from .model import (
    EmptyMaskError,
    PerceptionModel,
    segment_workspace,
    select_action,
)
from .fusion import FusionBlock, cross_attention_fuse

__all__ = [
    "EmptyMaskError", "FusionBlock", "ModelConfig", "PerceptionModel",
    "TokenizeError", "Vocabulary", "cross_attention_fuse",
    "default_vocabulary", "segment_workspace", "select_action", "tokenize",
]
