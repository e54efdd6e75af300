"""Model configuration for the perception network."""

from __future__ import annotations

from dataclasses import asdict, dataclass


ADAPTER_TYPES = ("dora", "lora", "ia3", "none")
FUSION_TYPES = ("cross-attention", "transformer")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 64            # D
    num_heads: int = 1
    head_dim: int = 0              # d_h; 0 means embed_dim // num_heads
    depth: int = 2                 # self-attention blocks per tower
    patch_size: int = 8            # ps
    image_size: int = 112          # H = W (model input, after center crop)
    vocab_size: int = 0            # 0 means "use the shipped vocabulary size"
    max_text_len: int = 24         # T
    dora_rank: int = 4             # r
    adapter: str = "dora"
    fusion: str = "cross-attention"
    mlp_ratio: int = 2
    seed: int = 7

    def __post_init__(self):
        if self.embed_dim <= 0 or self.depth <= 0 or self.num_heads <= 0:
            raise ValueError("embed_dim, depth and num_heads must be positive")
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by "
                             f"num_heads {self.num_heads}")
        hd = self.head_dim or self.embed_dim // self.num_heads
        if hd * self.num_heads != self.embed_dim:
            raise ValueError(f"head_dim {hd} x num_heads {self.num_heads} != "
                             f"embed_dim {self.embed_dim}")
        object.__setattr__(self, "head_dim", hd)
        if self.image_size % self.patch_size != 0:
            raise ValueError(f"image size {self.image_size} not divisible by "
                             f"patch size {self.patch_size}")
        if self.dora_rank <= 0:
            raise ValueError("dora_rank must be positive")
        if self.adapter not in ADAPTER_TYPES:
            raise ValueError(f"adapter must be one of {ADAPTER_TYPES}")
        if self.fusion not in FUSION_TYPES:
            raise ValueError(f"fusion must be one of {FUSION_TYPES}")

    @property
    def grid_side(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_side ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * 4   # RGB-D patches

    def upsample_factors(self) -> tuple[int, ...]:
        """Per-stage upsampling factors whose product is the patch size."""
        factors, rem = [], self.patch_size
        while rem > 1:
            f = 2 if rem % 2 == 0 else rem
            factors.append(f)
            rem //= f
        return tuple(factors)

    def to_record(self) -> dict:
        return asdict(self)

    @classmethod
    def from_record(cls, rec: dict) -> "ModelConfig":
        return cls(**rec)
