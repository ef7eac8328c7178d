"""Model hyperparameters."""

from dataclasses import dataclass, asdict

from genret.errors import ConfigurationError


@dataclass(frozen=True)
class ModelConfig:
    """Shape parameters of the encoder-decoder scorer.

    D is the embedding/hidden width, L the docid length, V the docid code
    vocabulary. ``token_vocab`` is the natural-language vocabulary size and
    ``d_ff`` the feed-forward inner width.
    """

    D: int = 64
    L: int = 32
    V: int = 256
    n_layers: int = 2
    n_heads: int = 2
    token_vocab: int = 1000
    max_seq_len: int = 64
    d_ff: int = 0  # 0 -> 2*D

    def __post_init__(self):
        if self.D % self.n_heads != 0:
            raise ConfigurationError(f"D={self.D} not divisible by n_heads={self.n_heads}")
        if self.L < 1:
            raise ConfigurationError(f"L must be >= 1, got {self.L}")
        if self.V < 2:
            raise ConfigurationError(f"V must be >= 2, got {self.V}")
        if self.token_vocab < 1 or self.max_seq_len < 1:
            raise ConfigurationError("token_vocab and max_seq_len must be positive")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 2 * self.D)

    @property
    def head_dim(self) -> int:
        return self.D // self.n_heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
