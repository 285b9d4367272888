from __future__ import annotations

from dataclasses import asdict, dataclass, fields


class ConfigurationError(ValueError):
    """Network configuration or input shapes are inconsistent."""


@dataclass(frozen=True)
class NetworkConfig:
    # (filters, kernel, stride) per encoder level
    conv_layers: tuple[tuple[int, int, int], ...] = ((32, 3, 2), (64, 3, 2), (128, 3, 1))
    recurrent_kernel: int = 3
    critic_filters: tuple[int, ...] = (32, 64, 128)
    attention_rescale: float = 5.0
    use_holiday_bits: bool = True
    loss_weights: tuple[float, float, float] = (50.0, 1.0, 1.0)
    adversarial: str = "feature_matching"
    gp_coefficient: float = 10.0
    critic_iters: int = 5
    learning_rate: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.9)
    epochs: int = 300
    batch_size: int = 32
    seed: int = 0
    deterministic: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "conv_layers", tuple(tuple(int(v) for v in lay) for lay in self.conv_layers))
        object.__setattr__(self, "critic_filters", tuple(int(v) for v in self.critic_filters))
        object.__setattr__(self, "loss_weights", tuple(float(v) for v in self.loss_weights))
        object.__setattr__(self, "betas", tuple(float(v) for v in self.betas))
        if not self.conv_layers or any(len(lay) != 3 or min(lay) < 1 for lay in self.conv_layers):
            raise ConfigurationError(f"conv_layers must be non-empty (filters, kernel, stride) triples: {self.conv_layers}")
        if len(self.critic_filters) < 1:
            raise ConfigurationError("critic needs at least one convolutional layer")
        w = self.loss_weights
        if len(w) != 3 or min(w) < 0 or max(w) == 0:
            raise ConfigurationError(f"loss weights must be three non-negative values, not all zero: {w}")
        if self.gp_coefficient <= 0:
            raise ConfigurationError("gp_coefficient must be positive")
        if self.critic_iters < 1:
            raise ConfigurationError("critic_iters must be >= 1")
        if self.attention_rescale <= 0:
            raise ConfigurationError("attention_rescale must be positive")
        if self.adversarial not in ("feature_matching", "critic"):
            raise ConfigurationError(f"unknown adversarial loss {self.adversarial!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigurationError(f"unsupported dtype {self.dtype!r}")

    def level_sizes(self, n: int) -> list[int]:
        """Spatial size after each encoder level for an n x n input."""
        sizes = []
        s = n
        for _, k, stride in self.conv_layers:
            s = (s + 2 * (k // 2) - k) // stride + 1
            if s < 1:
                raise ConfigurationError(f"input size {n} collapses to zero at encoder level {len(sizes) + 1}")
            sizes.append(s)
        return sizes

    def latent_dim(self, n: int) -> int:
        return self.conv_layers[-1][0] * self.level_sizes(n)[-1] ** 2

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown network options: {sorted(unknown)}")
        return cls(**raw)


DESK_CONFIG = NetworkConfig(
    conv_layers=((8, 3, 2), (16, 3, 2), (32, 3, 1)),
    critic_filters=(8, 16, 32),
)
