"""Adversarial encoder-decoder-encoder model over stacked correlation matrices."""

from .config import DESK_CONFIG, ConfigurationError, NetworkConfig
from .losses import (
    contextual_loss,
    critic_loss,
    feature_matching_loss,
    generator_loss,
    gradient_penalty,
    latent_loss,
    wasserstein_term,
)
from .networks import RSMGAN, ConvLSTMCell, Critic, Decoder, RecurrentEncoder, attention_fuse
from .training import (
    ResidualRecord,
    ResidualSet,
    TrainedModel,
    TrainingDivergedError,
    build_model,
    decode,
    encode,
    reconstruct,
    train,
    write_loss_csv,
)
