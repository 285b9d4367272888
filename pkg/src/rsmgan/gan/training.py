"""Training loop, checkpoints and test-time residual extraction."""

from __future__ import annotations

import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import torch

from ..mcm import SampleSet
from .config import ConfigurationError, NetworkConfig
from .losses import critic_loss, generator_loss
from .networks import RSMGAN

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "rsmgan-checkpoint/1"
LOSS_COLUMNS = ("epoch", "contextual", "latent", "adversarial", "generator", "critic", "wasserstein", "penalty")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResidualRecord:
    step_index: int
    time_index: int
    contextual_residual: np.ndarray
    latent_residual: np.ndarray


@dataclass
class ResidualSet:
    """Residuals for consecutive test steps, stored as stacked arrays."""

    step_index: np.ndarray
    time_index: np.ndarray
    context: np.ndarray  # (S, n, n)
    latent: np.ndarray  # (S, latent_dim)
    step_size: int = 1

    def __len__(self):
        return len(self.step_index)

    def __getitem__(self, i) -> ResidualRecord:
        return ResidualRecord(int(self.step_index[i]), int(self.time_index[i]), self.context[i], self.latent[i])

    def __iter__(self) -> Iterator[ResidualRecord]:
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "ResidualSet":
        return ResidualSet(self.step_index[idx], self.time_index[idx], self.context[idx], self.latent[idx], self.step_size)

    @classmethod
    def from_records(cls, records: Sequence[ResidualRecord], step_size: int = 1) -> "ResidualSet":
        if isinstance(records, ResidualSet):
            return records
        records = list(records)
        if not records:
            raise ValueError("no residual records")
        return cls(
            np.array([r.step_index for r in records]),
            np.array([r.time_index for r in records]),
            np.stack([np.asarray(r.contextual_residual, dtype=float) for r in records]),
            np.stack([np.asarray(r.latent_residual, dtype=float) for r in records]),
            step_size,
        )


@dataclass
class TrainedModel:
    network: RSMGAN
    config: NetworkConfig
    signature: tuple[int, int, int, int]
    kinds: tuple[str, ...]
    history: list[dict] = field(default_factory=list)

    def check_signature(self, samples: SampleSet) -> None:
        if tuple(samples.signature) != tuple(self.signature) or tuple(samples.kinds) != tuple(self.kinds):
            names = ("n", "c", "h", "seasonal")
            diff = [
                f"{k}: model {a} vs data {b}"
                for k, a, b in zip(names, self.signature, samples.signature)
                if a != b
            ]
            if tuple(samples.kinds) != tuple(self.kinds):
                diff.append(f"stack layout: model {self.kinds} vs data {samples.kinds}")
            raise ConfigurationError("shape signature mismatch: " + "; ".join(diff))

    def save(self, path: str | Path) -> None:
        """Write an ``.npz`` container; parameters plus a JSON ``__meta__`` entry. Atomic."""
        meta = {
            "format": CHECKPOINT_FORMAT,
            "config": self.config.to_dict(),
            "signature": list(self.signature),
            "kinds": list(self.kinds),
            "history": self.history,
        }
        arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
        for name, tensor in self.network.state_dict().items():
            arrays[f"param/{name}"] = tensor.detach().cpu().numpy()
        buf = io.BytesIO()
        np.savez(buf, **arrays)
        _atomic_write(Path(path), buf.getvalue())

    @classmethod
    def load(cls, path: str | Path) -> "TrainedModel":
        with np.load(path) as z:
            meta = json.loads(z["__meta__"].tobytes().decode())
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"unsupported checkpoint format {meta.get('format')!r}")
            config = NetworkConfig.from_dict(meta["config"])
            n, c, _, _ = meta["signature"]
            network = RSMGAN(n, c, len(meta["kinds"]), config).to(_dtype(config))
            state = {k[len("param/") :]: torch.from_numpy(z[k].copy()) for k in z.files if k.startswith("param/")}
        network.load_state_dict(state)
        network.eval()
        return cls(network, config, tuple(meta["signature"]), tuple(meta["kinds"]), meta["history"])


def _atomic_write(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def _dtype(config: NetworkConfig) -> torch.dtype:
    return torch.float64 if config.dtype == "float64" else torch.float32


def build_model(samples: SampleSet, config: NetworkConfig) -> TrainedModel:
    """Freshly initialized model sized for ``samples`` (seeded by ``config.seed``)."""
    torch.manual_seed(config.seed)
    n, c, h, m = samples.signature
    network = RSMGAN(n, c, len(samples.kinds), config).to(_dtype(config))
    if len(samples):
        current = samples.stacks[:, -1]
        rms = np.sqrt((current**2).mean(axis=(0, 2, 3)))
        rms[~np.isfinite(rms) | (rms == 0)] = 1.0
        network.scale.copy_(torch.as_tensor(rms))
    return TrainedModel(network, config, samples.signature, samples.kinds)


def _tensors(model: TrainedModel, samples: SampleSet, idx=None):
    dtype = _dtype(model.config)
    stacks = samples.stacks if idx is None else samples.stacks[idx]
    bits = samples.bits if idx is None else samples.bits[idx]
    seq = model.network.normalize(torch.as_tensor(stacks, dtype=dtype))
    return seq, torch.as_tensor(bits, dtype=dtype)


def train(samples: SampleSet, config: NetworkConfig, model: TrainedModel | None = None) -> TrainedModel:
    """Alternate ``critic_iters`` critic updates with one generator + encoder update per batch.

    Each batch's fake reconstructions are produced once and reused across its
    critic updates. With ``config.deterministic`` the run is bit-reproducible
    for a fixed seed.
    """
    if len(samples) < config.batch_size and config.epochs > 0:
        raise ValueError(f"need at least one full batch ({config.batch_size}) of samples, got {len(samples)}")
    if config.deterministic:
        torch.use_deterministic_algorithms(True)
    model = model or build_model(samples, config)
    model.check_signature(samples)
    net = model.network
    net.train()
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    gp_gen = torch.Generator().manual_seed(config.seed + 1)
    opt_g = torch.optim.Adam(net.generator_parameters(), lr=config.learning_rate, betas=config.betas)
    opt_d = torch.optim.Adam(net.critic.parameters(), lr=config.learning_rate, betas=config.betas)

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(len(samples))
        sums = dict.fromkeys(LOSS_COLUMNS[1:], 0.0)
        batches = 0
        for b0 in range(0, len(order), config.batch_size):
            idx = np.sort(order[b0 : b0 + config.batch_size])
            seq, bits = _tensors(model, samples, idx)
            real = seq[:, -1]
            with torch.no_grad():
                fake = net.generate(seq, bits)[0]

            for _ in range(config.critic_iters):
                d_total, wass, penalty = critic_loss(real, fake, net.critic, config.gp_coefficient, generator=gp_gen)
                opt_d.zero_grad(set_to_none=True)
                d_total.backward()
                opt_d.step()

            g_total, ctx, lat, adv = generator_loss(
                seq, net.generate, net.reencode, net.critic, config.loss_weights, bits, config.adversarial
            )
            opt_g.zero_grad(set_to_none=True)
            g_total.backward()
            opt_g.step()

            values = dict(
                contextual=ctx, latent=lat, adversarial=adv, generator=g_total,
                critic=d_total, wasserstein=wass, penalty=penalty,
            )
            for key, value in values.items():
                v = float(value.detach())
                if not np.isfinite(v):
                    raise TrainingDivergedError(f"non-finite {key} loss at epoch {epoch}")
                sums[key] += v
            batches += 1
        row = {"epoch": epoch, **{k: v / batches for k, v in sums.items()}}
        model.history.append(row)
        log.info(
            "epoch %d: contextual=%.4f latent=%.4f critic=%.4f (%.1fs)",
            epoch, row["contextual"], row["latent"], row["critic"], time.perf_counter() - started,
        )
    net.eval()
    return model


def write_loss_csv(history: Sequence[dict], path: str | Path) -> None:
    lines = [",".join(LOSS_COLUMNS)]
    for row in history:
        lines.append(",".join([str(row["epoch"])] + [repr(float(row[k])) for k in LOSS_COLUMNS[1:]]))
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


@torch.no_grad()
def reconstruct(model: TrainedModel, samples: SampleSet, batch_size: int = 256) -> ResidualSet:
    """Channel-0 contextual residual (original units) and latent residual per sample."""
    model.check_signature(samples)
    net = model.network
    net.eval()
    scale0 = float(net.scale[0])
    ctx_parts, lat_parts = [], []
    for b0 in range(0, len(samples), batch_size):
        idx = np.arange(b0, min(b0 + batch_size, len(samples)))
        seq, bits = _tensors(model, samples, idx)
        x_hat, z = net.generate(seq, bits)
        z_hat = net.reencode(seq, x_hat, bits)
        recon0 = x_hat[:, 0].double().numpy() * scale0
        ctx_parts.append(np.abs(samples.stacks[idx, -1, 0] - recon0))
        lat_parts.append((z - z_hat).abs().double().numpy())
    n = samples.signature[0]
    latent_dim = net.latent_dim
    context = np.concatenate(ctx_parts) if ctx_parts else np.empty((0, n, n))
    latent = np.concatenate(lat_parts) if lat_parts else np.empty((0, latent_dim))
    return ResidualSet(samples.step_index.copy(), samples.time_index.copy(), context, latent, samples.step_size)


@torch.no_grad()
def encode(model: TrainedModel, samples: SampleSet):
    """Latent vectors and per-level hidden-state sequences of the generator encoder."""
    model.check_signature(samples)
    model.network.eval()
    seq, bits = _tensors(model, samples)
    latent, _, hiddens = model.network.encode(seq, bits)
    return latent, hiddens


@torch.no_grad()
def decode(model: TrainedModel, samples: SampleSet) -> np.ndarray:
    """Reconstructed current-step MCMs, c x n x n each, in original units."""
    model.check_signature(samples)
    net = model.network
    net.eval()
    seq, bits = _tensors(model, samples)
    x_hat = net.generate(seq, bits)[0]
    return (x_hat * net.scale.view(-1, 1, 1)).double().numpy()
