"""Attention weights over stacked hidden states, with and without holiday masking."""

import torch

from rsmgan.gan import attention_fuse

torch.manual_seed(0)
steps = ["t-4", "t-3", "t-2", "t-1", "t"]
hidden = torch.randn(1, 5, 4, 3, 3)
hidden[0, 1] = hidden[0, -1] * 1.5  # t-3 resembles the current step

_, plain = attention_fuse(hidden, None, rescale=5.0)
bits = torch.tensor([[1, 0, 1, 1, 1]])  # t-3 fell on a holiday
_, masked = attention_fuse(hidden, bits, rescale=5.0)

print("step   plain   masked")
for name, a, b in zip(steps, plain[0], masked[0]):
    print(f"{name:<5} {a.item():7.4f} {b.item():7.4f}")
print(f"sums: {plain.sum().item():.4f} {masked.sum().item():.4f}")
