"""Export trained actors to the portable network JSON schema.

Weights are serialised in float64 together with three recorded probe
points and their double-precision logits, so any consumer can verify its
forward pass against the training framework to 1e-6.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .ppo import MlpPolicy


def probe_points(init_lo, init_hi) -> np.ndarray:
    lo = np.asarray(init_lo, dtype=float)
    hi = np.asarray(init_hi, dtype=float)
    mid = 0.5 * (lo + hi)
    return np.stack([lo, mid, hi])


def network_document(policy: MlpPolicy, probes: np.ndarray) -> dict:
    actor = policy.actor.double()
    linears = [m for m in actor if isinstance(m, torch.nn.Linear)]
    layers = []
    for i, lin in enumerate(linears):
        layers.append({
            "weights": lin.weight.detach().numpy().astype(float).tolist(),
            "bias": lin.bias.detach().numpy().astype(float).tolist(),
            "activation": "linear" if i == len(linears) - 1 else "relu",
        })
    with torch.no_grad():
        logits = actor(torch.from_numpy(probes.astype(np.float64))).numpy()
    return {
        "inputs": int(linears[0].weight.shape[1]),
        "actions": int(linears[-1].weight.shape[0]),
        "layers": layers,
        "probes": [
            {"input": probes[i].tolist(), "logits": logits[i].tolist()}
            for i in range(probes.shape[0])
        ],
    }


def export_network(policy: MlpPolicy, path, init_lo, init_hi) -> dict:
    doc = network_document(policy, probe_points(init_lo, init_hi))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2))
    return doc
