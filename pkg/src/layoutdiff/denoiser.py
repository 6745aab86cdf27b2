"""Learnable noise predictor: a fully-connected net over the flattened scene
state, a sinusoidal step embedding and a floor-plan feature vector.

Gradients are exact reverse-mode derivatives written out by hand so the
training loop has no framework dependency and the gradient tests can compare
directly against central finite differences.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
from scipy.special import erf

from .scene import ROOM_TYPES, FloorPlan

TIME_EMBED_DIM = 32
COND_DIM = 3 + len(ROOM_TYPES)
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint file is unreadable or structurally invalid."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


def encode_floorplan(plan: FloorPlan) -> np.ndarray:
    """Fixed-length conditioning features: scaled bbox width/depth, total
    area, and the room-type histogram."""
    x0, y0, x1, y1 = plan.bbox
    hist = np.zeros(len(ROOM_TYPES))
    for room in plan.rooms:
        if room.room_type in ROOM_TYPES:
            hist[ROOM_TYPES.index(room.room_type)] += 1.0
    return np.concatenate(([(x1 - x0) / 10.0, (y1 - y0) / 10.0, plan.total_area / 100.0], hist))


def time_embedding(t: int, dim: int = TIME_EMBED_DIM) -> np.ndarray:
    """Sinusoidal embedding of the integer diffusion step."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = t * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


class Denoiser:
    """Input projection -> two hidden layers -> linear head, GELU throughout.

    Parameters live in ``self.weights``/``self.biases``; ``params()`` exposes
    them as a flat list in a stable order for the optimizer and checkpoints.
    """

    def __init__(self, state_dim: int, hidden: int = 256, rng: np.random.Generator | None = None):
        self.state_dim = int(state_dim)
        self.hidden = int(hidden)
        self.in_dim = self.state_dim + TIME_EMBED_DIM + COND_DIM
        rng = rng or np.random.default_rng(0)
        dims = [(self.in_dim, hidden), (hidden, hidden), (hidden, hidden), (hidden, self.state_dim)]
        self.weights = []
        self.biases = []
        for fan_in, fan_out in dims:
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def _stack_input(self, x_t: np.ndarray, t: int, cond: np.ndarray) -> np.ndarray:
        x_t = np.asarray(x_t, dtype=float)
        cond = np.asarray(cond, dtype=float)
        if x_t.shape != (self.state_dim,):
            raise ValueError(f"state has shape {x_t.shape}, expected ({self.state_dim},)")
        if cond.shape != (COND_DIM,):
            raise ValueError(f"cond has shape {cond.shape}, expected ({COND_DIM},)")
        return np.concatenate([x_t, time_embedding(t), cond])

    def forward(self, x_t: np.ndarray, t: int, cond: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(x_t, t, cond)
        return out

    def forward_cached(self, x_t: np.ndarray, t: int, cond: np.ndarray):
        inp = self._stack_input(x_t, t, cond)
        acts = [inp]
        pre = []
        h = inp
        for layer in range(3):
            z = h @ self.weights[layer] + self.biases[layer]
            pre.append(z)
            h = _gelu(z)
            acts.append(h)
        out = h @ self.weights[3] + self.biases[3]
        return out, (acts, pre)

    def backward_cached(self, cache, upstream: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients given d(loss)/d(output); order matches params()."""
        acts, pre = cache
        grads_w = [None] * 4
        grads_b = [None] * 4
        d = np.asarray(upstream, dtype=float)
        grads_w[3] = np.outer(acts[3], d)
        grads_b[3] = d.copy()
        d = self.weights[3] @ d
        for layer in (2, 1, 0):
            d = d * _gelu_grad(pre[layer])
            grads_w[layer] = np.outer(acts[layer], d)
            grads_b[layer] = d.copy()
            d = self.weights[layer] @ d
        out = []
        for gw, gb in zip(grads_w, grads_b):
            out.extend([gw, gb])
        return out

    def bind(self, cond: np.ndarray):
        """Sampling-time interface: a pure callable (x_t, t) -> eps_hat."""
        cond = np.asarray(cond, dtype=float)

        def call(x_t: np.ndarray, t: int) -> np.ndarray:
            return self.forward(x_t, t, cond)

        return call


# ---------------------------------------------------------------------------
# Checkpoint container (single .npz: json header + float64 blobs)


def save_checkpoint(
    path: str | Path,
    model: Denoiser,
    extra_arrays: dict[str, np.ndarray] | None = None,
    extra_meta: dict | None = None,
) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "state_dim": model.state_dim,
        "hidden": model.hidden,
        "time_embed_dim": TIME_EMBED_DIM,
        "cond_dim": COND_DIM,
        "activation": "gelu",
        "extra": extra_meta or {},
    }
    arrays = {f"param_{i}": p for i, p in enumerate(model.params())}
    for name, arr in (extra_arrays or {}).items():
        arrays[f"extra_{name}"] = np.asarray(arr)
    buf = io.BytesIO()
    np.savez(buf, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[Denoiser, dict[str, np.ndarray], dict]:
    """Returns (model, extra arrays, extra meta); raises on corruption or on a
    version this code does not understand."""
    try:
        with np.load(Path(path)) as data:
            files = dict(data)
    except (OSError, ValueError, zipfile.BadZipFile, KeyError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if "meta" not in files:
        raise CheckpointError(f"checkpoint {path} has no metadata record")
    try:
        meta = json.loads(bytes(files["meta"]).decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata in {path}") from exc
    version = meta.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint version {version!r}, expected {CHECKPOINT_VERSION}")
    if meta.get("time_embed_dim") != TIME_EMBED_DIM or meta.get("cond_dim") != COND_DIM:
        raise CheckpointError("checkpoint embedding dimensions do not match this build")

    model = Denoiser(state_dim=int(meta["state_dim"]), hidden=int(meta["hidden"]))
    params = model.params()
    for i in range(len(params)):
        key = f"param_{i}"
        if key not in files:
            raise CheckpointError(f"checkpoint {path} is missing {key}")
        if files[key].shape != params[i].shape:
            raise CheckpointError(f"checkpoint {path}: {key} has wrong shape")
    for i, (w_idx, b_idx) in enumerate(zip(range(0, 8, 2), range(1, 8, 2))):
        model.weights[i] = files[f"param_{w_idx}"].astype(float)
        model.biases[i] = files[f"param_{b_idx}"].astype(float)
    extra_arrays = {k[len("extra_") :]: v for k, v in files.items() if k.startswith("extra_")}
    return model, extra_arrays, meta.get("extra", {})
