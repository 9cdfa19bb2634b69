"""MLP trunk with two affine classifier heads on one shared representation.

The backbone head is the ordinary SSL classifier; the balanced head is the
single extra affine layer trained with the rebalancing losses. One forward
evaluates the trunk once and feeds both heads. The balanced head is tiny:
its parameter count relative to the trunk is computed at build time and
exposed as ``head_overhead_ratio``.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import Tensor, affine, relu, no_grad


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    n_classes: int
    hidden: tuple = (128, 128)
    representation_dim: int = 32

    def __post_init__(self):
        if self.input_dim < 1 or self.n_classes < 2 or self.representation_dim < 1:
            raise ModelError(f"bad model dimensions: {self}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ModelError(f"hidden sizes must be positive: {self.hidden}")

    def layer_dims(self):
        return (self.input_dim, *self.hidden, self.representation_dim)


class Model:
    """Parameters are float64 Tensors with requires_grad=True.

    ``rng=None`` builds zero-filled parameters (checkpoint loading).
    Init draws happen in a fixed order: trunk weights in depth order, then
    backbone head, then balanced head; biases start at zero.
    """

    def __init__(self, config, rng=None):
        self.config = config
        dims = config.layer_dims()
        self.trunk_weights = []
        self.trunk_biases = []
        for i in range(len(dims) - 1):
            fan_in, fan_out = dims[i], dims[i + 1]
            w = self._draw(rng, fan_in, fan_out, np.sqrt(2.0 / fan_in))
            self.trunk_weights.append(Tensor(w, requires_grad=True))
            self.trunk_biases.append(Tensor(np.zeros(fan_out), requires_grad=True))
        r, L = config.representation_dim, config.n_classes
        self.backbone_w = Tensor(self._draw(rng, r, L, np.sqrt(1.0 / r)), requires_grad=True)
        self.backbone_b = Tensor(np.zeros(L), requires_grad=True)
        self.balanced_w = Tensor(self._draw(rng, r, L, np.sqrt(1.0 / r)), requires_grad=True)
        self.balanced_b = Tensor(np.zeros(L), requires_grad=True)

        self.trunk_param_count = sum(
            t.data.size for t in self.trunk_weights + self.trunk_biases
        )
        self.balanced_head_param_count = self.balanced_w.data.size + self.balanced_b.data.size
        self.head_overhead_ratio = self.balanced_head_param_count / self.trunk_param_count

    @staticmethod
    def _draw(rng, fan_in, fan_out, sigma):
        if rng is None:
            return np.zeros((fan_in, fan_out))
        return sigma * rng.standard_normal((fan_in, fan_out))

    def parameters(self):
        out = []
        for i, (w, b) in enumerate(zip(self.trunk_weights, self.trunk_biases)):
            out.append((f"trunk.w{i}", w))
            out.append((f"trunk.b{i}", b))
        out.append(("backbone_head.w", self.backbone_w))
        out.append(("backbone_head.b", self.backbone_b))
        out.append(("balanced_head.w", self.balanced_w))
        out.append(("balanced_head.b", self.balanced_b))
        return out

    def trunk_parameters(self):
        return [p for name, p in self.parameters() if name.startswith("trunk.")]

    def _trunk_forward(self, x):
        h = x if isinstance(x, Tensor) else Tensor(x)
        for w, b in zip(self.trunk_weights, self.trunk_biases):
            h = relu(affine(h, w, b))
        return h

    def forward(self, x, freeze_trunk=False):
        """-> (representation, backbone_logits, balanced_logits) Tensors.

        ``freeze_trunk=True`` evaluates the trunk outside the tape and feeds
        the heads a constant representation (decoupled-phase head training).
        """
        if freeze_trunk:
            with no_grad():
                rep = self._trunk_forward(x)
            rep = Tensor(rep.data)
        else:
            rep = self._trunk_forward(x)
        back = affine(rep, self.backbone_w, self.backbone_b)
        bal = affine(rep, self.balanced_w, self.balanced_b)
        return rep, back, bal

    def logits_arrays(self, x):
        """No-grad forward returning plain ndarrays (backbone, balanced)."""
        with no_grad():
            _, back, bal = self.forward(x)
        return back.data, bal.data

    def copy(self):
        m = Model(self.config, rng=None)
        for (_, dst), (_, src) in zip(m.parameters(), self.parameters()):
            dst.data[...] = src.data
        return m

    def zero_grads(self):
        for _, p in self.parameters():
            p.grad = None


def predict(model, x, head="balanced"):
    """1-based argmax labels; ties resolve to the smaller class index."""
    if head not in ("balanced", "backbone"):
        raise ModelError(f"unknown head {head!r}")
    back, bal = model.logits_arrays(x)
    logits = bal if head == "balanced" else back
    return np.argmax(logits, axis=1).astype(np.int64) + 1


class EmaModel:
    """Exponential moving average of a live model's parameters.

    shadow <- decay * shadow + (1 - decay) * live after every step, starting
    from a copy of the live model. decay=0 tracks the live model exactly.
    """

    def __init__(self, live, decay):
        if not 0.0 <= decay < 1.0:
            raise ModelError(f"EMA decay must be in [0, 1), got {decay}")
        self.decay = float(decay)
        self.model = live.copy()

    def update(self, live):
        for (_, s), (_, p) in zip(self.model.parameters(), live.parameters()):
            kernels.ema_update(s.data.ravel(), p.data.ravel(), self.decay)

    def forward(self, x, freeze_trunk=False):
        return self.model.forward(x, freeze_trunk=freeze_trunk)

    def logits_arrays(self, x):
        return self.model.logits_arrays(x)

    @property
    def config(self):
        return self.model.config


# ---------------------------------------------------------------------------
# checkpoints: versioned binary, bit-identical for identical runs
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"SKWLCKPT"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, model, ema, config_hash):
    """Header JSON (sorted keys, no timestamps) + raw little-endian float64.

    Layout: 8-byte magic, uint32 version, uint32 header length, header JSON,
    then each array's C-order bytes in the order listed in the header.
    """
    arrays = [(f"live.{n}", p.data) for n, p in model.parameters()]
    arrays += [(f"ema.{n}", p.data) for n, p in ema.model.parameters()]
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "ema_decay": ema.decay,
        "model_config": {
            "input_dim": model.config.input_dim,
            "n_classes": model.config.n_classes,
            "hidden": list(model.config.hidden),
            "representation_dim": model.config.representation_dim,
        },
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(str(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.uint32(CHECKPOINT_VERSION).tobytes())
        fh.write(np.uint32(len(blob)).tobytes())
        fh.write(blob)
        for _, a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    """-> (model, ema, header dict). Fails loudly on bad magic/version."""
    with open(str(path), "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ModelError(f"{path}: not a checkpoint file")
    version = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    if version != CHECKPOINT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {version}")
    hlen = int(np.frombuffer(raw[12:16], dtype="<u4")[0])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    mc = header["model_config"]
    config = ModelConfig(
        input_dim=mc["input_dim"],
        n_classes=mc["n_classes"],
        hidden=tuple(mc["hidden"]),
        representation_dim=mc["representation_dim"],
    )
    model = Model(config, rng=None)
    ema = EmaModel(model, header["ema_decay"])
    targets = {f"live.{n}": p for n, p in model.parameters()}
    targets.update({f"ema.{n}": p for n, p in ema.model.parameters()})
    off = 16 + hlen
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n_items = int(np.prod(shape)) if shape else 1
        nbytes = 8 * n_items
        arr = np.frombuffer(raw[off:off + nbytes], dtype="<f8").reshape(shape).copy()
        targets[spec["name"]].data[...] = arr
        off += nbytes
    if off != len(raw):
        raise ModelError(f"{path}: trailing bytes after arrays")
    return model, ema, header
