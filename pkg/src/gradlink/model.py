"""Desk-scale next-token language model with the FC/Proj linear-layer layout
the fingerprint attack consumes, plus exact analytic gradients.

Architecture: token embeddings for a fixed left context are concatenated and
fed through a stack of feedforward blocks (FC -> ReLU -> Proj, residual from
block 2 on), then projected to vocabulary logits. Loss is mean softmax
cross-entropy in natural log. SGD without momentum; attention is deliberately
absent, the attack only needs linear layers.
"""

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .errors import UsageError


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 32
    context: int = 4
    n_blocks: int = 4
    ffn_mult: int = 4

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "context", "n_blocks", "ffn_mult"):
            if getattr(self, name) < 1:
                raise UsageError(f"ModelConfig.{name} must be >= 1")

    @property
    def hidden_dim(self) -> int:
        return self.ffn_mult * self.embed_dim

    def block_input_dim(self, index: int) -> int:
        """Input width of block `index` (1-based); block 1 sees the
        concatenated context embeddings."""
        return self.context * self.embed_dim if index == 1 else self.embed_dim


@dataclass
class FfnBlock:
    """One feedforward block. Weight layout is (out, in): y = W x + b.
    Also reused as the per-block gradient container (same field shapes)."""

    fc_weight: np.ndarray
    fc_bias: np.ndarray
    proj_weight: np.ndarray
    proj_bias: np.ndarray


@dataclass
class GlobalModel:
    config: ModelConfig
    embedding: np.ndarray  # (vocab, embed_dim)
    blocks: Sequence[FfnBlock]
    out_weight: np.ndarray  # (vocab, embed_dim)
    out_bias: np.ndarray  # (vocab,)


@dataclass
class Gradients:
    """Gradient of the loss w.r.t. every model parameter; shape-congruent
    with GlobalModel."""

    embedding: np.ndarray
    blocks: Sequence[FfnBlock]
    out_weight: np.ndarray
    out_bias: np.ndarray


def iter_arrays(tree) -> Iterator[Tuple[str, np.ndarray]]:
    """Yield (name, array) for every parameter of a model or gradient tree,
    in a stable order."""
    yield "embedding", tree.embedding
    for i, blk in enumerate(tree.blocks, start=1):
        yield f"block{i}.fc.weight", blk.fc_weight
        yield f"block{i}.fc.bias", blk.fc_bias
        yield f"block{i}.proj.weight", blk.proj_weight
        yield f"block{i}.proj.bias", blk.proj_bias
    yield "output.weight", tree.out_weight
    yield "output.bias", tree.out_bias


def _map_arrays(fn, *trees):
    """Apply `fn` leafwise over shape-congruent trees, returning a Gradients."""
    blocks = [
        FfnBlock(
            fc_weight=fn(*(t.blocks[i].fc_weight for t in trees)),
            fc_bias=fn(*(t.blocks[i].fc_bias for t in trees)),
            proj_weight=fn(*(t.blocks[i].proj_weight for t in trees)),
            proj_bias=fn(*(t.blocks[i].proj_bias for t in trees)),
        )
        for i in range(len(trees[0].blocks))
    ]
    return Gradients(
        embedding=fn(*(t.embedding for t in trees)),
        blocks=blocks,
        out_weight=fn(*(t.out_weight for t in trees)),
        out_bias=fn(*(t.out_bias for t in trees)),
    )


def grads_scale(g: Gradients, a: float) -> Gradients:
    return _map_arrays(lambda x: x * a, g)


def grads_add(g1: Gradients, g2: Gradients) -> Gradients:
    return _map_arrays(lambda x, y: x + y, g1, g2)


def grads_sub(g1, g2) -> Gradients:
    return _map_arrays(lambda x, y: x - y, g1, g2)


def grads_zeros_like(model: GlobalModel) -> Gradients:
    return _map_arrays(np.zeros_like, model)


def grads_norm(g: Gradients) -> float:
    total = 0.0
    for _, arr in iter_arrays(g):
        total += float(np.dot(arr.ravel(), arr.ravel()))
    return float(np.sqrt(total))


def grads_flatten(g: Gradients) -> np.ndarray:
    return np.concatenate([arr.ravel() for _, arr in iter_arrays(g)])


def _check_congruent(model, grads):
    for (name_m, pm), (name_g, pg) in zip(iter_arrays(model), iter_arrays(grads)):
        if pm.shape != pg.shape:
            raise UsageError(f"shape mismatch at {name_m}: {pm.shape} vs {pg.shape}")


def init_model(config: ModelConfig, seed: int) -> GlobalModel:
    """Deterministic init: weights uniform(-s, s) with s = 1/sqrt(fan_in),
    biases exactly zero."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        s = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-s, s, size=shape)

    d = config.embed_dim
    embedding = uniform((config.vocab_size, d), d)
    blocks = []
    for i in range(1, config.n_blocks + 1):
        d_in = config.block_input_dim(i)
        h = config.hidden_dim
        blocks.append(
            FfnBlock(
                fc_weight=uniform((h, d_in), d_in),
                fc_bias=np.zeros(h),
                proj_weight=uniform((d, h), h),
                proj_bias=np.zeros(d),
            )
        )
    out_weight = uniform((config.vocab_size, d), d)
    out_bias = np.zeros(config.vocab_size)
    return GlobalModel(config, embedding, blocks, out_weight, out_bias)


@dataclass
class ForwardTrace:
    """Intermediate activations of one forward pass (used by backprop and by
    tests of the outer-product gradient structure)."""

    windows: np.ndarray
    flat_input: np.ndarray  # (B, context*embed_dim)
    block_inputs: Sequence[np.ndarray]  # input x to each block
    block_pre: Sequence[np.ndarray]  # FC pre-activation
    block_hidden: Sequence[np.ndarray]  # ReLU output
    final: np.ndarray  # input to the output projection
    logits: np.ndarray  # (B, vocab)


def _validate_batch(config: ModelConfig, windows, targets):
    windows = np.asarray(windows)
    targets = np.asarray(targets)
    if windows.ndim != 2 or windows.shape[1] != config.context:
        raise UsageError(f"windows must have shape (B, {config.context})")
    if windows.shape[0] == 0:
        raise UsageError("empty batch")
    if targets.shape != (windows.shape[0],):
        raise UsageError("targets must have shape (B,)")
    for arr in (windows, targets):
        if arr.min() < 0 or arr.max() >= config.vocab_size:
            raise UsageError("token id out of vocabulary range")
    return windows, targets


def forward_trace(model: GlobalModel, windows: np.ndarray) -> ForwardTrace:
    # Overflow to inf/nan is tolerated here; divergence is detected from the
    # loss value by the simulation loop.
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward_trace(model, windows)


def _forward_trace(model: GlobalModel, windows: np.ndarray) -> ForwardTrace:
    windows = np.asarray(windows)
    b = windows.shape[0]
    x = model.embedding[windows].reshape(b, -1)
    flat_input = x
    inputs, pres, hiddens = [], [], []
    for i, blk in enumerate(model.blocks):
        inputs.append(x)
        pre = x @ blk.fc_weight.T + blk.fc_bias
        hid = np.maximum(pre, 0.0)
        out = hid @ blk.proj_weight.T + blk.proj_bias
        if i > 0:
            out = x + out
        pres.append(pre)
        hiddens.append(hid)
        x = out
    logits = x @ model.out_weight.T + model.out_bias
    return ForwardTrace(windows, flat_input, inputs, pres, hiddens, x, logits)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grads(model: GlobalModel, windows, targets) -> Tuple[float, Gradients]:
    """Mean softmax cross-entropy (natural log) over the batch, with exact
    analytic gradients averaged over the batch."""
    with np.errstate(over="ignore", invalid="ignore"):
        return _loss_and_grads(model, windows, targets)


def _loss_and_grads(model, windows, targets):
    windows, targets = _validate_batch(model.config, windows, targets)
    trace = forward_trace(model, windows)
    b = windows.shape[0]
    logp = _log_softmax(trace.logits)
    loss = float(-logp[np.arange(b), targets].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(b), targets] -= 1.0
    dlogits /= b

    d_out_w = dlogits.T @ trace.final
    d_out_b = dlogits.sum(axis=0)
    dx = dlogits @ model.out_weight

    block_grads: list = [None] * len(model.blocks)
    for i in range(len(model.blocks) - 1, -1, -1):
        blk = model.blocks[i]
        d_proj_w = dx.T @ trace.block_hidden[i]
        d_proj_b = dx.sum(axis=0)
        dhid = dx @ blk.proj_weight
        dpre = dhid * (trace.block_pre[i] > 0)
        d_fc_w = dpre.T @ trace.block_inputs[i]
        d_fc_b = dpre.sum(axis=0)
        dx_in = dpre @ blk.fc_weight
        if i > 0:
            dx_in = dx_in + dx  # residual passthrough
        block_grads[i] = FfnBlock(d_fc_w, d_fc_b, d_proj_w, d_proj_b)
        dx = dx_in

    d_embedding = np.zeros_like(model.embedding)
    d = model.config.embed_dim
    dflat = dx.reshape(b, model.config.context, d)
    np.add.at(d_embedding, windows, dflat)

    return loss, Gradients(d_embedding, block_grads, d_out_w, d_out_b)


def sgd_step(model: GlobalModel, grads: Gradients, lr: float) -> GlobalModel:
    """One plain SGD step: p <- p - lr * g. No momentum, no weight decay."""
    if lr < 0:
        raise UsageError("lr must be >= 0")
    _check_congruent(model, grads)
    stepped = _map_arrays(lambda p, g: p - lr * g, model, grads)
    return GlobalModel(
        config=model.config,
        embedding=stepped.embedding,
        blocks=stepped.blocks,
        out_weight=stepped.out_weight,
        out_bias=stepped.out_bias,
    )


def eval_loss(model: GlobalModel, windows, targets, chunk: int = 512) -> float:
    """Mean cross-entropy over a full dataset of windows, deterministic."""
    windows = np.asarray(windows)
    targets = np.asarray(targets)
    if windows.shape[0] == 0:
        raise UsageError("empty evaluation dataset")
    total = 0.0
    for start in range(0, windows.shape[0], chunk):
        w = windows[start : start + chunk]
        t = targets[start : start + chunk]
        logp = _log_softmax(forward_trace(model, w).logits)
        total += float(-logp[np.arange(w.shape[0]), t].sum())
    return total / windows.shape[0]


PARTS = ("fc", "proj", "both")


@dataclass(frozen=True)
class LayerSelector:
    """Which linear-layer gradients feed the attack: FC, Proj, or both, over
    an optional subset of blocks (1-based; None means all)."""

    part: str = "both"
    blocks: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.part not in PARTS:
            raise UsageError(f"selector part must be one of {PARTS}")
        if self.blocks is not None:
            if len(self.blocks) == 0:
                raise UsageError("selector block list must not be empty")
            if any(b < 1 for b in self.blocks):
                raise UsageError("selector block indices are 1-based")

    def resolve_blocks(self, n_blocks: int) -> Tuple[int, ...]:
        blocks = self.blocks if self.blocks is not None else tuple(range(1, n_blocks + 1))
        for b in blocks:
            if b > n_blocks:
                raise UsageError(f"selector names block {b} but model has {n_blocks}")
        return tuple(sorted(blocks))

    def layer_names(self, n_blocks: int) -> Tuple[str, ...]:
        """Selected layer names: all FC layers (blocks ascending), then all
        Proj layers, so that FC + Proj concatenated equals Both."""
        blocks = self.resolve_blocks(n_blocks)
        names = []
        if self.part in ("fc", "both"):
            names += [f"block{b}.fc" for b in blocks]
        if self.part in ("proj", "both"):
            names += [f"block{b}.proj" for b in blocks]
        return tuple(names)


def parse_selector(text: str) -> LayerSelector:
    """Parse "fc" | "proj" | "both", optionally with "@1,3" block suffix."""
    part, _, rest = text.strip().lower().partition("@")
    blocks = None
    if rest:
        try:
            blocks = tuple(int(tok) for tok in rest.split(","))
        except ValueError as exc:
            raise UsageError(f"bad selector block list: {rest!r}") from exc
    return LayerSelector(part=part, blocks=blocks)


def extract_linear_grads(grads: Gradients, selector: LayerSelector) -> np.ndarray:
    """Flatten the selected FC/Proj weight gradients (row-major per layer)
    into one feature vector, in the selector's deterministic layer order."""
    n_blocks = len(grads.blocks)
    pieces = []
    for name in selector.layer_names(n_blocks):
        block_idx = int(name[len("block") : name.index(".")])
        blk = grads.blocks[block_idx - 1]
        arr = blk.fc_weight if name.endswith(".fc") else blk.proj_weight
        pieces.append(arr.ravel())
    return np.concatenate(pieces)
