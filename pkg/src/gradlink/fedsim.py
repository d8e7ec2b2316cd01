"""Federated round orchestration: local client SGD, update packaging,
shuffling, server aggregation, and recording of the anonymized gradient trace
plus its ground-truth sidecar.

The attack path consumes TraceStore only; the TruthSidecar exists solely for
evaluation and is never reachable from the attack module.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .corpus import ClientShard, windows_from_sentences
from .dp import DpConfig, privatize
from .errors import ConfigError, DivergedError, UsageError
from .model import (
    FfnBlock,
    Gradients,
    GlobalModel,
    ModelConfig,
    eval_loss,
    grads_sub,
    init_model,
    iter_arrays,
    loss_and_grads,
    sgd_step,
)
from .corpus import batch_iter
from .rng import labeled_rng

TRACE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class FedConfig:
    clients: int
    rounds: int
    client_lr: float = 0.1
    server_lr: float = 0.1
    local_epochs: int = 1
    batch_size: int = 8
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.clients < 2:
            raise ConfigError("need at least 2 clients")
        if self.rounds < 2:
            raise ConfigError("need at least 2 rounds")
        if self.client_lr <= 0 or self.server_lr < 0:
            raise ConfigError("learning rates must be positive")
        if self.local_epochs < 0 or self.batch_size < 1:
            raise ConfigError("bad local_epochs or batch_size")


@dataclass
class UpdatePacket:
    """One client's accumulated update for a round, identity-stripped once
    shuffled; `slot` is its position in the round after shuffling."""

    round: int
    slot: int
    payload: Gradients


@dataclass
class TraceRecord:
    """The server-visible part of one packet: the FC/Proj weight-gradient
    layers, stored at 32-bit precision."""

    round: int
    slot: int
    layers: dict  # name -> float32 ndarray


@dataclass
class TraceStore:
    clients: int
    rounds: int
    seed: int
    layer_manifest: List[Tuple[str, int, int]]  # (name, rows, cols)
    dp: Optional[DpConfig]
    records: List[TraceRecord] = field(default_factory=list)
    loss_curve: List[float] = field(default_factory=list)
    # advisory accounting inputs for the epsilon report
    dp_sample_rate: Optional[float] = None
    dp_steps: Optional[int] = None


@dataclass
class TruthSidecar:
    """Per-round slot -> true client id maps; evaluation-only."""

    rounds: List[List[int]]


def linear_layer_manifest(model: GlobalModel) -> List[Tuple[str, int, int]]:
    manifest = []
    for i, blk in enumerate(model.blocks, start=1):
        manifest.append((f"block{i}.fc", blk.fc_weight.shape[0], blk.fc_weight.shape[1]))
        manifest.append((f"block{i}.proj", blk.proj_weight.shape[0], blk.proj_weight.shape[1]))
    return manifest


def _model_params(model: GlobalModel) -> Gradients:
    return Gradients(
        embedding=model.embedding,
        blocks=list(model.blocks),
        out_weight=model.out_weight,
        out_bias=model.out_bias,
    )


def client_round(
    snapshot: GlobalModel,
    shard: ClientShard,
    cfg: FedConfig,
    round_idx: int,
    dp_cfg: Optional[DpConfig] = None,
    dp_rng: Optional[np.random.Generator] = None,
) -> UpdatePacket:
    """Run local mini-batch SGD on a replica of the round's snapshot and
    return the transmitted update theta_t - theta_local_final.

    The batch order stream depends only on (seed, client), so with a frozen
    global model the client emits an identical payload every round."""
    if not shard.train:
        raise ConfigError(f"client {shard.client_id} has an empty shard")
    model = snapshot
    for _ in range(cfg.local_epochs):
        batch_rng = labeled_rng(cfg.seed, f"batch.client{shard.client_id}")
        for windows, targets in batch_iter(
            shard, cfg.batch_size, snapshot.config.context, batch_rng
        ):
            if dp_cfg is not None:
                per_sample = [
                    loss_and_grads(model, windows[i : i + 1], targets[i : i + 1])[1]
                    for i in range(windows.shape[0])
                ]
                grads = privatize(per_sample, dp_cfg, dp_rng)
            else:
                _, grads = loss_and_grads(model, windows, targets)
            model = sgd_step(model, grads, cfg.client_lr)
    payload = grads_sub(_model_params(snapshot), _model_params(model))
    return UpdatePacket(round=round_idx, slot=shard.client_id, payload=payload)


def shuffle_round(
    packets: Sequence[UpdatePacket], rng: np.random.Generator
) -> Tuple[List[UpdatePacket], List[int]]:
    """Fisher-Yates shuffle of a round's packets. Returns the shuffled
    packets with slots reassigned to positions, and the permutation
    slot -> original index (for the TruthSidecar only)."""
    k = len(packets)
    order = list(range(k))
    for i in range(k - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        order[i], order[j] = order[j], order[i]
    shuffled = [
        UpdatePacket(round=packets[src].round, slot=pos, payload=packets[src].payload)
        for pos, src in enumerate(order)
    ]
    return shuffled, order


def aggregate(
    model: GlobalModel, packets: Sequence[UpdatePacket], server_lr: float
) -> GlobalModel:
    """FedAvg step: Theta <- Theta - lambda * Avg(payloads).

    Summands are value-sorted per coordinate before reduction, so the result
    is bit-identical under any permutation of the packets."""
    if not packets:
        raise UsageError("aggregate needs at least one packet")
    k = len(packets)
    params = _model_params(model)
    payload_maps = [dict(iter_arrays(pkt.payload)) for pkt in packets]
    new_arrays = {}
    for name, p in iter_arrays(params):
        stack = np.stack([pm[name] for pm in payload_maps])
        if stack.shape[1:] != p.shape:
            raise UsageError(f"payload shape mismatch at {name}")
        avg = np.sort(stack, axis=0, kind="stable").sum(axis=0) / k
        new_arrays[name] = p - server_lr * avg
    blocks = [
        FfnBlock(
            fc_weight=new_arrays[f"block{i}.fc.weight"],
            fc_bias=new_arrays[f"block{i}.fc.bias"],
            proj_weight=new_arrays[f"block{i}.proj.weight"],
            proj_bias=new_arrays[f"block{i}.proj.bias"],
        )
        for i in range(1, len(model.blocks) + 1)
    ]
    return GlobalModel(
        config=model.config,
        embedding=new_arrays["embedding"],
        blocks=blocks,
        out_weight=new_arrays["output.weight"],
        out_bias=new_arrays["output.bias"],
    )


def _trace_record(packet: UpdatePacket) -> TraceRecord:
    layers = {}
    for i, blk in enumerate(packet.payload.blocks, start=1):
        layers[f"block{i}.fc"] = blk.fc_weight.astype(np.float32)
        layers[f"block{i}.proj"] = blk.proj_weight.astype(np.float32)
    return TraceRecord(round=packet.round, slot=packet.slot, layers=layers)


def _count_local_steps(shards, cfg: FedConfig, context: int) -> Tuple[int, float]:
    """Advisory DP accounting: per-client local steps over the run and the
    per-step sample rate, using the smallest client shard."""
    window_counts = [
        windows_from_sentences(s.train, context)[0].shape[0] for s in shards
    ]
    n = min(window_counts)
    batches = max(1, -(-n // cfg.batch_size))
    steps = cfg.rounds * cfg.local_epochs * batches
    rate = min(1.0, cfg.batch_size / max(1, n))
    return steps, rate


def run_simulation(
    fed_cfg: FedConfig,
    model_cfg: ModelConfig,
    shards: Sequence[ClientShard],
    dp_cfg: Optional[DpConfig] = None,
    *,
    return_final_model: bool = False,
):
    """Run T federated rounds and record the anonymized trace.

    Per round: snapshot -> K client rounds (DP-privatized if configured) ->
    shuffle -> record packets -> aggregate. The loss curve holds eval_loss on
    the union of validation shards, before training and after every round."""
    if len(shards) != fed_cfg.clients:
        raise ConfigError(
            f"config says {fed_cfg.clients} clients but got {len(shards)} shards"
        )
    model = init_model(model_cfg, fed_cfg.seed)
    shuffle_rng = labeled_rng(fed_cfg.seed, "shuffle")
    dp_rngs = {
        s.client_id: labeled_rng(fed_cfg.seed, f"dp.client{s.client_id}") for s in shards
    }

    valid_sentences = [sent for s in shards for sent in s.valid]
    vw, vt = windows_from_sentences(valid_sentences, model_cfg.context)
    if vw.shape[0] == 0:
        raise ConfigError("no validation windows across all shards")

    trace = TraceStore(
        clients=fed_cfg.clients,
        rounds=fed_cfg.rounds,
        seed=fed_cfg.seed,
        layer_manifest=linear_layer_manifest(model),
        dp=dp_cfg,
    )
    if dp_cfg is not None:
        trace.dp_steps, trace.dp_sample_rate = _count_local_steps(
            shards, fed_cfg, model_cfg.context
        )
    sidecar = TruthSidecar(rounds=[])

    def checked_loss(m):
        loss = eval_loss(m, vw, vt)
        if not np.isfinite(loss):
            raise DivergedError(
                f"validation loss became non-finite after round {len(trace.loss_curve)}"
            )
        return loss

    trace.loss_curve.append(checked_loss(model))
    for t in range(fed_cfg.rounds):
        packets = [
            client_round(model, shard, fed_cfg, t, dp_cfg, dp_rngs[shard.client_id])
            for shard in shards
        ]
        if fed_cfg.shuffle:
            shuffled, perm = shuffle_round(packets, shuffle_rng)
        else:
            shuffled, perm = packets, list(range(fed_cfg.clients))
        sidecar.rounds.append(perm)
        trace.records.extend(_trace_record(pkt) for pkt in shuffled)
        model = aggregate(model, shuffled, fed_cfg.server_lr)
        trace.loss_curve.append(checked_loss(model))

    if return_final_model:
        return trace, sidecar, list(trace.loss_curve), model
    return trace, sidecar, list(trace.loss_curve)
