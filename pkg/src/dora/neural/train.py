"""Loss, toy training loop, evaluation and finite-difference gradient checking."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .. import shapes as shape_lib
from ..metrics.pointsets import fscore, mesh_points
from ..sampling import SALIENT, UNIFORM, SurfacePointCloud, detect_salient_edges, sample_uniform, ses_sample
from .extract import EmptySurfaceError, extract_mesh
from .model import DoraVAE, LatentCode, PointBatch, Profile, build_ps, collate
from .occupancy import sample_queries

log = logging.getLogger(__name__)

DEFAULT_KL_WEIGHT = 1e-3
DEFAULT_TAU = 30.0


class DivergenceError(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value} at step {step}")
        self.step = step


def occupancy_loss(
    predicted: torch.Tensor, labels: torch.Tensor, code: LatentCode, kl_weight: float = DEFAULT_KL_WEIGHT
) -> torch.Tensor:
    """Mean squared occupancy error plus ``kl_weight`` times the mean per-token KL."""
    mse = torch.mean((predicted - labels) ** 2)
    return mse + kl_weight * code.kl().mean()


# ------------------------------------------------------------------ data


@dataclass
class TrainingShape:
    name: str
    mesh: object
    occupancy: Callable
    gamma: object = None


def make_dataset(kind: str = "bump", n: int = 8, seed: int = 0, tau: float = DEFAULT_TAU) -> list[TrainingShape]:
    """Procedural shapes with exact occupancy: ``bump`` boxes or ``sphere``s."""
    rng = np.random.default_rng(seed)
    if kind == "bump":
        objs = shape_lib.bump_box_dataset(n, seed)
    elif kind == "sphere":
        objs = [
            shape_lib.Sphere(tuple(rng.uniform(-0.2, 0.2, 3)), float(rng.uniform(0.4, 0.75)), 3)
            for _ in range(n)
        ]
    else:
        raise ValueError(f"unknown dataset kind {kind!r}")
    out = []
    for i, obj in enumerate(objs):
        mesh = obj.mesh()
        out.append(TrainingShape(f"{kind}-{i}", mesh, obj.occupancy, detect_salient_edges(mesh, tau)))
    return out


def sample_inputs(shape: TrainingShape, profile: Profile, arm: str, n_s: int, seed: int):
    """Encoder input triple ``(P_s, P_u, P_a)`` for one shape."""
    if arm == "no-ses":
        p_u = sample_uniform(shape.mesh, profile.n_total, seed)
        p_a = SurfacePointCloud.empty(seed)
    else:
        p_d = ses_sample(shape.mesh, profile.n_total, profile.n_desired, seed=seed, gamma=shape.gamma)
        p_u, p_a = p_d.select(UNIFORM), p_d.select(SALIENT)
    n1 = n_s // 2
    p_s = build_ps(p_u, p_a, n1, n_s - n1, seed)
    return p_s, p_u, p_a


def make_batch(shapes: Sequence[TrainingShape], profile: Profile, arm: str, n_s: int, seeds, dtype=torch.float32):
    items, queries, labels = [], [], []
    for shape, s in zip(shapes, seeds):
        items.append(sample_inputs(shape, profile, arm, n_s, int(s)))
        q = sample_queries(shape.mesh, profile.n_near, profile.n_uniform, profile.near_sigma, int(s), shape.occupancy)
        queries.append(q.queries)
        labels.append(q.labels)
    batch = collate(items, dtype)
    batch.meta["n_salient"] = [len(it[2]) for it in items]
    return batch, torch.as_tensor(np.stack(queries), dtype=dtype), torch.as_tensor(np.stack(labels), dtype=dtype)


# ------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: DoraVAE
    history: list[dict] = field(default_factory=list)
    final: dict = field(default_factory=dict)


def _draw_ns(profile: Profile, rng: np.random.Generator) -> int:
    if profile.ns_min == profile.ns_max:
        return profile.ns_min
    return int(rng.integers(profile.ns_min, profile.ns_max + 1))


def make_optimizer(name: str, params, lr: float) -> torch.optim.Optimizer:
    if name == "adam":
        return torch.optim.Adam(params, lr=lr)
    if name == "sgd":
        return torch.optim.SGD(params, lr=lr, momentum=0.9)
    raise ValueError(f"unknown optimizer {name!r}")


def train_toy(
    dataset: Sequence[TrainingShape],
    profile: Profile,
    arm: str = "full",
    epochs: int = 300,
    seed: int = 0,
    optimizer: str = "adam",
    eval_every: int = 0,
    on_epoch: Callable[[dict], None] | None = None,
    dtype=torch.float32,
    final_eval: bool = True,
) -> TrainResult:
    """Fixed-seed mini-batch training on procedural shapes.

    Every epoch visits each shape once in a seeded random order. Logged per
    epoch: mean loss, MSE, KL and occupancy accuracy of the training
    batches; every ``eval_every`` epochs also the extracted-mesh F-score.
    """
    torch.manual_seed(seed)
    model = DoraVAE(profile.model, arm).to(dtype)
    opt = make_optimizer(optimizer, model.parameters(), profile.lr)
    gen = torch.Generator().manual_seed(seed)
    rng = np.random.default_rng(seed)
    result = TrainResult(model)
    step = 0
    for epoch in range(epochs):
        model.train()
        t0 = time.perf_counter()
        order = rng.permutation(len(dataset))
        sums = {"loss": 0.0, "mse": 0.0, "kl": 0.0, "acc": 0.0}
        n_batches = 0
        for start in range(0, len(order), profile.batch_size):
            idx = order[start : start + profile.batch_size]
            seeds = rng.integers(0, 2**31 - 1, size=len(idx))
            batch, q, o = make_batch([dataset[i] for i in idx], profile, arm, _draw_ns(profile, rng), seeds, dtype)
            pred, code = model(batch, q, sample=True, generator=gen)
            mse = torch.mean((pred - o) ** 2)
            kl = code.kl().mean()
            loss = mse + profile.kl_weight * kl
            if not torch.isfinite(loss):
                raise DivergenceError(step, float(loss))
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            n_batches += 1
            sums["loss"] += float(loss.detach())
            sums["mse"] += float(mse.detach())
            sums["kl"] += float(kl.detach())
            sums["acc"] += float(((pred > 0.5) == (o > 0.5)).to(dtype).mean())
        record = {"epoch": epoch, "step": step, **{k: v / n_batches for k, v in sums.items()}}
        record["seconds"] = time.perf_counter() - t0
        if eval_every and (epoch + 1) % eval_every == 0 and epoch + 1 < epochs:
            record["fscore"] = evaluate_fscore(model, dataset, profile, arm, seed)["mean"]
        result.history.append(record)
        if on_epoch:
            on_epoch(record)
    if final_eval:
        result.final = {
            "accuracy": evaluate_accuracy(model, dataset, profile, arm, seed),
            **{f"fscore_{k}": v for k, v in evaluate_fscore(model, dataset, profile, arm, seed).items()},
        }
    return result


EVAL_SEED_OFFSET = 1_000_003


def encode_shape(model: DoraVAE, shape: TrainingShape, profile: Profile, arm: str, seed: int, n_s: int | None = None):
    n_s = profile.ns_max if n_s is None else n_s
    dtype = next(model.parameters()).dtype
    batch = collate([sample_inputs(shape, profile, arm, n_s, seed)], dtype)
    model.eval()
    with torch.no_grad():
        return model.encode(batch)


def evaluate_accuracy(model, dataset, profile: Profile, arm: str, seed: int = 0) -> float:
    """Occupancy accuracy on fresh (held-out) queries with the mean latent."""
    dtype = next(model.parameters()).dtype
    correct = total = 0
    for i, shape in enumerate(dataset):
        s = seed + EVAL_SEED_OFFSET + i
        code = encode_shape(model, shape, profile, arm, s)
        q = sample_queries(shape.mesh, profile.n_near, profile.n_uniform, profile.near_sigma, s + 7, shape.occupancy)
        with torch.no_grad():
            pred = model.decode(code.z, torch.as_tensor(q.queries, dtype=dtype)[None])[0].numpy()
        correct += int(((pred > 0.5) == (q.labels > 0.5)).sum())
        total += len(q)
    return correct / total


def evaluate_fscore(model, dataset, profile: Profile, arm: str, seed: int = 0, r: float = 0.01) -> dict:
    """F-score of meshes extracted from each shape's mean latent against the shape surface."""
    scores = []
    for i, shape in enumerate(dataset):
        s = seed + EVAL_SEED_OFFSET + i
        code = encode_shape(model, shape, profile, arm, s)
        try:
            rec = extract_mesh(model, code.z, profile.grid_res, profile.extract_interpolation)
        except EmptySurfaceError:
            scores.append(0.0)
            continue
        gt_pts = mesh_points(shape.mesh, profile.eval_points, s)
        rec_pts = mesh_points(rec, profile.eval_points, s)
        scores.append(fscore(rec_pts, gt_pts, r))
    return {"mean": float(np.mean(scores)), "per_shape": scores}


def write_jsonl(records: Sequence[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


# ------------------------------------------------------- gradient check


def loss_for(model: DoraVAE, batch: PointBatch, queries, labels, eps_noise, kl_weight) -> torch.Tensor:
    """Loss with a fixed reparameterization draw ``eps_noise``."""
    code = model.encode(batch)
    z = code.mean + torch.exp(0.5 * code.logvar) * eps_noise
    code = LatentCode(z, code.mean, code.logvar)
    pred = model.decode(z, queries)
    return occupancy_loss(pred, labels, code, kl_weight)


class _LossWrapper(torch.nn.Module):
    def __init__(self, model: DoraVAE):
        super().__init__()
        self.model = model

    def forward(self, batch, queries, labels, eps_noise, kl_weight):
        return loss_for(self.model, batch, queries, labels, eps_noise, kl_weight)


def gradient_check(
    model: DoraVAE,
    batch: PointBatch,
    queries: torch.Tensor,
    labels: torch.Tensor,
    eps: float = 1e-4,
    kl_weight: float = DEFAULT_KL_WEIGHT,
    seed: int = 0,
    chunk: int = 512,
) -> dict:
    """Compare autograd gradients with central differences for every parameter (float64).

    The differences only use forward evaluations, batched over perturbed
    copies of one parameter tensor at a time. Returns per-parameter max
    relative error ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    from torch.func import functional_call, vmap

    model = model.double()
    batch = batch.to(torch.float64)
    queries = queries.double()
    labels = labels.double()
    g = torch.Generator().manual_seed(seed)
    n_tokens = batch.ps_pos.shape[1]
    noise = torch.randn((batch.ps_pos.shape[0], n_tokens, model.config.latent_width), generator=g, dtype=torch.float64)
    args = (batch, queries, labels, noise, kl_weight)

    wrapper = _LossWrapper(model)
    wrapper.zero_grad()
    wrapper(*args).backward()
    base = {k: v.detach().clone() for k, v in wrapper.named_parameters()}
    report = {}
    with torch.no_grad():
        for name, p in wrapper.named_parameters():
            analytic = p.grad.detach().clone().reshape(-1)
            n = analytic.numel()

            def evaluate(value, name=name):
                return functional_call(wrapper, {**base, name: value}, args)

            numeric = torch.empty_like(analytic)
            for s in range(0, n, chunk):
                idx = torch.arange(s, min(n, s + chunk))
                bump = torch.zeros((len(idx), n), dtype=torch.float64)
                bump[torch.arange(len(idx)), idx] = eps
                up = base[name].reshape(1, -1) + bump
                down = base[name].reshape(1, -1) - bump
                shape = (len(idx),) + tuple(p.shape)
                f_up = vmap(evaluate)(up.reshape(shape))
                f_down = vmap(evaluate)(down.reshape(shape))
                numeric[idx] = (f_up - f_down) / (2 * eps)
            denom = torch.clamp(torch.maximum(analytic.abs(), numeric.abs()), min=1e-8)
            rel = (analytic - numeric).abs() / denom
            report[name.removeprefix("model.")] = {
                "max_rel_error": float(rel.max()),
                "max_abs_error": float((analytic - numeric).abs().max()),
                "size": n,
            }
    return report
