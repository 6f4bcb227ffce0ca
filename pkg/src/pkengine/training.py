"""Threshold training: coordinate grid search and projected Newton steps.

Both optimizers minimize mean cross-entropy of the exact enumerated label
distribution.  The label probability is multilinear in each satisfaction
probability, so for a single coordinate j it collapses to
``P(gold) = A + B * s_j`` with A, B independent of theta_j; every scan,
derivative, and line search below runs on that closed form.

A joint exhaustive grid over six to nine thresholds at step 0.001 is
computationally impossible (2001^6 points), so grid search is cyclic
coordinate descent over the full grid, which the exhaustive oracle
matches for up to two free conditions.  Newton is likewise one-parameter
cyclic, with an epsilon-corrected second derivative and step halving;
candidates are clamped to [-1, 1] before the halving test so accepted
steps never increase the batch loss at the point actually adopted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingStore, KernelConfig, condition_key, similarity
from .engine import (
    PROB_FLOOR,
    ThresholdModel,
    _sigmoid,
    truth_table,
)
from .errors import TrainingError
from .pk import NO_MATCH, ProcessKnowledge

MAX_HALVINGS = 30


@dataclass
class TrainConfig:
    optimizer: str = "grid"
    kernel: KernelConfig = field(default_factory=KernelConfig)
    grid_step: float = 0.001
    tau: float = 0.05
    max_epochs: int = 100
    batch_size: int = 16
    early_stop_delta: float = 0.001
    hessian_epsilon: float = 1e-6
    seed: int = 0
    theta_init: str = "zeros"

    def __post_init__(self):
        if self.optimizer not in ("grid", "newton"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")
        if self.max_epochs < 1:
            raise TrainingError("max_epochs must be >= 1")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if not self.tau > 0:
            raise TrainingError("tau must be positive")
        if not self.hessian_epsilon > 0:
            raise TrainingError("hessian_epsilon must be positive")
        if self.theta_init not in ("zeros", "random"):
            raise TrainingError(f"unknown theta_init {self.theta_init!r}")
        grid_values(self.grid_step)  # validates divisibility


@dataclass
class TrainReport:
    final_loss: float
    loss_trace: list[float]
    epochs_run: int
    converged: bool
    trajectories: dict[str, list[float]]

    def to_dict(self) -> dict:
        return {
            "final_loss": self.final_loss,
            "loss_trace": self.loss_trace,
            "epochs_run": self.epochs_run,
            "converged": self.converged,
            "trajectories": self.trajectories,
        }


def grid_values(step: float) -> np.ndarray:
    """The [-1, 1] grid; step must divide the range length evenly."""
    if not step > 0:
        raise TrainingError("grid_step must be positive")
    count = round(2.0 / step)
    if abs(count * step - 2.0) > 1e-9:
        raise TrainingError(f"grid_step {step} does not divide [-1, 1] evenly")
    return np.linspace(-1.0, 1.0, count + 1)


# --------------------------------------------------------------------------
# Loss plumbing


def _similarity_matrix(
    pk: ProcessKnowledge, kernel: KernelConfig, xs: list[np.ndarray], store: EmbeddingStore
) -> np.ndarray:
    cond_vecs = [store.get(condition_key(cid)) for cid in pk.condition_ids]
    sims = np.empty((len(xs), len(cond_vecs)))
    for i, x in enumerate(xs):
        for j, cv in enumerate(cond_vecs):
            sims[i, j] = similarity(kernel, x, cv)
    return sims


def _gold_indices(pk: ProcessKnowledge, golds: list[str]) -> np.ndarray:
    labels, _ = truth_table(pk)
    index_of = {label: i for i, label in enumerate(labels)}
    out = np.empty(len(golds), dtype=np.int64)
    for i, gold in enumerate(golds):
        if gold == NO_MATCH or gold not in pk.label_set:
            raise TrainingError(f"gold label {gold!r} not producible by the process knowledge")
        out[i] = index_of[gold]
    return out


def _assignment_prob_matrix(s_matrix: np.ndarray, skip: int | None = None) -> np.ndarray:
    """Per-point probabilities of every assignment of the (non-skipped) bits.

    Bit p of the column index is the truth of the p-th non-skipped
    condition, in declaration order.
    """
    n = s_matrix.shape[0]
    p = np.ones((n, 1))
    for k in range(s_matrix.shape[1]):
        if k == skip:
            continue
        sk = s_matrix[:, k][:, None]
        p = np.concatenate([p * (1.0 - sk), p * sk], axis=1)
    return p


def _gold_probs(pk: ProcessKnowledge, s_matrix: np.ndarray, gold_idx: np.ndarray) -> np.ndarray:
    _, table = truth_table(pk)
    probs = _assignment_prob_matrix(s_matrix)
    return (probs * (table[None, :] == gold_idx[:, None])).sum(axis=1)


def _gold_components(
    pk: ProcessKnowledge, s_matrix: np.ndarray, gold_idx: np.ndarray, j: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per point (A, B) such that P_i(gold_i) = A_i + B_i * s_ij."""
    _, table = truth_table(pk)
    m = s_matrix.shape[1]
    probs_other = _assignment_prob_matrix(s_matrix, skip=j)
    others = [k for k in range(m) if k != j]
    sub = np.arange(1 << (m - 1), dtype=np.int64)
    idx0 = np.zeros_like(sub)
    for p, k in enumerate(others):
        idx0 |= ((sub >> p) & 1) << k
    idx1 = idx0 | (1 << j)
    gold = gold_idx[:, None]
    a = (probs_other * (table[idx0][None, :] == gold)).sum(axis=1)
    p1 = (probs_other * (table[idx1][None, :] == gold)).sum(axis=1)
    return a, p1 - a


def _mean_nll(p: np.ndarray) -> float:
    return float(np.mean(-np.log(np.clip(p, PROB_FLOOR, None))))


def cross_entropy_loss(
    model: ThresholdModel, data: list[tuple[np.ndarray, str]], store: EmbeddingStore
) -> float:
    """Mean -log P(gold) under the soft label distribution, floored at 1e-12."""
    if not data:
        raise TrainingError("empty dataset")
    pk = model.pk
    xs = [x for x, _ in data]
    gold_idx = _gold_indices(pk, [g for _, g in data])
    sims = _similarity_matrix(pk, model.kernel, xs, store)
    thetas = np.array([model.thetas[c] for c in pk.condition_ids])
    return _loss_from_thetas(pk, model.tau, thetas, sims, gold_idx)


def _loss_from_thetas(
    pk: ProcessKnowledge,
    tau: float,
    thetas: np.ndarray,
    sims: np.ndarray,
    gold_idx: np.ndarray,
) -> float:
    s_matrix = _sigmoid((sims - thetas[None, :]) / tau)
    return _mean_nll(_gold_probs(pk, s_matrix, gold_idx))


# --------------------------------------------------------------------------
# Grid search


def _scan_best(losses: np.ndarray, grid: np.ndarray) -> int:
    """Index of the loss minimizer under the run-midpoint tie rule.

    Ties (exact float equality with the minimum) form contiguous runs;
    the longest run wins, earlier runs break length ties, and the run's
    midpoint (rounded down) is returned.
    """
    best = losses.min()
    tied = losses == best
    runs: list[tuple[int, int]] = []
    start = None
    for i, hit in enumerate(tied):
        if hit and start is None:
            start = i
        elif not hit and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(tied) - 1))
    runs.sort(key=lambda r: (-(r[1] - r[0]), r[0]))
    lo, hi = runs[0]
    return (lo + hi) // 2


def grid_search(
    pk: ProcessKnowledge,
    data: list[tuple[np.ndarray, str]],
    store: EmbeddingStore,
    cfg: TrainConfig,
) -> tuple[ThresholdModel, TrainReport]:
    """Cyclic coordinate grid search over all thresholds.

    Conditions are swept in declaration order; each scan evaluates every
    grid value with the other thresholds held fixed and keeps the
    minimizer.  Sweeps repeat until a full sweep changes nothing or
    max_epochs sweeps have run.  Deterministic for fixed inputs.
    """
    if cfg.optimizer != "grid":
        raise TrainingError("grid_search requires cfg.optimizer == 'grid'")
    if not data:
        raise TrainingError("empty dataset")
    xs = [x for x, _ in data]
    gold_idx = _gold_indices(pk, [g for _, g in data])
    sims = _similarity_matrix(pk, cfg.kernel, xs, store)
    grid = grid_values(cfg.grid_step)
    m = len(pk.condition_ids)
    thetas = np.zeros(m)

    trajectories: dict[str, list[float]] = {c: [] for c in pk.condition_ids}
    loss_trace: list[float] = []
    converged = False
    sweeps = 0
    for _ in range(cfg.max_epochs):
        sweeps += 1
        changed = False
        for j in range(m):
            s_matrix = _sigmoid((sims - thetas[None, :]) / cfg.tau)
            a, b = _gold_components(pk, s_matrix, gold_idx, j)
            s_grid = _sigmoid((sims[:, j][:, None] - grid[None, :]) / cfg.tau)
            p = a[:, None] + b[:, None] * s_grid
            losses = np.mean(-np.log(np.clip(p, PROB_FLOOR, None)), axis=0)
            new_theta = float(grid[_scan_best(losses, grid)])
            if new_theta != thetas[j]:
                changed = True
                thetas[j] = new_theta
        for j, cid in enumerate(pk.condition_ids):
            trajectories[cid].append(float(thetas[j]))
        loss_trace.append(_loss_from_thetas(pk, cfg.tau, thetas, sims, gold_idx))
        if not changed:
            converged = True
            break

    final_loss = loss_trace[-1]
    model = ThresholdModel(
        pk=pk,
        kernel=cfg.kernel,
        thetas={cid: float(thetas[j]) for j, cid in enumerate(pk.condition_ids)},
        gammas={cid: 0.0 for cid in pk.condition_ids},
        tau=cfg.tau,
        metadata={
            "optimizer": "grid",
            "grid_step": cfg.grid_step,
            "final_loss": final_loss,
            "epochs": sweeps,
        },
    )
    report = TrainReport(
        final_loss=final_loss,
        loss_trace=loss_trace,
        epochs_run=sweeps,
        converged=converged,
        trajectories=trajectories,
    )
    return model, report


# --------------------------------------------------------------------------
# Projected Newton


def coordinate_derivatives(
    pk: ProcessKnowledge,
    tau: float,
    thetas: np.ndarray,
    sims: np.ndarray,
    gold_idx: np.ndarray,
    j: int,
) -> tuple[float, float]:
    """Analytic first and second derivative of mean NLL in theta_j.

    Points whose gold probability sits at the floor contribute zero (the
    clipped log is locally constant there).
    """
    s_matrix = _sigmoid((sims - thetas[None, :]) / tau)
    a, b = _gold_components(pk, s_matrix, gold_idx, j)
    s = s_matrix[:, j]
    p = a + b * s
    ds = -s * (1.0 - s) / tau
    d2s = s * (1.0 - s) * (1.0 - 2.0 * s) / tau**2
    live = p > PROB_FLOOR
    g = np.zeros_like(p)
    h = np.zeros_like(p)
    g[live] = -(b[live] * ds[live]) / p[live]
    h[live] = (b[live] * ds[live]) ** 2 / p[live] ** 2 - b[live] * d2s[live] / p[live]
    gm, hm = float(np.mean(g)), float(np.mean(h))
    if not (math.isfinite(gm) and math.isfinite(hm)):
        cid = pk.condition_ids[j]
        raise TrainingError(f"non-finite derivative for condition {cid}")
    return gm, hm


def newton_fit(
    pk: ProcessKnowledge,
    data: list[tuple[np.ndarray, str]],
    store: EmbeddingStore,
    cfg: TrainConfig,
) -> tuple[ThresholdModel, TrainReport]:
    """Cyclic one-parameter Newton with epsilon correction and step halving.

    Batches are dataset-order chunks of cfg.batch_size.  For each batch
    and each threshold in turn the Newton step is halved until the batch
    loss at the clamped candidate does not increase, then adopted.
    Stops at max_epochs or when an epoch's total absolute parameter
    change falls below early_stop_delta.  Reported losses are always
    full-dataset.
    """
    if cfg.optimizer != "newton":
        raise TrainingError("newton_fit requires cfg.optimizer == 'newton'")
    if not data:
        raise TrainingError("empty dataset")
    xs = [x for x, _ in data]
    gold_idx = _gold_indices(pk, [g for _, g in data])
    sims = _similarity_matrix(pk, cfg.kernel, xs, store)
    m = len(pk.condition_ids)
    if cfg.theta_init == "random":
        thetas = np.random.default_rng(cfg.seed).uniform(-1.0, 1.0, size=m)
    else:
        thetas = np.zeros(m)

    batches = [
        np.arange(lo, min(lo + cfg.batch_size, len(data)))
        for lo in range(0, len(data), cfg.batch_size)
    ]
    trajectories: dict[str, list[float]] = {c: [] for c in pk.condition_ids}
    loss_trace: list[float] = []
    converged = False
    epochs = 0
    for _ in range(cfg.max_epochs):
        epochs += 1
        epoch_change = 0.0
        for batch in batches:
            bs = sims[batch]
            bg = gold_idx[batch]
            for j in range(m):
                g, h = coordinate_derivatives(pk, cfg.tau, thetas, bs, bg, j)
                # The one-parameter objective is not convex on the logistic
                # tails; |h| keeps the epsilon-corrected step a descent
                # direction (identical to h + eps wherever h > 0).
                delta = -g / (abs(h) + cfg.hessian_epsilon)
                s_matrix = _sigmoid((bs - thetas[None, :]) / cfg.tau)
                a, b = _gold_components(pk, s_matrix, bg, j)
                base = _mean_nll(a + b * s_matrix[:, j])

                def batch_loss(theta_j: float) -> float:
                    s = _sigmoid((bs[:, j] - theta_j) / cfg.tau)
                    return _mean_nll(a + b * s)

                accepted = thetas[j]
                t = 1.0
                for _ in range(MAX_HALVINGS + 1):
                    cand = float(np.clip(thetas[j] + t * delta, -1.0, 1.0))
                    if batch_loss(cand) <= base:
                        accepted = cand
                        break
                    t *= 0.5
                epoch_change += abs(accepted - thetas[j])
                thetas[j] = accepted
        for j, cid in enumerate(pk.condition_ids):
            trajectories[cid].append(float(thetas[j]))
        loss_trace.append(_loss_from_thetas(pk, cfg.tau, thetas, sims, gold_idx))
        if epoch_change < cfg.early_stop_delta:
            converged = True
            break

    final_loss = loss_trace[-1]
    model = ThresholdModel(
        pk=pk,
        kernel=cfg.kernel,
        thetas={cid: float(thetas[j]) for j, cid in enumerate(pk.condition_ids)},
        gammas={cid: 0.0 for cid in pk.condition_ids},
        tau=cfg.tau,
        metadata={
            "optimizer": "newton",
            "batch_size": cfg.batch_size,
            "hessian_epsilon": cfg.hessian_epsilon,
            "final_loss": final_loss,
            "epochs": epochs,
        },
    )
    report = TrainReport(
        final_loss=final_loss,
        loss_trace=loss_trace,
        epochs_run=epochs,
        converged=converged,
        trajectories=trajectories,
    )
    return model, report


# --------------------------------------------------------------------------
# Sentiment bands


def fit_gammas(
    model: ThresholdModel,
    data: list[tuple[str, np.ndarray]],
    store: EmbeddingStore,
    sentiment_labels: dict[str, bool],
    cfg: TrainConfig | None = None,
) -> ThresholdModel:
    """Grid-scan each gamma to best agree with an external sentiment oracle.

    The band predicts positive sentiment when S_j <= theta_j + gamma_j.
    Agreement is the fraction of inputs where band membership matches the
    oracle verdict: maximizing it is equivalent to counting oracle
    positives inside the band as +1 and oracle negatives inside as -1.
    The literal objective (agreement over positives only) is unbounded,
    so the balanced form is used.  Ties prefer the smallest |gamma|, then
    the smaller gamma.
    """
    if not sentiment_labels:
        raise TrainingError("empty sentiment_labels")
    if not data:
        raise TrainingError("empty dataset")
    cfg = cfg or TrainConfig(kernel=model.kernel, tau=model.tau)
    missing = [pid for pid, _ in data if pid not in sentiment_labels]
    if missing:
        raise TrainingError(f"no sentiment verdict for ids: {', '.join(missing[:5])}")
    pk = model.pk
    xs = [x for _, x in data]
    sims = _similarity_matrix(pk, model.kernel, xs, store)
    oracle = np.array([bool(sentiment_labels[pid]) for pid, _ in data])
    grid = grid_values(cfg.grid_step)

    gammas: dict[str, float] = {}
    agreements: dict[str, float] = {}
    for j, cid in enumerate(pk.condition_ids):
        theta = model.thetas[cid]
        in_band = sims[:, j][:, None] <= (theta + grid)[None, :]
        agree = np.mean(in_band == oracle[:, None], axis=0)
        best = agree.max()
        candidates = [i for i in range(len(grid)) if agree[i] == best]
        pick = min(candidates, key=lambda i: (abs(grid[i]), grid[i]))
        gammas[cid] = float(grid[pick])
        agreements[cid] = float(best)

    metadata = dict(model.metadata)
    metadata["gamma_agreement"] = agreements
    return ThresholdModel(
        pk=pk,
        kernel=model.kernel,
        thetas=dict(model.thetas),
        gammas=gammas,
        tau=model.tau,
        metadata=metadata,
    )


def train(
    pk: ProcessKnowledge,
    data: list[tuple[np.ndarray, str]],
    store: EmbeddingStore,
    cfg: TrainConfig,
) -> tuple[ThresholdModel, TrainReport]:
    """Dispatch on cfg.optimizer."""
    if cfg.optimizer == "grid":
        return grid_search(pk, data, store, cfg)
    return newton_fit(pk, data, store, cfg)
