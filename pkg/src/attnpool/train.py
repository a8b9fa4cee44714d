"""Mini-batch SGD training for every scoring head.

Heads: avg_pool (top-down only), attention (rank-1, shared bottom-up),
rank_p, per_class, pose_reg (MLP bottom-up channel with keypoint
supervision), cbp (linear classifier on TensorSketch features).

Every batch is one tape: the per-example score computations are stacked
into block matrices so the whole batch stays inside the autograd op set
(selector matrices replace slicing, ones-matmuls replace broadcasting).
Runs are bit-reproducible: Fisher-Yates shuffling from SplitMix64
(seed + epoch), gradient accumulation in ascending example order, and a
fixed parameter draw order at init.

Default hyperparameters (lr 0.03, momentum 0.9, wd 1e-4, batch 32,
50 epochs) are this library's own choices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tape
from .pose import NUM_HEAD_CHANNELS, NUM_POSE_CHANNELS, ATTENTION_CHANNEL
from .rng import SplitMix64, mix64
from .sketch import SketchParams, cbp_pool
from .synth import Dataset, metric_accuracy, metric_map
from .tensors import ShapeError

HEAD_KINDS = ("avg_pool", "attention", "rank_p", "per_class", "pose_reg", "cbp")


class TrainDivergence(RuntimeError):
    """Raised when a gradient or loss goes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    head: str = "attention"
    rank: int = 1
    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    lambda_pose: float = 0.1
    loss: str = "softmax"        # or "sigmoid" for multi-label
    hdim: int = 128
    sketch_dim: int = 64
    use_bias: bool = False

    def __post_init__(self):
        if self.head not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.head!r}")
        if self.loss not in ("softmax", "sigmoid"):
            raise ValueError(f"unknown loss kind {self.loss!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.rank < 1:
            raise ValueError("batch_size/epochs/rank out of range")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    localization: float


@dataclass
class TrainReport:
    config: TrainConfig
    epochs: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    diverged: bool = False

    @property
    def final_val_metric(self) -> float:
        return self.epochs[-1].val_metric if self.epochs else float("nan")

    @property
    def final_train_loss(self) -> float:
        return self.epochs[-1].train_loss if self.epochs else float("nan")

    @property
    def final_localization(self) -> float:
        return self.epochs[-1].localization if self.epochs else float("nan")


def sgd_step(params: dict, grads: dict, state: dict, lr: float,
             momentum: float, weight_decay: float) -> None:
    """In-place heavy-ball update: v <- m*v + g + wd*p;  p <- p - lr*v."""
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainDivergence(f"non-finite gradient for parameter {name!r}")
        state[name] = momentum * state[name] + g + weight_decay * params[name]
        params[name] = params[name] - lr * state[name]


def _uniform(rng: SplitMix64, shape, scale: float) -> np.ndarray:
    n = int(np.prod(shape))
    vals = np.array([(2.0 * rng.next_float() - 1.0) * scale for _ in range(n)])
    return vals.reshape(shape)


def init_head_params(config: TrainConfig, f: int, K: int) -> dict:
    """Seeded parameter dict for a head; fixed draw order per head kind."""
    rng = SplitMix64(config.seed)
    sf = 1.0 / np.sqrt(f)
    params: dict[str, np.ndarray] = {}
    if config.head == "avg_pool":
        params["W"] = _uniform(rng, (f, K), sf)
    elif config.head in ("attention", "rank_p"):
        rank = 1 if config.head == "attention" else config.rank
        for p in range(rank):
            params[f"A{p}"] = _uniform(rng, (f, K), sf)
            params[f"b{p}"] = _uniform(rng, (f, 1), sf)
    elif config.head == "per_class":
        params["A"] = _uniform(rng, (f, K), sf)
        params["B_pc"] = _uniform(rng, (f, K), sf)
    elif config.head == "pose_reg":
        sh = 1.0 / np.sqrt(config.hdim)
        params["W1"] = _uniform(rng, (f, config.hdim), sf)
        params["W2"] = _uniform(rng, (config.hdim, NUM_HEAD_CHANNELS), sh)
        params["bias1"] = np.zeros((1, config.hdim))
        params["bias2"] = np.zeros((1, NUM_HEAD_CHANNELS))
        params["A"] = _uniform(rng, (f, K), sf)
    elif config.head == "cbp":
        params["W"] = _uniform(rng, (config.sketch_dim, K), 1.0 / np.sqrt(config.sketch_dim))
    if config.use_bias and config.head != "pose_reg":
        params["bias"] = np.zeros((1, K))
    return params


def sketch_for(config: TrainConfig, f: int) -> SketchParams:
    """Sketch tables for the cbp head; seed split off the run seed."""
    return SketchParams.from_seed(f, config.sketch_dim, mix64(config.seed + 1))


def _rank_of(config: TrainConfig) -> int:
    return 1 if config.head == "attention" else config.rank


def _batch_graph(tape: Tape, config: TrainConfig, nodes: dict, Xb: np.ndarray,
                 extra: dict):
    """Record one batch's score computation; returns the (B, K) logits node.

    Logits are the spatial *mean* of the per-location maps (scores / n),
    matching average-style pooling; the 1/n factor only reparametrizes
    the sum-form scores and keeps SGD well conditioned across grid sizes.
    """
    B, n, f = Xb.shape
    K = extra["K"]
    if config.head == "cbp":
        F = tape.leaf(extra["features"] / n)  # mean-pooled sketches
        scores = tape.matmul(F, nodes["W"])
    else:
        Xs = tape.leaf(Xb.reshape(B * n, f))
        S = tape.leaf(np.kron(np.eye(B), np.ones((1, n))))  # block row sums
        ones_k = tape.leaf(np.ones((1, K)))
        if config.head == "avg_pool":
            scores = tape.matmul(S, tape.matmul(Xs, nodes["W"]))
        elif config.head in ("attention", "rank_p"):
            scores = None
            for p in range(_rank_of(config)):
                h = tape.matmul(Xs, nodes[f"b{p}"])              # (Bn, 1)
                t = tape.matmul(Xs, nodes[f"A{p}"])              # (Bn, K)
                c = tape.elementwise_mul(t, tape.matmul(h, ones_k))
                sp = tape.matmul(S, c)
                scores = sp if scores is None else tape.add(scores, sp)
        elif config.head == "per_class":
            t = tape.matmul(Xs, nodes["A"])
            hm = tape.matmul(Xs, nodes["B_pc"])
            scores = tape.matmul(S, tape.elementwise_mul(t, hm))
        elif config.head == "pose_reg":
            ones_col = tape.leaf(np.ones((B * n, 1)))
            hidden = tape.relu(tape.add(tape.matmul(Xs, nodes["W1"]),
                                        tape.matmul(ones_col, nodes["bias1"])))
            out = tape.add(tape.matmul(hidden, nodes["W2"]),
                           tape.matmul(ones_col, nodes["bias2"]))
            e_att = np.zeros((NUM_HEAD_CHANNELS, 1))
            e_att[ATTENTION_CHANNEL, 0] = 1.0
            h = tape.matmul(out, tape.leaf(e_att))
            t = tape.matmul(Xs, nodes["A"])
            c = tape.elementwise_mul(t, tape.matmul(h, ones_k))
            scores = tape.matmul(S, c)
            extra["head_out_node"] = out
        else:
            raise ValueError(f"unknown head kind {config.head!r}")
        scores = tape.scalar_mul(scores, 1.0 / n)
    if "bias" in nodes:
        ones_b = tape.leaf(np.ones((B, 1)))
        scores = tape.add(scores, tape.matmul(ones_b, nodes["bias"]))
    return scores


def _batch_loss(tape: Tape, config: TrainConfig, nodes: dict, Xb, yb, extra):
    scores = _batch_graph(tape, config, nodes, Xb, extra)
    if config.loss == "softmax":
        loss = tape.softmax_xent(scores, yb)
    else:
        loss = tape.sigmoid_xent(scores, yb)
    if config.head == "pose_reg" and config.lambda_pose > 0:
        B, n, _ = Xb.shape
        out = extra["head_out_node"]
        sel = np.zeros((NUM_HEAD_CHANNELS, NUM_POSE_CHANNELS))
        sel[:NUM_POSE_CHANNELS, :NUM_POSE_CHANNELS] = np.eye(NUM_POSE_CHANNELS)
        p16 = tape.matmul(out, tape.leaf(sel))
        diff = tape.subtract(p16, tape.leaf(extra["pose_targets"]))
        # per-example mask folded into sqrt weights so one sum_squares
        # yields sum_i ||diff_i||^2_masked / (n * visible_i)
        weighted = tape.elementwise_mul(diff, tape.leaf(extra["pose_weights"]))
        pose_l = tape.scalar_mul(tape.sum_squares(weighted), 1.0 / B)
        loss = tape.add(loss, tape.scalar_mul(pose_l, config.lambda_pose))
    return loss


def _pose_batch_extra(dataset: Dataset, idx, n):
    hm = dataset.pose_heatmaps[idx]     # (B, n, 16)
    masks = dataset.pose_masks[idx]     # (B, 16)
    visible = masks.sum(axis=1)
    w = np.zeros_like(masks)
    nz = visible > 0
    w[nz] = masks[nz] / (n * visible[nz, None])
    weights = np.sqrt(np.repeat(w, n, axis=0))
    B = len(idx)
    return hm.reshape(B * n, NUM_POSE_CHANNELS), weights


def eval_scores(params: dict, config: TrainConfig, X: np.ndarray,
                cbp_features: np.ndarray | None = None) -> np.ndarray:
    """Vectorized scores (m, K) for a stack of feature maps (m, n, f)."""
    m, n, f = X.shape
    flat = X.reshape(m * n, f)
    if config.head == "cbp":
        return (cbp_features / n) @ params["W"] + (params["bias"] if "bias" in params else 0.0)
    if config.head == "avg_pool":
        scores = X.sum(axis=1) @ params["W"]
    elif config.head in ("attention", "rank_p"):
        K = params["A0"].shape[1]
        scores = np.zeros((m, K))
        for p in range(_rank_of(config)):
            h = (flat @ params[f"b{p}"]).reshape(m, n)
            t = (flat @ params[f"A{p}"]).reshape(m, n, K)
            scores += np.einsum("mn,mnk->mk", h, t)
    elif config.head == "per_class":
        K = params["A"].shape[1]
        t = (flat @ params["A"]).reshape(m, n, K)
        hm = (flat @ params["B_pc"]).reshape(m, n, K)
        scores = (t * hm).sum(axis=1)
    elif config.head == "pose_reg":
        hidden = np.maximum(flat @ params["W1"] + params["bias1"], 0.0)
        out = hidden @ params["W2"] + params["bias2"]
        h = out[:, ATTENTION_CHANNEL].reshape(m, n)
        K = params["A"].shape[1]
        t = (flat @ params["A"]).reshape(m, n, K)
        scores = np.einsum("mn,mnk->mk", h, t)
    else:
        raise ValueError(f"unknown head kind {config.head!r}")
    scores = scores / n  # spatial mean, matching the training logits
    if "bias" in params:
        scores = scores + params["bias"]
    return scores


def combined_maps(params: dict, config: TrainConfig, X: np.ndarray):
    """Per-example combined attention maps (m, n, K); None for cbp."""
    m, n, f = X.shape
    flat = X.reshape(m * n, f)
    if config.head == "cbp":
        return None
    if config.head == "avg_pool":
        K = params["W"].shape[1]
        return (flat @ params["W"]).reshape(m, n, K)  # top-down maps only
    if config.head in ("attention", "rank_p"):
        K = params["A0"].shape[1]
        c = np.zeros((m, n, K))
        for p in range(_rank_of(config)):
            h = (flat @ params[f"b{p}"]).reshape(m, n)
            t = (flat @ params[f"A{p}"]).reshape(m, n, K)
            c += t * h[:, :, None]
        return c
    if config.head == "per_class":
        K = params["A"].shape[1]
        t = (flat @ params["A"]).reshape(m, n, K)
        hm = (flat @ params["B_pc"]).reshape(m, n, K)
        return t * hm
    if config.head == "pose_reg":
        hidden = np.maximum(flat @ params["W1"] + params["bias1"], 0.0)
        h = (hidden @ params["W2"] + params["bias2"])[:, ATTENTION_CHANNEL].reshape(m, n)
        K = params["A"].shape[1]
        t = (flat @ params["A"]).reshape(m, n, K)
        return t * h[:, :, None]
    raise ValueError(f"unknown head kind {config.head!r}")


def localization_rate(params: dict, config: TrainConfig, dataset: Dataset) -> float:
    """Fraction of examples whose true-class combined map peaks at the planted cell."""
    c = combined_maps(params, config, dataset.X)
    if c is None:
        return float("nan")
    m = len(dataset)
    if dataset.labels.ndim == 1:
        true_maps = c[np.arange(m), :, dataset.labels]
    else:
        first_pos = np.argmax(dataset.labels > 0, axis=1)
        true_maps = c[np.arange(m), :, first_pos]
    return float(np.mean(np.argmax(true_maps, axis=1) == dataset.planted))


def _fisher_yates(m: int, seed: int) -> np.ndarray:
    rng = SplitMix64(seed)
    idx = np.arange(m)
    for i in range(m - 1, 0, -1):
        j = rng.next_below(i + 1)
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def _cbp_features(config: TrainConfig, dataset: Dataset, sk: SketchParams) -> np.ndarray:
    return np.stack([cbp_pool(dataset.X[i], sk) for i in range(len(dataset))])


def _val_metric(params, config, val: Dataset, cbp_feats) -> float:
    scores = eval_scores(params, config, val.X, cbp_feats)
    if val.labels.ndim == 1:
        return metric_accuracy(scores, val.labels)
    return metric_map(scores, val.labels)[0]


def train(config: TrainConfig, train_ds: Dataset, val_ds: Dataset) -> TrainReport:
    """Train a head; deterministic given the config.  Aborts on divergence
    with the partial report (diverged=True)."""
    if len(train_ds) == 0:
        raise ValueError("training dataset is empty")
    if config.head == "pose_reg" and train_ds.pose_heatmaps is None:
        raise ValueError("pose_reg head needs pose targets (gen_pose_targets)")
    m, n, f = train_ds.X.shape
    K = train_ds.config.K
    if config.loss == "sigmoid" and train_ds.labels.ndim != 2:
        raise ShapeError("sigmoid loss needs multi-label (m, K) labels")

    params = init_head_params(config, f, K)
    state = {name: np.zeros_like(p) for name, p in params.items()}
    report = TrainReport(config=config)
    t0 = time.perf_counter()

    cbp_train = cbp_val = None
    if config.head == "cbp":
        sk = sketch_for(config, f)
        cbp_train = _cbp_features(config, train_ds, sk)
        cbp_val = _cbp_features(config, val_ds, sk)

    for epoch in range(config.epochs):
        order = _fisher_yates(m, config.seed + epoch)
        total_loss, total_seen = 0.0, 0
        for start in range(0, m, config.batch_size):
            idx = order[start:start + config.batch_size]
            Xb = train_ds.X[idx]
            yb = train_ds.labels[idx]
            extra = {"K": K}
            if config.head == "cbp":
                extra["features"] = cbp_train[idx]
            if config.head == "pose_reg" and config.lambda_pose > 0:
                extra["pose_targets"], extra["pose_weights"] = _pose_batch_extra(
                    train_ds, idx, n)
            tape = Tape()
            nodes = {name: tape.leaf(p) for name, p in params.items()}
            loss = _batch_loss(tape, config, nodes, Xb, yb, extra)
            if not np.isfinite(loss.value):
                report.diverged = True
                report.params = params
                report.wall_clock_s = time.perf_counter() - t0
                return report
            tape.backward(loss)
            grads = {name: nodes[name].grad for name in params}
            try:
                sgd_step(params, grads, state, config.lr, config.momentum,
                         config.weight_decay)
            except TrainDivergence:
                report.diverged = True
                report.params = params
                report.wall_clock_s = time.perf_counter() - t0
                return report
            total_loss += float(loss.value) * len(idx)
            total_seen += len(idx)
        report.epochs.append(EpochRecord(
            epoch=epoch,
            train_loss=total_loss / total_seen,
            val_metric=_val_metric(params, config, val_ds, cbp_val),
            localization=localization_rate(params, config, val_ds),
        ))

    report.params = params
    report.wall_clock_s = time.perf_counter() - t0
    return report


def evaluate(params: dict, config: TrainConfig, dataset: Dataset,
             ref_params: dict | None = None) -> dict:
    """Metrics plus per-example maps and the score-improvement ranking.

    The ranking orders examples by how much the trained head improved the
    true-class softmax probability over `ref_params` (default: freshly
    initialized parameters with the run seed), the ordering used for
    gallery-style visualization of the most-helped examples.
    """
    cbp_feats = None
    if config.head == "cbp":
        sk = sketch_for(config, dataset.X.shape[2])
        cbp_feats = _cbp_features(config, dataset, sk)
    scores = eval_scores(params, config, dataset.X, cbp_feats)
    out: dict = {"scores": scores}
    if dataset.labels.ndim == 1:
        out["accuracy"] = metric_accuracy(scores, dataset.labels)
    else:
        out["map"], out["skipped_classes"] = metric_map(scores, dataset.labels)
    out["localization"] = localization_rate(params, config, dataset)
    out["maps"] = combined_maps(params, config, dataset.X)

    if dataset.labels.ndim == 1:
        if ref_params is None:
            ref_params = init_head_params(config, dataset.X.shape[2], dataset.config.K)
        ref_scores = eval_scores(ref_params, config, dataset.X, cbp_feats)

        def true_prob(s):
            z = s - s.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            return p[np.arange(len(dataset)), dataset.labels]

        improvement = true_prob(scores) - true_prob(ref_scores)
        out["improvement"] = improvement
        out["improvement_ranking"] = np.argsort(-improvement, kind="stable")
    return out


def write_report(path, report: TrainReport) -> None:
    """Line format: epoch<TAB>train_loss<TAB>val_metric<TAB>localization_rate."""
    with open(path, "w") as fh:
        for rec in report.epochs:
            fh.write(f"{rec.epoch}\t{rec.train_loss:.17g}\t{rec.val_metric:.17g}"
                     f"\t{rec.localization:.17g}\n")


def write_summary(path, report: TrainReport, extra: dict | None = None) -> None:
    kv = {
        "head": report.config.head,
        "epochs": len(report.epochs),
        "final_train_loss": f"{report.final_train_loss:.17g}",
        "final_val_metric": f"{report.final_val_metric:.17g}",
        "final_localization": f"{report.final_localization:.17g}",
        "wall_clock_s": f"{report.wall_clock_s:.3f}",
        "diverged": str(report.diverged).lower(),
    }
    if extra:
        kv.update(extra)
    with open(path, "w") as fh:
        for k, v in kv.items():
            fh.write(f"{k}={v}\n")
