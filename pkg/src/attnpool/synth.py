"""Planted-attention synthetic task and evaluation metrics.

Each example is an n1 x n2 grid of f-dimensional features.  Background
cells are i.i.d. standard normal; a handful of clutter cells carry
class-agnostic distractor patterns; exactly one planted cell carries the
class prototype plus a class-agnostic object-marker pattern, both scaled
by signal_strength.  Prototypes are unit-norm and then centered across
classes (their mean is subtracted), so the class signal vanishes under
plain average pooling while remaining fully decidable from the planted
cell - spatial selectivity is what the task rewards.

The marker is the same for every class and example (and orthogonal to
the prototype span, so a planted-cell oracle is unaffected by it): it is
what a class-agnostic bottom-up map can key on to find the planted cell,
while the clutter distractors act as false saliency it must learn to
reject.  Without such a cue no linear bottom-up map can localize the
planted cell - the per-cell detection SNR would be at most
signal_strength against unit background noise across n cells.

Everything is a deterministic function of the config seed via SplitMix64
with documented stream splitting: the master stream yields a prototype
seed, a distractor seed, a marker seed, then one sub-seed per example
(train split first, then val).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .pose import NUM_POSE_CHANNELS, PoseTarget
from .tensors import ShapeError

# Fixed keypoint offsets (row, col) around the planted cell; keypoints
# falling outside the grid are masked out.
KEYPOINT_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1),
    (-2, 0), (2, 0), (0, -2), (0, 2), (-2, -2), (-2, 2), (2, -2), (2, 2),
)


@dataclass(frozen=True)
class PlantedTaskConfig:
    n1: int = 7
    n2: int = 7
    f: int = 32
    K: int = 8
    train_samples: int = 2000
    val_samples: int = 500
    signal_strength: float = 3.0
    clutter_classes: int = 4
    seed: int = 7
    multi_label: bool = False

    def __post_init__(self):
        for name in ("n1", "n2", "f", "K", "train_samples", "val_samples"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.clutter_classes < 0:
            raise ValueError("clutter_classes must be nonnegative")
        if self.K > self.f:
            raise ValueError(
                f"K={self.K} classes need K <= f={self.f} for distinguishable prototypes"
            )

    @property
    def n(self) -> int:
        return self.n1 * self.n2


@dataclass(frozen=True)
class LabeledExample:
    X: np.ndarray              # (n, f)
    label: object              # int class id, or (K,) binary vector in multi-label mode
    planted_loc: int           # primary discriminative cell
    planted_locs: tuple = ()   # all planted cells (multi-label)
    pose_target: PoseTarget | None = None


@dataclass
class Dataset:
    """Array-of-structs view of a generated split."""

    config: PlantedTaskConfig
    X: np.ndarray                 # (m, n, f)
    labels: np.ndarray            # (m,) int or (m, K) binary
    planted: np.ndarray           # (m,) primary planted cell
    planted_all: list = field(default_factory=list)  # per-example tuple of cells
    prototypes: np.ndarray | None = None             # (K, f), shared with the twin split
    pose_heatmaps: np.ndarray | None = None          # (m, n, 16)
    pose_masks: np.ndarray | None = None             # (m, 16)

    def __len__(self) -> int:
        return self.X.shape[0]

    def example(self, i: int) -> LabeledExample:
        pose = None
        if self.pose_heatmaps is not None:
            pose = PoseTarget(self.pose_heatmaps[i], self.pose_masks[i])
        return LabeledExample(
            X=self.X[i],
            label=self.labels[i] if self.labels.ndim == 1 else self.labels[i].copy(),
            planted_loc=int(self.planted[i]),
            planted_locs=tuple(self.planted_all[i]) if self.planted_all else (int(self.planted[i]),),
            pose_target=pose,
        )


def _unit_rows(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def class_prototypes(config: PlantedTaskConfig):
    """(prototypes, distractors, marker) derived from the config seed.

    Prototypes: K unit-norm rows, then centered across classes.
    Distractors: clutter_classes unit-norm rows, not centered.
    Marker: one unit-norm row, orthogonalized against the prototype span
    (needs K < f; with K == f the marker is left unprojected).
    """
    master = rng.u64_stream(config.seed, 3)
    protos = rng.normal_stream(int(master[0]), config.K * config.f).reshape(config.K, config.f)
    protos = _unit_rows(protos)
    protos = protos - protos.mean(axis=0, keepdims=True)
    if config.clutter_classes > 0:
        d = rng.normal_stream(int(master[1]), config.clutter_classes * config.f)
        distractors = _unit_rows(d.reshape(config.clutter_classes, config.f))
    else:
        distractors = np.zeros((0, config.f))
    marker = rng.normal_stream(int(master[2]), config.f)
    if config.K < config.f:
        q, _ = np.linalg.qr(protos.T)  # orthonormal basis of the prototype span
        marker = marker - q @ (q.T @ marker)
    marker = marker / np.linalg.norm(marker)
    return protos, distractors, marker


def _gen_example(sub_seed, config, protos, distractors, marker):
    n, f, K, C = config.n, config.f, config.K, config.clutter_classes
    # fixed per-example draw budget: 8 header u64s, 2 per clutter cell,
    # then an even number for the background normals
    n_norm = 2 * ((n * f + 1) // 2)
    u = rng.u64_stream(int(sub_seed), 8 + 2 * C + n_norm)
    head, rest = u[:8 + 2 * C], u[8 + 2 * C:]
    X = rng.normals_from_u64(rest)[: n * f].reshape(n, f)

    if config.multi_label:
        num = 1 + int(head[0] % 3)
        labels = np.zeros(K)
        locs = []
        for j in range(3):
            cls = int(head[1 + 2 * j] % K)
            loc = int(head[2 + 2 * j] % n)
            if j < num:
                while loc in locs:  # dedupe by linear probing
                    loc = (loc + 1) % n
                locs.append(loc)
                labels[cls] = 1.0
                X[loc] += config.signal_strength * (protos[cls] + marker)
        label, primary = labels, locs[0]
    else:
        cls = int(head[0] % K)
        primary = int(head[1] % n)
        locs = [primary]
        X[primary] += config.signal_strength * (protos[cls] + marker)
        label = cls

    for j in range(C):
        if n > 1:
            cell = (primary + 1 + int(head[8 + 2 * j] % (n - 1))) % n
        else:
            cell = primary  # degenerate single-cell grid
        pattern = int(head[9 + 2 * j] % C)
        X[cell] += config.signal_strength * distractors[pattern]
    return X, label, primary, tuple(locs)


def _gen_split(sub, config, protos, distractors, marker):
    m = len(sub)
    Xs = np.empty((m, config.n, config.f))
    planted = np.empty(m, dtype=np.int64)
    planted_all = []
    if config.multi_label:
        labels = np.zeros((m, config.K))
    else:
        labels = np.empty(m, dtype=np.int64)
    for i, s in enumerate(sub):
        X, label, primary, locs = _gen_example(s, config, protos, distractors, marker)
        Xs[i] = X
        labels[i] = label
        planted[i] = primary
        planted_all.append(locs)
    return Dataset(config=config, X=Xs, labels=labels, planted=planted,
                   planted_all=planted_all, prototypes=protos)


def gen_planted(config: PlantedTaskConfig):
    """Generate (train, val) datasets; byte-identical for identical configs."""
    protos, distractors, marker = class_prototypes(config)
    total = config.train_samples + config.val_samples
    sub = rng.u64_stream(config.seed, 3 + total)[3:]
    train = _gen_split(sub[: config.train_samples], config, protos, distractors, marker)
    val = _gen_split(sub[config.train_samples:], config, protos, distractors, marker)
    return train, val


def gen_pose_targets(dataset: Dataset, sigma: float = 1.0) -> Dataset:
    """Attach 16 Gaussian keypoint heatmaps (peak 1.0) around each planted cell."""
    cfg = dataset.config
    m, n = len(dataset), cfg.n
    rows, cols = np.divmod(np.arange(n), cfg.n2)
    heatmaps = np.zeros((m, n, NUM_POSE_CHANNELS))
    masks = np.zeros((m, NUM_POSE_CHANNELS))
    for i in range(m):
        pr, pc = divmod(int(dataset.planted[i]), cfg.n2)
        for c, (dr, dc) in enumerate(KEYPOINT_OFFSETS):
            kr, kc = pr + dr, pc + dc
            if 0 <= kr < cfg.n1 and 0 <= kc < cfg.n2:
                masks[i, c] = 1.0
                d2 = (rows - kr) ** 2 + (cols - kc) ** 2
                heatmaps[i, :, c] = np.exp(-d2 / (2.0 * sigma * sigma))
    return replace_pose(dataset, heatmaps, masks)


def replace_pose(dataset: Dataset, heatmaps, masks) -> Dataset:
    return Dataset(config=dataset.config, X=dataset.X, labels=dataset.labels,
                   planted=dataset.planted, planted_all=dataset.planted_all,
                   prototypes=dataset.prototypes,
                   pose_heatmaps=heatmaps, pose_masks=masks)


def nearest_prototype_accuracy(dataset: Dataset) -> float:
    """Oracle that reads only the planted cell: argmax_k proto_k . X[planted]."""
    if dataset.prototypes is None or dataset.labels.ndim != 1:
        raise ValueError("oracle needs prototypes and single-label data")
    planted_feats = dataset.X[np.arange(len(dataset)), dataset.planted]
    preds = np.argmax(planted_feats @ dataset.prototypes.T, axis=1)
    return float(np.mean(preds == dataset.labels))


def metric_accuracy(scores, labels) -> float:
    """Fraction of argmax hits; ties break toward the lowest class index."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape[0] == 0:
        raise ShapeError(f"scores must be nonempty (m, K), got {scores.shape}")
    if labels.shape != (scores.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} vs scores {scores.shape}")
    return float(np.mean(np.argmax(scores, axis=1) == labels))


def metric_map(scores, labels):
    """Mean average precision over classes with at least one positive.

    Per class, examples are ranked by descending score with ties broken by
    ascending example index; AP is the mean of precision-at-each-positive.
    Returns (mAP, skipped_classes).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape or scores.ndim != 2:
        raise ShapeError(f"scores {scores.shape} vs labels {labels.shape}")
    aps, skipped = [], []
    for k in range(scores.shape[1]):
        pos = labels[:, k] > 0
        if not pos.any():
            skipped.append(k)
            continue
        order = np.argsort(-scores[:, k], kind="stable")
        hits = labels[order, k] > 0
        cum_hits = np.cumsum(hits)
        precision = cum_hits[hits] / (np.flatnonzero(hits) + 1)
        aps.append(precision.mean())
    if not aps:
        raise ValueError("metric_map: no class has a positive example")
    return float(np.mean(aps)), skipped


def write_labels(path, dataset: Dataset) -> None:
    """Line format: example_index<TAB>label[,label...]<TAB>planted_loc."""
    with open(path, "w") as fh:
        for i in range(len(dataset)):
            if dataset.labels.ndim == 1:
                lab = str(int(dataset.labels[i]))
            else:
                lab = ",".join(str(k) for k in np.flatnonzero(dataset.labels[i]))
            fh.write(f"{i}\t{lab}\t{int(dataset.planted[i])}\n")


def read_labels(path, num_classes: int, multi_label: bool):
    """Inverse of write_labels; returns (labels, planted)."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(line.split("\t"))
    m = len(rows)
    planted = np.empty(m, dtype=np.int64)
    if multi_label:
        labels = np.zeros((m, num_classes))
    else:
        labels = np.empty(m, dtype=np.int64)
    for idx, lab, loc in rows:
        i = int(idx)
        planted[i] = int(loc)
        if multi_label:
            for k in lab.split(","):
                labels[i, int(k)] = 1.0
        else:
            labels[i] = int(lab)
    return labels, planted
