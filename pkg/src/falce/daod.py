"""Numerical kernels for domain-adversarial detection training.

Covers box overlap, proposal screening, the image/instance/consistency
domain losses with their analytic gradients, relation-matrix
regularization, an entropy-style discriminator loss over concatenated
feature/logit vectors, and a two-dimensional min-max trainer small
enough to verify the saddle-point behaviour numerically.

Probabilities are clamped to ``[EPS, 1 - EPS]`` before any logarithm so
every loss stays finite.
"""

from __future__ import annotations

import dataclasses
from typing import Sequence

import numpy as np

from falce.errors import NumericsError

#: Clamp width keeping log arguments strictly inside (0, 1).
EPS = 1e-7

#: Default weight of the adversarial (image+instance+consistency) terms.
LAMBDA1_DEFAULT = 0.1
#: Default weight of the relation-matrix regularizer.
LAMBDA2_DEFAULT = 0.1
#: Default objectness cut-off for proposal screening.
TAU_DEFAULT = 0.7


@dataclasses.dataclass(frozen=True)
class BBox:
    """Axis-aligned box with half-open pixel extents."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError("box must satisfy x1 < x2 and y1 < y2")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclasses.dataclass(frozen=True)
class Proposal:
    """A candidate region with its objectness score."""

    box: BBox
    objectness: float

    def __post_init__(self):
        if not (0.0 <= self.objectness <= 1.0):
            raise ValueError("objectness must lie in [0, 1]")


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    ix = min(a.x2, b.x2) - max(a.x1, b.x1)
    iy = min(a.y2, b.y2) - max(a.y1, b.y1)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def pim_filter(candidates: Sequence[Proposal], accepted: Sequence[Proposal],
               tau: float = TAU_DEFAULT) -> list[Proposal]:
    """Keep confident candidates that are new and disjoint from ``accepted``.

    A candidate survives when its objectness exceeds ``tau``, it does not
    already appear in ``accepted`` (value equality), and it overlaps no
    accepted box.  Input order is preserved.
    """
    kept = []
    for cand in candidates:
        if cand.objectness <= tau:
            continue
        if any(cand == acc for acc in accepted):
            continue
        if any(iou(cand.box, acc.box) != 0.0 for acc in accepted):
            continue
        kept.append(cand)
    return kept


def _clamped(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    return np.clip(arr, EPS, 1.0 - EPS)


@dataclasses.dataclass(frozen=True, eq=False)
class DomainBatch:
    """Domain-classifier outputs for a batch of images.

    Per image: a map of image-level activations (at least one), the
    instance-level probabilities of its proposals (possibly none), and a
    domain label (1 = source, 0 = target).  All probabilities are
    clamped into ``[EPS, 1 - EPS]`` on construction.
    """

    activations: tuple
    instance_probs: tuple
    labels: np.ndarray

    def __init__(self, activations, instance_probs, labels):
        if not (len(activations) == len(instance_probs) == len(labels)):
            raise ValueError("per-image sequences must have equal length")
        if len(activations) == 0:
            raise ValueError("batch must contain at least one image")
        acts = []
        for a in activations:
            arr = np.asarray(a, dtype=np.float64).ravel()
            if arr.size == 0:
                raise ValueError("every image needs at least one activation")
            if not np.isfinite(arr).all() or arr.min() < 0.0 or arr.max() > 1.0:
                raise ValueError("activations must be probabilities in [0, 1]")
            arr = _clamped(arr)
            arr.setflags(write=False)
            acts.append(arr)
        probs = []
        for p in instance_probs:
            arr = np.asarray(p, dtype=np.float64).ravel()
            if arr.size and (not np.isfinite(arr).all()
                             or arr.min() < 0.0 or arr.max() > 1.0):
                raise ValueError("instance probabilities must lie in [0, 1]")
            arr = _clamped(arr) if arr.size else arr
            arr.setflags(write=False)
            probs.append(arr)
        lab = np.asarray(labels, dtype=np.int64)
        if not np.isin(lab, (0, 1)).all():
            raise ValueError("domain labels must be 0 or 1")
        lab = lab.copy()
        lab.setflags(write=False)
        object.__setattr__(self, "activations", tuple(acts))
        object.__setattr__(self, "instance_probs", tuple(probs))
        object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.activations)


def image_domain_loss(batch: DomainBatch) -> float:
    """Image-level domain cross-entropy.

    Binary cross-entropy of each activation against the image's domain
    label, averaged over the activation map and summed over images.
    """
    total = 0.0
    for a, d in zip(batch.activations, batch.labels):
        if d == 1:
            total -= float(np.mean(np.log(a)))
        else:
            total -= float(np.mean(np.log(1.0 - a)))
    return total


def image_domain_loss_grad(batch: DomainBatch) -> tuple:
    """Partial derivatives of :func:`image_domain_loss` wrt each activation."""
    grads = []
    for a, d in zip(batch.activations, batch.labels):
        k = a.size
        if d == 1:
            grads.append(-1.0 / (a * k))
        else:
            grads.append(1.0 / ((1.0 - a) * k))
    return tuple(grads)


def instance_domain_loss(batch: DomainBatch) -> float:
    """Instance-level domain cross-entropy, summed over all proposals."""
    total = 0.0
    for p, d in zip(batch.instance_probs, batch.labels):
        if p.size == 0:
            continue
        if d == 1:
            total -= float(np.sum(np.log(p)))
        else:
            total -= float(np.sum(np.log(1.0 - p)))
    return total


def instance_domain_loss_grad(batch: DomainBatch) -> tuple:
    """Partial derivatives of :func:`instance_domain_loss` wrt each probability."""
    grads = []
    for p, d in zip(batch.instance_probs, batch.labels):
        if d == 1:
            grads.append(-1.0 / p if p.size else p)
        else:
            grads.append(1.0 / (1.0 - p) if p.size else p)
    return tuple(grads)


def consistency_loss(batch: DomainBatch) -> float:
    """Disagreement between image-level and instance-level classifiers.

    Sums ``|mean(activations_i) - p_ij|`` over every proposal.
    """
    total = 0.0
    for a, p in zip(batch.activations, batch.instance_probs):
        if p.size == 0:
            continue
        total += float(np.sum(np.abs(float(np.mean(a)) - p)))
    return total


def consistency_loss_grad(batch: DomainBatch) -> tuple[tuple, tuple]:
    """Subgradients of :func:`consistency_loss`.

    Returns ``(wrt_activations, wrt_instance_probs)``; exact ties
    contribute zero.
    """
    grads_a = []
    grads_p = []
    for a, p in zip(batch.activations, batch.instance_probs):
        if p.size == 0:
            grads_a.append(np.zeros_like(a))
            grads_p.append(p)
            continue
        mean = float(np.mean(a))
        s = np.sign(mean - p)           # +1 where the mean exceeds p_ij
        grads_p.append(-s)
        grads_a.append(np.full_like(a, float(np.sum(s)) / a.size))
    return tuple(grads_a), tuple(grads_p)


@dataclasses.dataclass(frozen=True, eq=False)
class RelationMatrix:
    """Row-stochastic matrix of class-to-class transition weights."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise ValueError("relation matrix must be square and non-empty")
        if (arr < 0.0).any() or not np.isfinite(arr).all():
            raise ValueError("relation matrix entries must be non-negative reals")
        if np.abs(arr.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValueError("relation matrix rows must each sum to 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v)) / (nu * nv)


def build_relation_matrix(features: Sequence, num_classes: int) -> RelationMatrix:
    """Relation matrix from labeled feature vectors.

    Class prototypes are per-class mean vectors; entry ``(r, c)`` is the
    row-wise softmax of cosine similarities between prototypes.  Classes
    with no features act as zero prototypes, which leaves their rows
    uniform.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be positive")
    if len(features) == 0:
        raise ValueError("need at least one labeled feature")
    dim = None
    sums = {}
    counts = {}
    for vec, label in features:
        v = np.asarray(vec, dtype=np.float64).ravel()
        if dim is None:
            dim = v.size
        elif v.size != dim:
            raise ValueError("feature vectors must share a dimension")
        label = int(label)
        if not (0 <= label < num_classes):
            raise ValueError(f"class label {label} outside [0, {num_classes})")
        sums[label] = sums.get(label, 0.0) + v
        counts[label] = counts.get(label, 0) + 1
    protos = np.zeros((num_classes, dim), dtype=np.float64)
    for label, total in sums.items():
        protos[label] = total / counts[label]
    sims = np.zeros((num_classes, num_classes), dtype=np.float64)
    for r in range(num_classes):
        for c in range(num_classes):
            sims[r, c] = _cosine(protos[r], protos[c])
    shifted = np.exp(sims - sims.max(axis=1, keepdims=True))
    return RelationMatrix(shifted / shifted.sum(axis=1, keepdims=True))


def update_grm(grm: RelationMatrix, lrm: RelationMatrix,
               momentum: float) -> RelationMatrix:
    """Exponential moving-average update of the global matrix."""
    if grm.size != lrm.size:
        raise ValueError("relation matrices must share a size")
    if not (0.0 <= momentum < 1.0):
        raise ValueError("momentum must lie in [0, 1)")
    mixed = momentum * grm.entries + (1.0 - momentum) * lrm.entries
    return RelationMatrix(mixed / mixed.sum(axis=1, keepdims=True))


def mgrm_loss(lrm: RelationMatrix, grm: RelationMatrix, present) -> float:
    """Mean absolute row disagreement over the classes present in a batch."""
    if lrm.size != grm.size:
        raise ValueError("relation matrices must share a size")
    rows = sorted(set(int(r) for r in present))
    if not rows:
        raise ValueError("present set must be non-empty")
    if rows[0] < 0 or rows[-1] >= lrm.size:
        raise ValueError("present set contains an out-of-range class")
    total = 0.0
    for r in rows:
        total += float(np.sum(np.abs(lrm.entries[r] - grm.entries[r])))
    return total / len(rows)


@dataclasses.dataclass(frozen=True, eq=False)
class DiscriminatorParams:
    """Logistic linear discriminator over concatenated feature/logit vectors."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if w.size == 0 or not np.isfinite(w).all() or not np.isfinite(self.bias):
            raise ValueError("discriminator parameters must be finite and non-empty")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def _eagr_inputs(pairs) -> np.ndarray:
    rows = []
    for feat, logit in pairs:
        rows.append(np.concatenate([
            np.asarray(feat, dtype=np.float64).ravel(),
            np.asarray(logit, dtype=np.float64).ravel(),
        ]))
    return np.stack(rows)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def eagr_disc_loss(src: Sequence, tgt: Sequence,
                   params: DiscriminatorParams) -> float:
    """Binary cross-entropy of the entity-aware discriminator.

    Each sample is the concatenation of a feature vector and its logit
    vector; source samples carry label 1, target samples 0.  The loss is
    summed over all samples.
    """
    if len(src) == 0 or len(tgt) == 0:
        raise ValueError("both domains must contribute samples")
    xs = _eagr_inputs(src)
    xt = _eagr_inputs(tgt)
    if xs.shape[1] != params.weights.size or xt.shape[1] != params.weights.size:
        raise ValueError("discriminator weight size does not match inputs")
    s_src = _clamped(_sigmoid(xs @ params.weights + params.bias))
    s_tgt = _clamped(_sigmoid(xt @ params.weights + params.bias))
    return -float(np.sum(np.log(s_src))) - float(np.sum(np.log(1.0 - s_tgt)))


def eagr_disc_grad(src: Sequence, tgt: Sequence,
                   params: DiscriminatorParams) -> tuple[np.ndarray, float]:
    """Gradient of :func:`eagr_disc_loss` wrt the discriminator parameters."""
    xs = _eagr_inputs(src)
    xt = _eagr_inputs(tgt)
    s_src = _sigmoid(xs @ params.weights + params.bias)
    s_tgt = _sigmoid(xt @ params.weights + params.bias)
    resid_src = s_src - 1.0
    resid_tgt = s_tgt
    gw = xs.T @ resid_src + xt.T @ resid_tgt
    gb = float(np.sum(resid_src) + np.sum(resid_tgt))
    return gw, gb


def total_loss(l_det: float, dis_losses: Sequence[float], l_mgrm: float,
               l_eagr: float, lambda1: float = LAMBDA1_DEFAULT,
               lambda2: float = LAMBDA2_DEFAULT) -> float:
    """Weighted sum of the detection, domain, relation, and entity terms."""
    values = [l_det, l_mgrm, l_eagr, *dis_losses]
    if not all(np.isfinite(v) for v in values):
        raise ValueError("loss terms must be finite")
    if lambda1 < 0.0 or lambda2 < 0.0:
        raise ValueError("loss weights must be non-negative")
    return l_det + lambda1 * float(sum(dis_losses)) + lambda2 * l_mgrm + l_eagr


# ---------------------------------------------------------------------------
# Desk-scale min-max trainer
# ---------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class StepRecord:
    """Losses and held-out accuracies at the start of one training step."""

    step: int
    det_loss: float
    dis_loss: float
    total_loss: float
    disc_acc: float
    class_acc: float


@dataclasses.dataclass
class ToyAdaptState:
    """Parameters and history of the two-dimensional min-max trainer."""

    feat_w: np.ndarray
    feat_b: np.ndarray
    cls_w: np.ndarray
    cls_b: np.ndarray
    dis_w: np.ndarray
    dis_b: float
    steps: int
    history: list

    def __post_init__(self):
        for arr in (self.feat_w, self.feat_b, self.cls_w, self.cls_b, self.dis_w):
            if not np.isfinite(arr).all():
                raise ValueError("trainer parameters must be finite")
        if not np.isfinite(self.dis_b):
            raise ValueError("trainer parameters must be finite")

    def features(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.feat_w.T + self.feat_b

    def class_logits(self, points: np.ndarray) -> np.ndarray:
        return self.features(points) @ self.cls_w.T + self.cls_b

    def class_accuracy(self, points: np.ndarray, labels: np.ndarray) -> float:
        pred = np.argmax(self.class_logits(points), axis=1)
        return float(np.mean(pred == np.asarray(labels)))

    def disc_accuracy(self, src_points: np.ndarray, tgt_points: np.ndarray) -> float:
        fs = self.features(src_points)
        ft = self.features(tgt_points)
        scores = np.concatenate([fs, ft]) @ self.dis_w + self.dis_b
        pred = _sigmoid(scores) > 0.5
        truth = np.concatenate([
            np.ones(len(fs), dtype=bool), np.zeros(len(ft), dtype=bool)])
        return float(np.mean(pred == truth))


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = np.exp(z - z.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def toy_adapt(src_points, src_labels, tgt_points, steps: int, lr: float,
              lambda1: float = LAMBDA1_DEFAULT, eval_src_points=None,
              eval_src_labels=None, eval_tgt_points=None) -> ToyAdaptState:
    """Alternating min-max training of a tiny domain-adversarial model.

    The feature map and class head descend the class cross-entropy minus
    ``lambda1`` times the discriminator loss; the discriminator then
    descends its own loss at the updated features.  Plain gradient
    descent with a fixed learning rate; fully deterministic.

    Held-out points (defaulting to the training sets) are scored every
    step and recorded in the history.  Raises :class:`NumericsError` if
    any loss stops being finite.
    """
    xs = np.asarray(src_points, dtype=np.float64)
    ys = np.asarray(src_labels, dtype=np.int64)
    xt = np.asarray(tgt_points, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != 2 or xt.ndim != 2 or xt.shape[1] != 2:
        raise ValueError("points must be arrays of 2-D rows")
    if len(xs) == 0 or len(xt) == 0:
        raise ValueError("both domains must be non-empty")
    n_classes = int(ys.max()) + 1 if ys.size else 0
    if n_classes < 2:
        raise ValueError("source set must contain at least two classes")
    if steps < 1 or lr <= 0.0 or lambda1 < 0.0:
        raise ValueError("steps must be >= 1, lr > 0, lambda1 >= 0")
    ev_xs = xs if eval_src_points is None else np.asarray(eval_src_points, float)
    ev_ys = ys if eval_src_labels is None else np.asarray(eval_src_labels)
    ev_xt = xt if eval_tgt_points is None else np.asarray(eval_tgt_points, float)

    n, m = len(xs), len(xt)
    onehot = np.eye(n_classes)[ys]
    # Start the feature map at half scale: the discriminator must then
    # grow large weights to separate the shrunken domains, which feeds a
    # proportionally stronger reversal gradient back to the features and
    # lets the min player reach the saddle within the step budget.
    feat_w = 0.5 * np.eye(2)
    feat_b = np.zeros(2)
    cls_w = np.zeros((n_classes, 2))
    cls_b = np.zeros(n_classes)
    dis_w = np.zeros(2)
    dis_b = 0.0
    z = np.concatenate([np.ones(n), np.zeros(m)])
    history = []

    # Overflow is an expected failure mode here (too-large step sizes);
    # it is detected on the loss values and escalated as a clean error,
    # so the transient warnings are silenced.
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(steps):
            fs = xs @ feat_w.T + feat_b
            ft = xt @ feat_w.T + feat_b

            # class head on source
            logits = fs @ cls_w.T + cls_b
            probs = _softmax_rows(logits)
            picked = np.clip(probs[np.arange(n), ys], EPS, 1.0)
            l_det = -float(np.mean(np.log(picked)))

            # domain discriminator on both
            f_all = np.concatenate([fs, ft])
            s = _sigmoid(f_all @ dis_w + dis_b)
            s_safe = np.clip(s, EPS, 1.0 - EPS)
            l_dis = -float(np.mean(z * np.log(s_safe) + (1.0 - z) * np.log(1.0 - s_safe)))
            l_total = l_det - lambda1 * l_dis
            if not (np.isfinite(l_det) and np.isfinite(l_dis)):
                raise NumericsError(f"training diverged at step {step}")

            state = ToyAdaptState(feat_w, feat_b, cls_w, cls_b, dis_w, dis_b,
                                  step, [])
            history.append(StepRecord(
                step=step, det_loss=l_det, dis_loss=l_dis, total_loss=l_total,
                disc_acc=state.disc_accuracy(ev_xs, ev_xt),
                class_acc=state.class_accuracy(ev_xs, ev_ys)))

            # gradients for the feature map and class head (descend det - l1*dis)
            dlogits = (probs - onehot) / n
            g_cls_w = dlogits.T @ fs
            g_cls_b = dlogits.sum(axis=0)
            df_det = dlogits @ cls_w
            glogit = (s - z) / (n + m)
            df_dis = np.outer(glogit, dis_w)
            df_src = df_det - lambda1 * df_dis[:n]
            df_tgt = -lambda1 * df_dis[n:]
            g_feat_w = df_src.T @ xs + df_tgt.T @ xt
            g_feat_b = df_src.sum(axis=0) + df_tgt.sum(axis=0)

            feat_w = feat_w - lr * g_feat_w
            feat_b = feat_b - lr * g_feat_b
            cls_w = cls_w - lr * g_cls_w
            cls_b = cls_b - lr * g_cls_b

            # discriminator descends its own loss at the updated features
            fs2 = xs @ feat_w.T + feat_b
            ft2 = xt @ feat_w.T + feat_b
            f_all2 = np.concatenate([fs2, ft2])
            s2 = _sigmoid(f_all2 @ dis_w + dis_b)
            glogit2 = (s2 - z) / (n + m)
            g_dis_w = f_all2.T @ glogit2
            g_dis_b = float(glogit2.sum())
            dis_w = dis_w - lr * g_dis_w
            dis_b = dis_b - lr * g_dis_b

    return ToyAdaptState(feat_w, feat_b, cls_w, cls_b, dis_w, dis_b,
                         steps, history)


def make_gaussian_domains(n_per_class: int = 200, noise: float = 0.3,
                          shift=(2.0, 2.0), seed: int = 7):
    """Two-class Gaussian source data plus a shifted unlabeled copy.

    Source classes sit at ``(+1, 0)`` and ``(-1, 0)``; the target domain
    is the same mixture translated by ``shift``.  Returns
    ``(src_points, src_labels, tgt_points)``.
    """
    rng = np.random.default_rng(seed)
    means = np.array([[1.0, 0.0], [-1.0, 0.0]])
    pts = []
    labels = []
    for cls, mu in enumerate(means):
        pts.append(mu + noise * rng.standard_normal((n_per_class, 2)))
        labels.append(np.full(n_per_class, cls, dtype=np.int64))
    src = np.concatenate(pts)
    src_y = np.concatenate(labels)
    tgt = np.concatenate([
        mu + np.asarray(shift, dtype=np.float64)
        + noise * rng.standard_normal((n_per_class, 2))
        for mu in means])
    return src, src_y, tgt


def run_demo(steps: int = 2000, lr: float = 0.05,
             lambda1: float = LAMBDA1_DEFAULT, seed: int = 7,
             n_per_class: int = 200, noise: float = 0.3, shift=(2.0, 2.0)):
    """Train the toy model on shifted Gaussians with held-out evaluation.

    Returns ``(state, eval_sets)`` where ``eval_sets`` is the held-out
    ``(src_points, src_labels, tgt_points)`` triple used for the history
    metrics.  Everything derives from ``seed``.
    """
    train = make_gaussian_domains(n_per_class, noise, shift, seed)
    held = make_gaussian_domains(n_per_class, noise, shift, seed + 1)
    state = toy_adapt(train[0], train[1], train[2], steps, lr, lambda1,
                      eval_src_points=held[0], eval_src_labels=held[1],
                      eval_tgt_points=held[2])
    return state, held
