"""Score-vector algebra for Q-category classifiers.

All operators act on the last axis, so a single score vector of shape
``(Q,)`` and a stack of shape ``(..., Q)`` are handled alike.  Category
labels are 1-based; :data:`REJECTED` (``0``) marks a tied maximum.
"""
import enum
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

REJECTED = 0


class Operator(enum.Enum):
    DELTA = "delta"
    DELTA_STAR = "delta-star"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"delta": cls.DELTA, "delta-star": cls.DELTA_STAR,
                   "deltastar": cls.DELTA_STAR, "delta*": cls.DELTA_STAR}
        try:
            return aliases[key]
        except KeyError:
            raise ValidationError(f"unknown margin operator {name!r}") from None


@dataclass(frozen=True)
class MarginConfig:
    gamma: float
    operator: Operator = Operator.DELTA

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValidationError(f"gamma must be > 0, got {self.gamma}")
        object.__setattr__(self, "operator", Operator.parse(self.operator))


def as_scores(v, q=None, min_q=3):
    """Validate and convert score vectors to a float array with last axis Q."""
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        raise ValidationError("score vector must have at least one axis")
    if arr.shape[-1] < min_q:
        raise ValidationError(
            f"need Q >= {min_q} categories, got Q = {arr.shape[-1]}")
    if q is not None and arr.shape[-1] != q:
        raise ValidationError(f"expected Q = {q}, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("score vectors must be finite")
    return arr


def _max_of_others(v):
    # max_{l != k} v_l for every k, ties included
    order = np.argsort(-v, axis=-1, kind="stable")
    top = np.take_along_axis(v, order[..., :1], axis=-1)
    second = np.take_along_axis(v, order[..., 1:2], axis=-1)
    is_top = np.arange(v.shape[-1]) == order[..., :1]
    return np.where(is_top, second, top)


def classify(v):
    """Index (1-based) of the strict maximum, or ``REJECTED`` on a tie."""
    v = as_scores(v)
    idx = np.argmax(v, axis=-1)
    top = np.take_along_axis(v, idx[..., None], axis=-1)
    ties = (v == top).sum(axis=-1) > 1
    out = np.where(ties, REJECTED, idx + 1)
    return int(out) if out.ndim == 0 else out


def delta(v):
    """Half-gaps against the best competing coordinate."""
    v = as_scores(v)
    return 0.5 * (v - _max_of_others(v))


def m_x(v):
    return delta(v).max(axis=-1)


def delta_star(v):
    d = delta(v)
    top = d.max(axis=-1, keepdims=True)
    return np.sign(d) * top


def pi_gamma(v, gamma):
    """Clamp every coordinate to ``[-gamma, gamma]`` keeping its sign."""
    if not gamma > 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.minimum(np.abs(v), gamma)


def apply_operator(v, operator):
    op = Operator.parse(operator)
    return delta(v) if op is Operator.DELTA else delta_star(v)


def delta_gamma_sharp(v, cfg):
    return pi_gamma(apply_operator(v, cfg.operator), cfg.gamma)


def _check_labels(labels, q):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise ValidationError("sample must be a nonempty 1-d label vector")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise ValidationError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.min() < 1 or labels.max() > q:
        raise ValidationError(f"labels must lie in 1..{q}")
    return labels


def multiclass_margin(v, y):
    v = as_scores(v)
    q = v.shape[-1]
    if not 1 <= int(y) <= q:
        raise ValidationError(f"label {y} outside 1..{q}")
    y = int(y) - 1
    others = np.delete(v, y, axis=-1)
    return 0.5 * (v[..., y] - others.max(axis=-1))


def _label_coordinates(values, labels):
    return np.take_along_axis(values, (labels - 1)[:, None], axis=1)[:, 0]


def empirical_margin_risk(scores, labels, cfg):
    """Fraction of samples whose label coordinate of the margin image is < gamma."""
    scores = as_scores(scores)
    if scores.ndim != 2:
        raise ValidationError("scores must be an (m, Q) array")
    labels = _check_labels(labels, scores.shape[1])
    if labels.size != scores.shape[0]:
        raise ValidationError("scores and labels disagree in length")
    image = apply_operator(scores, cfg.operator)
    return float(np.mean(_label_coordinates(image, labels) < cfg.gamma))


def empirical_zero_one_risk(scores, labels):
    """Fraction with ``v_y <= max_{k != y} v_k``; ties count as errors."""
    scores = as_scores(scores)
    if scores.ndim != 2:
        raise ValidationError("scores must be an (m, Q) array")
    labels = _check_labels(labels, scores.shape[1])
    if labels.size != scores.shape[0]:
        raise ValidationError("scores and labels disagree in length")
    own = _label_coordinates(scores, labels)
    rest = scores.copy()
    rest[np.arange(len(labels)), labels - 1] = -np.inf
    return float(np.mean(own <= rest.max(axis=1)))
