"""Kernel multi-class SVM with the Weston-Watkins hinge loss.

Scores are ``h(x) = beta.T @ k(X_train, x) + bias`` with every row of
``beta`` and ``bias`` itself summing to zero, so ``sum_k h_k = 0``
everywhere.  Training works in the primal on ``(beta, bias)``: projected
gradient steps with backtracking on a smoothed hinge whose smoothing
shrinks to zero (see :func:`train`).
"""
import enum
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

log = logging.getLogger(__name__)

MODEL_FORMAT = "psidim-msvm"
MODEL_VERSION = 1


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "linear"
    degree: int = 2
    offset: float = 0.0
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "gaussian"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial" and (self.degree < 1 or self.offset < 0):
            raise ValidationError("polynomial kernel needs degree >= 1 and offset >= 0")
        if self.kind == "gaussian" and not self.bandwidth > 0:
            raise ValidationError("gaussian kernel needs bandwidth > 0")

    @classmethod
    def parse(cls, text):
        """``linear``, ``poly:DEGREE[:OFFSET]`` or ``gaussian:BANDWIDTH``."""
        parts = text.strip().lower().split(":")
        try:
            if parts[0] == "linear" and len(parts) == 1:
                return cls("linear")
            if parts[0] in ("poly", "polynomial") and len(parts) in (2, 3):
                offset = float(parts[2]) if len(parts) == 3 else 0.0
                return cls("polynomial", degree=int(parts[1]), offset=offset)
            if parts[0] in ("gaussian", "rbf") and len(parts) == 2:
                return cls("gaussian", bandwidth=float(parts[1]))
        except ValueError:
            pass
        raise ValidationError(f"cannot parse kernel spec {text!r}")

    def __str__(self):
        if self.kind == "polynomial":
            return f"poly:{self.degree}:{self.offset:g}"
        if self.kind == "gaussian":
            return f"gaussian:{self.bandwidth:g}"
        return "linear"

    def to_dict(self):
        return {"kind": self.kind, "degree": self.degree, "offset": self.offset,
                "bandwidth": self.bandwidth}


def _points(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValidationError("points must be a nonempty (m, p) array")
    if not np.all(np.isfinite(x)):
        raise ValidationError("features must be finite")
    return x


def cross_gram(kernel, a, b):
    a, b = _points(a), _points(b)
    if a.shape[1] != b.shape[1]:
        raise ValidationError(f"feature dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if kernel.kind == "gaussian":
        diff = a[:, None, :] - b[None, :, :]
        sq = np.einsum("ijp,ijp->ij", diff, diff)
        return np.exp(-sq / (2.0 * kernel.bandwidth ** 2))
    # einsum rather than BLAS: BLAS results can depend on memory alignment,
    # which would break bit-identical save/load round trips
    dots = np.einsum("ip,jp->ij", a, b)
    if kernel.kind == "polynomial":
        return (dots + kernel.offset) ** kernel.degree
    return dots


def gram(kernel, points):
    k = cross_gram(kernel, points, points)
    return 0.5 * (k + k.T)


def lambda_phi(points, kernel):
    """Radius of the points in feature space: ``max_i sqrt(k(x_i, x_i))``."""
    x = _points(points)
    diag = np.array([cross_gram(kernel, row, row)[0, 0] for row in x])
    return float(np.sqrt(np.maximum(diag, 0.0)).max())


class BiasMode(enum.Enum):
    FREE = "free"
    ZERO = "zero"


@dataclass(frozen=True)
class TrainConfig:
    """Solver settings.

    ``max_iters`` caps the total number of gradient steps across all
    smoothing stages.  A stage ends once the smoothed objective changes by
    less than ``tolerance`` (relative) between steps.
    """
    lam: float = 0.01
    max_iters: int = 4000
    tolerance: float = 1e-9
    bias_mode: BiasMode = BiasMode.FREE
    bias_bound: float = math.inf
    initial_smoothing: float = 1.0
    min_smoothing: float = 1e-6
    smoothing_decay: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValidationError(f"lambda must be > 0, got {self.lam}")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.initial_smoothing < 0 or self.min_smoothing < 0:
            raise ValidationError("smoothing bands must be >= 0")
        if not 0 < self.smoothing_decay < 1:
            raise ValidationError("smoothing_decay must lie in (0, 1)")
        if not self.bias_bound >= 0:
            raise ValidationError("bias_bound must be >= 0")
        object.__setattr__(self, "bias_mode", BiasMode(self.bias_mode))

    def smoothing_schedule(self):
        """Decreasing smoothing bands, ending with the exact hinge (0)."""
        out = []
        mu = self.initial_smoothing
        while mu >= self.min_smoothing and mu > 0:
            out.append(mu)
            mu *= self.smoothing_decay
        return out + [0.0]


@dataclass
class MSVMModel:
    training_points: np.ndarray
    beta: np.ndarray
    bias: np.ndarray
    kernel: KernelSpec
    converged: bool = True
    history: list = field(default_factory=list, repr=False)

    @property
    def q(self):
        return self.beta.shape[1]

    def scores(self, x):
        """Score vectors for each row of ``x``; shape (len(x), Q)."""
        k = cross_gram(self.kernel, self.training_points, x)
        return np.einsum("ij,ik->jk", k, self.beta) + self.bias

    def sum_to_zero_residual(self):
        return float(max(np.abs(self.beta.sum(axis=1)).max(), abs(self.bias.sum())))

    def to_dict(self):
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "kernel": self.kernel.to_dict(), "q": self.q,
                "training_points": self.training_points.tolist(),
                "beta": self.beta.tolist(), "bias": self.bias.tolist(),
                "converged": self.converged}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ValidationError("not a psidim M-SVM model file")
        if d.get("version") != MODEL_VERSION:
            raise ValidationError(f"unsupported model version {d.get('version')}")
        beta = np.array(d["beta"], dtype=np.float64).reshape(-1, d["q"])
        return cls(np.array(d["training_points"], dtype=np.float64), beta,
                   np.array(d["bias"], dtype=np.float64), KernelSpec(**d["kernel"]),
                   bool(d.get("converged", True)))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def zero_model(points, q, kernel):
    x = _points(points)
    return MSVMModel(x, np.zeros((x.shape[0], q)), np.zeros(q), kernel)


def evaluate(model, x):
    """Score vector of a single point ``x``."""
    return model.scores(np.asarray(x, dtype=np.float64)[None, :])[0]


def _ww_loss(scores, labels, mu=0.0):
    """Weston-Watkins loss ``sum_{k != y} max(0, 1 - (h_y - h_k))`` and its
    (sub)gradient in the scores.

    With ``mu > 0`` each hinge is replaced by its quadratic smoothing over a
    band of width ``mu`` (a lower bound within ``mu / 2`` of the hinge), and
    both value and gradient are those of the smoothed loss.
    """
    m = scores.shape[0]
    idx = np.arange(m)
    own = scores[idx, labels - 1][:, None]
    slack = 1.0 - (own - scores)
    slack[idx, labels - 1] = 0.0
    if mu > 0:
        pos = np.maximum(slack, 0.0)
        loss = float(np.where(pos < mu, pos * pos / (2 * mu), pos - 0.5 * mu).sum())
        weight = np.clip(slack / mu, 0.0, 1.0)
    else:
        loss = float(np.maximum(slack, 0.0).sum())
        weight = (slack > 0).astype(np.float64)
    weight[idx, labels - 1] = 0.0
    weight[idx, labels - 1] = -weight.sum(axis=1)
    return loss, weight


def _check_data(points, labels, q=None):
    x = _points(points)
    y = np.asarray(labels)
    if y.ndim != 1 or y.size != x.shape[0]:
        raise ValidationError("labels must be a vector with one entry per point")
    if not np.all(y == np.round(y)):
        raise ValidationError("labels must be integers")
    y = y.astype(np.int64)
    if y.min() < 1 or (q is not None and y.max() > q):
        raise ValidationError(f"labels must lie in 1..{q}")
    return x, y


def rkhs_norm_sq(beta, k):
    """``||w||^2 = sum_k beta[:, k]^T K beta[:, k]``."""
    return float(np.einsum("ik,ij,jk->", beta, k, beta))


def _objective(k, beta, bias, labels, lam, mu=0.0):
    loss, grad = _ww_loss(np.einsum("ij,jk->ik", k, beta) + bias, labels, mu)
    return loss + lam * rkhs_norm_sq(beta, k), grad


def objective(model, points, labels, lam):
    x, y = _check_data(points, labels, model.q)
    loss, _ = _ww_loss(model.scores(x), y)
    k = gram(model.kernel, model.training_points)
    return loss + lam * rkhs_norm_sq(model.beta, k)


def _center_rows(a):
    return a - a.mean(axis=-1, keepdims=True)


def project_bias(v, bound):
    """Euclidean projection onto ``{sum(b) = 0, |b_k| <= bound}``."""
    v = v - v.mean()
    if not np.isfinite(bound) or np.abs(v).max() <= bound:
        return v
    lo, hi = v.min() - bound, v.max() + bound
    for _ in range(200):
        tau = 0.5 * (lo + hi)
        if np.clip(v - tau, -bound, bound).sum() > 0:
            lo = tau
        else:
            hi = tau
    b = np.clip(v - 0.5 * (lo + hi), -bound, bound)
    return b - b.mean()


def train(points, labels, kernel, config=TrainConfig(), q=None):
    """Fit an M-SVM by accelerated projected gradient with smoothing continuation.

    The hinge is smoothed over a band ``mu`` that shrinks stage by stage
    (``config.smoothing_schedule()``) down to the exact hinge.  Within a
    stage, Nesterov steps with backtracking on the step size and adaptive
    restart minimise the smoothed objective; ``beta`` rows stay centred and
    the bias is projected onto ``{sum = 0, |b_k| <= bias_bound}``.

    The returned model is the iterate with the lowest exact objective seen,
    and ``history`` lists the exact objective every time that record
    improved, so it is non-increasing.  ``converged`` is False when
    ``max_iters`` ran out before the last stage settled.
    """
    x, y = _check_data(points, labels, q)
    q = int(y.max()) if q is None else q
    if q < 3:
        raise ValidationError(f"need Q >= 3 categories, got {q}")
    k = gram(kernel, x)
    m = x.shape[0]
    lam = config.lam
    free_bias = config.bias_mode is BiasMode.FREE
    bound = config.bias_bound

    def smoothed(beta, bias, mu):
        return _objective(k, beta, bias, y, lam, mu)

    def exact(beta, bias):
        return _objective(k, beta, bias, y, lam)[0]

    beta = np.zeros((m, q))
    bias = np.zeros(q)
    best = exact(beta, bias)
    best_beta, best_bias = beta, bias
    history = [best]
    lip = 1.0
    budget = config.max_iters
    converged = False
    for mu in config.smoothing_schedule():
        z_beta, z_bias = beta, bias
        momentum = 1.0
        prev = smoothed(beta, bias, mu)[0]
        settled = False
        while budget > 0:
            budget -= 1
            f, w = smoothed(z_beta, z_bias, mu)
            g_beta = _center_rows(np.einsum("ij,jk->ik", k, w + 2.0 * lam * z_beta))
            g_bias = _center_rows(w.sum(axis=0)) if free_bias else np.zeros(q)
            lip *= 0.5
            while True:
                n_beta = _center_rows(z_beta - g_beta / lip)
                n_bias = project_bias(z_bias - g_bias / lip, bound) if free_bias else z_bias
                nf = smoothed(n_beta, n_bias, mu)[0]
                d_beta, d_bias = n_beta - z_beta, n_bias - z_bias
                model_f = (f + float((g_beta * d_beta).sum() + g_bias @ d_bias)
                           + 0.5 * lip * float((d_beta * d_beta).sum() + d_bias @ d_bias))
                if nf <= model_f + 1e-12 * abs(f) or lip > 1e300:
                    break
                lip *= 2.0
            if nf > prev:
                # adaptive restart: drop momentum and step again from the last iterate
                momentum = 1.0
                z_beta, z_bias = beta, bias
                continue
            nxt = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * momentum * momentum))
            coef = (momentum - 1.0) / nxt
            z_beta = n_beta + coef * (n_beta - beta)
            z_bias = n_bias + coef * (n_bias - bias) if free_bias else n_bias
            beta, bias, momentum = n_beta, n_bias, nxt
            obj = exact(beta, bias)
            if obj < best:
                best, best_beta, best_bias = obj, beta, bias
                history.append(obj)
            change = (prev - nf) / max(abs(prev), 1e-300)
            prev = nf
            if change < config.tolerance:
                settled = True
                break
        if budget <= 0 and not settled:
            break
        converged = settled
    log.debug("train: %d record improvements, objective %.6g, converged=%s",
              len(history) - 1, history[-1], converged)
    return MSVMModel(x, best_beta, best_bias, kernel, converged, history)


def lambda_w(model, k=None):
    """Half the largest RKHS distance between two class weight vectors."""
    if k is None:
        k = gram(model.kernel, model.training_points)
    q = model.q
    best = 0.0
    for a in range(q):
        for b in range(a + 1, q):
            diff = model.beta[:, a] - model.beta[:, b]
            best = max(best, float(diff @ k @ diff))
    return 0.5 * math.sqrt(max(best, 0.0))
