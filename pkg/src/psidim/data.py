"""Datasets, synthetic generators and the class-tensor text format."""
import math
from dataclasses import dataclass

import numpy as np

from .capacity import FiniteFunctionClass
from .errors import ValidationError

CLASS_MAGIC = "psidim-class"
CLASS_VERSION = 1


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValidationError("dataset needs at least one sample")
        if self.labels.shape != (self.features.shape[0],):
            raise ValidationError("one label per sample required")
        if self.labels.min() < 1:
            raise ValidationError("labels must be >= 1")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features must be finite")

    def __len__(self):
        return self.labels.size

    @property
    def q(self):
        return int(self.labels.max())


def _parse_label(tok, lineno, q):
    try:
        value = float(tok)
    except ValueError:
        raise ValidationError(f"malformed label {tok!r} at line {lineno}") from None
    if value != int(value):
        raise ValidationError(f"non-integer label {tok!r} at line {lineno}")
    label = int(value)
    if label < 1 or (q is not None and label > q):
        raise ValidationError(f"label out of range at line {lineno}")
    return label


def load_dataset(path, fmt="delimited", q=None):
    """Read ``label,f1,f2,...`` (delimited) or ``label idx:val ...`` (sparse, 1-based)."""
    if fmt not in ("delimited", "sparse"):
        raise ValidationError(f"unknown dataset format {fmt!r}")
    labels, rows = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if fmt == "delimited":
                toks = [t.strip() for t in line.split(",")]
                labels.append(_parse_label(toks[0], lineno, q))
                try:
                    rows.append([float(t) for t in toks[1:]])
                except ValueError:
                    raise ValidationError(f"malformed feature at line {lineno}") from None
            else:
                toks = line.split()
                labels.append(_parse_label(toks[0], lineno, q))
                feats = {}
                for tok in toks[1:]:
                    idx, sep, val = tok.partition(":")
                    try:
                        idx, val = int(idx), float(val)
                    except ValueError:
                        raise ValidationError(f"malformed entry {tok!r} at line {lineno}") from None
                    if not sep or idx < 1:
                        raise ValidationError(f"malformed entry {tok!r} at line {lineno}")
                    feats[idx] = val
                rows.append(feats)
    if not labels:
        raise ValidationError(f"no samples in {path}")
    if fmt == "sparse":
        width = max((max(r) for r in rows if r), default=0)
        dense = np.zeros((len(rows), width))
        for i, r in enumerate(rows):
            for idx, val in r.items():
                dense[i, idx - 1] = val
    else:
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise ValidationError("rows have differing feature counts")
        dense = np.array(rows, dtype=np.float64).reshape(len(rows), -1)
    return Dataset(dense, np.array(labels), provenance=f"file:{path} ({fmt})")


def save_dataset(ds, path, fmt="delimited"):
    with open(path, "w") as fh:
        for label, row in zip(ds.labels, ds.features):
            if fmt == "delimited":
                fh.write(",".join([str(int(label))] + [repr(float(v)) for v in row]) + "\n")
            else:
                ents = [f"{j + 1}:{float(v)!r}" for j, v in enumerate(row) if v != 0]
                fh.write(" ".join([str(int(label))] + ents) + "\n")


def simplex_centers(q, sigma, spread=3.0):
    """Q centers on a circle with neighbouring distance ``4 * sigma * spread``."""
    side = 4.0 * sigma * spread
    radius = side / (2.0 * math.sin(math.pi / q))
    ang = 2.0 * math.pi * np.arange(q) / q
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def generate_blobs(q=3, per_class=20, sigma=0.3, centers=None, seed=0):
    if q < 3:
        raise ValidationError(f"need Q >= 3 categories, got {q}")
    if per_class < 1:
        raise ValidationError("per_class must be >= 1")
    if sigma < 0:
        raise ValidationError("sigma must be >= 0")
    if centers is None:
        centers = simplex_centers(q, max(sigma, 1e-3))
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape[0] != q:
        raise ValidationError(f"need {q} centers, got {centers.shape[0]}")
    rng = np.random.default_rng(seed)
    feats = np.concatenate([c + sigma * rng.standard_normal((per_class, centers.shape[1]))
                            for c in centers])
    labels = np.repeat(np.arange(1, q + 1), per_class)
    prov = f"blobs(q={q}, per_class={per_class}, sigma={sigma}, seed={seed})"
    return Dataset(feats, labels, provenance=prov)


FIXTURE_CENTERS = ((0.0, 0.0), (4.0, 0.0), (0.0, 4.0))


def fixture_blobs(seed=7):
    """The separable 3-class fixture: 20 points per class, sigma 0.3."""
    return generate_blobs(3, 20, 0.3, FIXTURE_CENTERS, seed)


# -- class tensors -----------------------------------------------------------

def write_class(cls, path):
    n, F, Q = cls.values.shape
    with open(path, "w") as fh:
        fh.write(f"{CLASS_MAGIC} {CLASS_VERSION}\n{n} {F} {Q}\n")
        fh.write("points " + " ".join(str(p) for p in cls.point_ids) + "\n")
        for i in range(n):
            for f in range(F):
                fh.write(" ".join(repr(float(v)) for v in cls.values[i, f]) + "\n")


def read_class(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0].split()[:1] != [CLASS_MAGIC]:
        raise ValidationError(f"{path}: missing '{CLASS_MAGIC}' header")
    try:
        version = int(lines[0].split()[1])
        n, F, Q = (int(t) for t in lines[1].split())
    except (IndexError, ValueError):
        raise ValidationError(f"{path}: malformed header") from None
    if version != CLASS_VERSION:
        raise ValidationError(f"{path}: unsupported class version {version}")
    body = lines[2:]
    ids = None
    if body and body[0].startswith("points"):
        ids = body[0].split()[1:]
        body = body[1:]
    if len(body) != n * F:
        raise ValidationError(f"{path}: expected {n * F} value rows, got {len(body)}")
    try:
        vals = np.array([[float(t) for t in row.split()] for row in body])
    except ValueError:
        raise ValidationError(f"{path}: non-numeric value row") from None
    if vals.shape != (n * F, Q):
        raise ValidationError(f"{path}: every value row needs {Q} entries")
    return FiniteFunctionClass(vals.reshape(n, F, Q), ids)
