"""Capacity measures of function classes restricted to a finite sample.

A class is given by its evaluation tensor ``values[i, f, k]`` (point ``i``,
function ``f``, output ``k``).  Everything here is exact: searches either
finish within the caller's :class:`Budget` or raise :class:`Overbudget`.
"""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import margin
from .errors import Overbudget, ValidationError


@dataclass(frozen=True)
class FiniteFunctionClass:
    values: np.ndarray
    point_ids: tuple = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 2:
            vals = vals[:, :, None]
        if vals.ndim != 3:
            raise ValidationError("class values must have shape (n, F, Q)")
        n, F, Q = vals.shape
        if n < 1 or F < 1 or Q < 1:
            raise ValidationError(f"class needs n, F, Q >= 1, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("class values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        ids = tuple(range(n)) if self.point_ids is None else tuple(self.point_ids)
        if len(ids) != n:
            raise ValidationError("point_ids length differs from n")
        object.__setattr__(self, "point_ids", ids)

    @property
    def n_points(self):
        return self.values.shape[0]

    @property
    def n_functions(self):
        return self.values.shape[1]

    @property
    def q(self):
        return self.values.shape[2]

    def restrict(self, points):
        points = list(points)
        return FiniteFunctionClass(self.values[points],
                                   tuple(self.point_ids[i] for i in points))

    def subclass(self, functions):
        return FiniteFunctionClass(self.values[:, list(functions)], self.point_ids)

    def duplicate_functions(self):
        """Pairs ``(f, g)``, ``f < g``, of functions identical on every point."""
        flat = self.values.transpose(1, 0, 2).reshape(self.n_functions, -1)
        seen = {}
        dups = []
        for f, row in enumerate(flat):
            key = row.tobytes()
            if key in seen:
                dups.append((seen[key], f))
            else:
                seen[key] = f
        return dups


@dataclass(frozen=True)
class Budget:
    max_subsets: int = 200_000
    max_candidates: int = 5_000_000
    max_net_subsets: int = 2_000_000


DEFAULT_BUDGET = Budget()


# -- pseudo-metric and covers ------------------------------------------------

def pseudo_metric(f, g, cls):
    F = cls.n_functions
    for idx in (f, g):
        if not 0 <= idx < F:
            raise ValidationError(f"function index {idx} out of range 0..{F - 1}")
    return float(np.abs(cls.values[:, f, :] - cls.values[:, g, :]).max())


def distance_matrix(cls):
    return _kernels.distance_matrix(np.ascontiguousarray(cls.values))


@dataclass(frozen=True)
class CoverResult:
    epsilon: float
    centers: tuple
    size: int
    is_valid_cover: bool


def _check_eps(epsilon):
    if not epsilon > 0:
        raise ValidationError(f"epsilon must be > 0, got {epsilon}")


def is_cover(dist, centers, epsilon):
    if len(centers) == 0:
        return dist.shape[0] == 0
    return bool(np.all(dist[list(centers)].min(axis=0) < epsilon))


def greedy_proper_net(cls, epsilon):
    """Proper net built greedily from uncovered functions.

    Each round picks, among the still-uncovered functions, the one whose
    open ball covers the most uncovered functions (lowest index on ties).
    """
    _check_eps(epsilon)
    dist = distance_matrix(cls)
    balls = dist < epsilon
    covered = np.zeros(cls.n_functions, dtype=bool)
    centers = []
    while not covered.all():
        gain = np.where(covered, -1, (balls & ~covered).sum(axis=1))
        c = int(np.argmax(gain))
        centers.append(c)
        covered |= balls[c]
    return CoverResult(epsilon, tuple(centers), len(centers),
                       is_cover(dist, centers, epsilon))


def exact_min_proper_net(cls, epsilon, budget=DEFAULT_BUDGET):
    """Minimum proper net by exhaustive search over center sets of growing size."""
    _check_eps(epsilon)
    dist = distance_matrix(cls)
    F = cls.n_functions
    full = (1 << F) - 1
    masks = [sum(1 << g for g in np.flatnonzero(dist[c] < epsilon)) for c in range(F)]
    examined = 0
    for r in range(1, F + 1):
        for centers in itertools.combinations(range(F), r):
            examined += 1
            if examined > budget.max_net_subsets:
                raise Overbudget(
                    f"exact net search exceeded {budget.max_net_subsets} center sets")
            acc = 0
            for c in centers:
                acc |= masks[c]
            if acc == full:
                return CoverResult(epsilon, centers, r, is_cover(dist, centers, epsilon))
    raise AssertionError("the whole class is always a proper net")


@dataclass(frozen=True)
class Randomized:
    seed: int = 0
    trials: int = 100


@dataclass(frozen=True)
class SupCoverResult:
    value: int
    points: tuple
    exact: bool

    @property
    def is_lower_bound(self):
        return not self.exact


def covering_number_sup(cls, epsilon, n, mode="exhaustive", budget=DEFAULT_BUDGET):
    """Largest minimum proper net size over ``n``-point subsets of the domain.

    ``mode="exhaustive"`` gives the exact maximum over all subsets;
    a :class:`Randomized` mode samples subsets and the result is only a
    lower bound (``exact=False``).
    """
    _check_eps(epsilon)
    if not 1 <= n <= cls.n_points:
        raise ValidationError(f"n must lie in 1..{cls.n_points}, got {n}")
    if isinstance(mode, Randomized):
        rng = np.random.default_rng(mode.seed)
        subsets = (tuple(sorted(rng.choice(cls.n_points, n, replace=False)))
                   for _ in range(mode.trials))
        exact = False
    elif mode == "exhaustive":
        total = math.comb(cls.n_points, n)
        if total > budget.max_subsets:
            raise Overbudget(f"{total} subsets of size {n} exceed budget {budget.max_subsets}")
        subsets = itertools.combinations(range(cls.n_points), n)
        exact = True
    else:
        raise ValidationError(f"unknown covering mode {mode!r}")
    best, best_pts = 0, ()
    for pts in subsets:
        size = exact_min_proper_net(cls.restrict(pts), epsilon, budget).size
        if size > best:
            best, best_pts = size, tuple(int(p) for p in pts)
    return SupCoverResult(best, best_pts, exact)


# -- psi families and shattering notions -------------------------------------

@dataclass(frozen=True)
class PsiFamily:
    """Mappings from categories 1..Q into {-1, +1, *}; ``*`` is stored as 0."""
    mappings: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mappings, dtype=np.int64)
        if m.ndim != 2 or m.shape[0] == 0:
            raise ValidationError("psi family must be a nonempty (A, Q) array")
        if not np.all(np.isin(m, (-1, 0, 1))):
            raise ValidationError("psi values must be -1, 0 (null) or +1")
        if np.any(np.all(m == 0, axis=1)):
            raise ValidationError("every psi mapping needs a value in {-1, +1}")
        m.setflags(write=False)
        object.__setattr__(self, "mappings", m)

    @property
    def q(self):
        return self.mappings.shape[1]

    def __len__(self):
        return self.mappings.shape[0]

    @classmethod
    def natarajan(cls, q):
        rows = []
        for k, l in ordered_pairs(q):
            row = [0] * q
            row[k - 1], row[l - 1] = 1, -1
            rows.append(row)
        return cls(np.array(rows))


def ordered_pairs(q):
    """All ``(k, l)`` with ``k != l`` in 1..q, lexicographic."""
    return [(k, l) for k in range(1, q + 1) for l in range(1, q + 1) if k != l]


class Notion:
    """A shattering notion reduced to per-(point, option, function) values.

    ``terms(vals)`` returns ``(plus, minus)``, each of shape (A, F): function
    ``f`` realises +1 under option ``a`` iff ``plus - b >= margin`` and -1
    iff ``minus + b >= margin``, where ``margin`` is the notion's scale (0
    for the discrete notions, whose witness is fixed at 0).
    """
    kind = None
    scale_sensitive = True

    @property
    def margin(self):
        return self.gamma

    def check_class(self, cls):
        raise NotImplementedError

    def terms(self, vals):
        raise NotImplementedError

    def describe_option(self, a):
        return a

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class Fat(Notion):
    gamma: float
    kind = "fat"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def check_class(self, cls):
        if cls.q != 1:
            raise ValidationError("fat-shattering needs a real-valued class (Q = 1)")

    def terms(self, vals):
        g = vals[:, 0]
        return g[None, :], -g[None, :]

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma}


@dataclass(frozen=True)
class PsiDiscrete(Notion):
    family: PsiFamily
    kind = "psi"
    scale_sensitive = False

    def check_class(self, cls):
        _check_categorical(cls, self.family.q)

    margin = 0.0

    def terms(self, vals):
        return _discrete_terms(self.family.mappings, vals[:, 0])

    def describe_option(self, a):
        return self.family.mappings[a].tolist()

    def to_dict(self):
        return {"kind": self.kind, "psi": self.family.mappings.tolist()}


@dataclass(frozen=True)
class NatarajanDiscrete(Notion):
    q: int
    kind = "natarajan"
    scale_sensitive = False

    def check_class(self, cls):
        _check_categorical(cls, self.q)

    margin = 0.0

    def terms(self, vals):
        return _discrete_terms(PsiFamily.natarajan(self.q).mappings, vals[:, 0])

    def describe_option(self, a):
        return list(ordered_pairs(self.q)[a])

    def to_dict(self):
        return {"kind": self.kind, "q": self.q}


@dataclass(frozen=True)
class GammaPsi(Notion):
    gamma: float
    family: PsiFamily
    kind = "gamma-psi"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def check_class(self, cls):
        if cls.q != self.family.q:
            raise ValidationError(f"psi family has Q = {self.family.q}, class has Q = {cls.q}")

    def terms(self, vals):
        maps = self.family.mappings
        plus = np.full((len(maps), vals.shape[0]), -np.inf)
        minus = np.full((len(maps), vals.shape[0]), -np.inf)
        for a, row in enumerate(maps):
            if np.any(row == 1):
                plus[a] = vals[:, row == 1].max(axis=1)
            if np.any(row == -1):
                minus[a] = vals[:, row == -1].max(axis=1)
        return plus, minus

    def describe_option(self, a):
        return self.family.mappings[a].tolist()

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma,
                "psi": self.family.mappings.tolist()}


@dataclass(frozen=True)
class GammaNatarajan(Notion):
    gamma: float
    kind = "gamma-natarajan"

    def __post_init__(self):
        _check_gamma(self.gamma)

    def check_class(self, cls):
        if cls.q < 2:
            raise ValidationError("margin Natarajan shattering needs Q >= 2 outputs")

    def terms(self, vals):
        pairs = ordered_pairs(vals.shape[1])
        i1 = np.array([p[0] - 1 for p in pairs])
        i2 = np.array([p[1] - 1 for p in pairs])
        return vals[:, i1].T, vals[:, i2].T

    def describe_option(self, a):
        # pairs depend on Q; resolved by the certificate builder
        return a

    def to_dict(self):
        return {"kind": self.kind, "gamma": self.gamma}


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")


def _check_categorical(cls, q):
    if cls.q != 1:
        raise ValidationError("discrete notions need a category-valued class (Q = 1)")
    v = cls.values
    if not np.all((v == np.round(v)) & (v >= 0) & (v <= q)):
        raise ValidationError(f"category classes hold integers 0..{q} (0 = rejected)")


def _discrete_terms(maps, cats):
    # category 0 (rejected) matches no psi value
    cats = cats.astype(np.int64)
    A, F = maps.shape[0], cats.size
    psi_val = np.zeros((A, F), dtype=np.int64)
    ok = cats > 0
    psi_val[:, ok] = maps[:, cats[ok] - 1]
    plus = np.where(psi_val == 1, 0.0, -np.inf)
    minus = np.where(psi_val == -1, 0.0, -np.inf)
    return plus, minus


def notion_from_dict(d):
    kind = d["kind"]
    if kind == "fat":
        return Fat(float(d["gamma"]))
    if kind == "psi":
        return PsiDiscrete(PsiFamily(np.array(d["psi"])))
    if kind == "natarajan":
        return NatarajanDiscrete(int(d["q"]))
    if kind == "gamma-psi":
        return GammaPsi(float(d["gamma"]), PsiFamily(np.array(d["psi"])))
    if kind == "gamma-natarajan":
        return GammaNatarajan(float(d["gamma"]))
    raise ValidationError(f"unknown notion kind {kind!r}")


# -- certificates ------------------------------------------------------------

def dichotomy_key(bits, k):
    """Bitmask (bit i set = +1) -> string such as ``'+-+'``."""
    return "".join("+" if (bits >> i) & 1 else "-" for i in range(k))


@dataclass
class ShatteringCertificate:
    notion: dict
    subset: tuple
    assignment: tuple
    options: list
    witness: tuple
    realizers: dict = field(default_factory=dict)

    @property
    def size(self):
        return len(self.subset)

    def to_dict(self):
        return {"notion": self.notion, "subset": list(self.subset),
                "assignment": list(self.assignment), "options": self.options,
                "witness": None if self.witness is None else list(self.witness),
                "realizers": dict(self.realizers)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["notion"], tuple(d["subset"]), tuple(d["assignment"]),
                   d["options"], None if d["witness"] is None else tuple(d["witness"]),
                   {str(k): int(v) for k, v in d["realizers"].items()})

    def restrict(self, positions):
        """Certificate for the sub-subset at ``positions`` of this subset."""
        positions = list(positions)
        realizers = {}
        for key, f in self.realizers.items():
            sub = "".join(key[p] for p in positions)
            realizers.setdefault(sub, f)
        return ShatteringCertificate(
            self.notion, tuple(self.subset[p] for p in positions),
            tuple(self.assignment[p] for p in positions),
            [self.options[p] for p in positions],
            None if self.witness is None else tuple(self.witness[p] for p in positions),
            realizers)


def _term_tensor(cls, subset, notion):
    if not subset:
        return np.zeros((0, 1, cls.n_functions)), np.zeros((0, 1, cls.n_functions))
    pairs = [notion.terms(cls.values[i]) for i in subset]
    return np.stack([p for p, _ in pairs]), np.stack([m for _, m in pairs])


def _option_label(notion, cls, a):
    if isinstance(notion, GammaNatarajan):
        return list(ordered_pairs(cls.q)[a])
    return notion.describe_option(a)


def shatter_check(cls, subset, notion, budget=DEFAULT_BUDGET):
    """Certificate that ``subset`` is shattered in the sense of ``notion``, or None."""
    notion.check_class(cls)
    subset = tuple(int(i) for i in subset)
    if len(set(subset)) != len(subset) or any(not 0 <= i < cls.n_points for i in subset):
        raise ValidationError(f"invalid point subset {subset}")
    plus, minus = _term_tensor(cls, subset, notion)
    k, n_opt, F = plus.shape
    work = n_opt ** k * F ** k
    if work > budget.max_candidates:
        raise Overbudget(f"shattering search of {k} points needs {work} candidate "
                         f"tuples, budget is {budget.max_candidates}")
    found, assign, b, realizers = _kernels.shatter_search(plus, minus, notion.margin)
    if not found:
        return None
    if notion.scale_sensitive and subset:
        b, realizers = _polish(plus, minus, assign, b, realizers, notion.margin)
    return ShatteringCertificate(
        notion=notion.to_dict(),
        subset=subset,
        assignment=tuple(int(a) for a in assign),
        options=[_option_label(notion, cls, int(a)) for a in assign],
        witness=tuple(float(x) for x in b) if notion.scale_sensitive else None,
        realizers={dichotomy_key(y, k): int(f) for y, f in enumerate(realizers)},
    )


def _centred_witness(plus, minus, assign, realizers, gamma):
    """Middle of the interval of witnesses that the given realizers allow.

    With the realizing functions fixed, ``b_i`` is feasible exactly on a
    float interval ``[lo_i, hi_i]`` (both inequalities are monotone in
    ``b_i``), so any point there keeps the certificate valid.
    """
    k = plus.shape[0]
    out = np.empty(k)
    for i in range(k):
        pos = [int(f) for y, f in enumerate(realizers) if (y >> i) & 1]
        neg = [int(f) for y, f in enumerate(realizers) if not (y >> i) & 1]
        p_min = plus[i, assign[i], pos].min()
        m_min = minus[i, assign[i], neg].min()
        hi = float(_kernels.largest_witness(np.array([p_min]), gamma)[0])
        lo = -float(_kernels.largest_witness(np.array([m_min]), gamma)[0])
        mid = 0.5 * ((p_min - gamma) + (gamma - m_min))
        out[i] = min(max(mid, lo), hi)
    return out


def _polish(plus, minus, assign, b, realizers, gamma, rounds=20):
    """Trade the first-found witness for one with more slack.

    Alternates between re-picking each dichotomy's realizer as the valid
    function with the largest worst-point slack and re-centring the
    witnesses.  Every step keeps the certificate valid, because the
    current witness always lies inside the new feasible interval.
    """
    k = plus.shape[0]
    p = plus[np.arange(k), assign]    # (k, F)
    m = minus[np.arange(k), assign]
    realizers = np.array(realizers)
    for _ in range(rounds):
        with np.errstate(invalid="ignore"):
            ok_p = (p - b[:, None]) >= gamma
            ok_m = (m + b[:, None]) >= gamma
            s_p = p - b[:, None] - gamma
            s_m = m + b[:, None] - gamma
        for y in range(len(realizers)):
            bits = ((y >> np.arange(k)) & 1).astype(bool)
            valid = np.where(bits[:, None], ok_p, ok_m).all(axis=0)
            slack = np.where(bits[:, None], s_p, s_m).min(axis=0)
            slack = np.where(valid, slack, -np.inf)
            realizers[y] = int(np.argmax(slack))
        new_b = _centred_witness(plus, minus, assign, realizers, gamma)
        if np.array_equal(new_b, b):
            break
        b = new_b
    return b, realizers


@dataclass(frozen=True)
class DimensionResult:
    dimension: int
    certificate: ShatteringCertificate
    subsets_checked: int


def dimension(cls, notion, budget=DEFAULT_BUDGET, max_size=None):
    """Largest shattered subset, searched by increasing size.

    A subset is only tried when all its one-smaller subsets are shattered,
    since shattering is inherited by subsets.
    """
    notion.check_class(cls)
    n = cls.n_points if max_size is None else min(max_size, cls.n_points)
    best = shatter_check(cls, (), notion, budget)
    shattered = {(): best}
    checked = 0
    for size in range(1, n + 1):
        current = {}
        for subset in itertools.combinations(range(cls.n_points), size):
            if any(subset[:j] + subset[j + 1:] not in shattered for j in range(size)):
                continue
            checked += 1
            if checked > budget.max_subsets:
                raise Overbudget(f"dimension search exceeded {budget.max_subsets} subsets")
            cert = shatter_check(cls, subset, notion, budget)
            if cert is not None:
                current[subset] = cert
        if not current:
            break
        best = current[min(current)]
        shattered = current
    return DimensionResult(best.size, best, checked)


# -- margin images of classes ------------------------------------------------

def apply_margin_operator(cls, op, gamma=None):
    """Pointwise Delta / Delta* (optionally followed by the gamma clamp)."""
    op = margin.Operator.parse(op)
    vals = margin.apply_operator(margin.as_scores(cls.values), op)
    if gamma is not None:
        vals = margin.pi_gamma(vals, gamma)
    return FiniteFunctionClass(vals, cls.point_ids)


def categorical_class(cls):
    """Category-valued class (Q = 1, 0 = rejected) from a class of score vectors."""
    cats = margin.classify(margin.as_scores(cls.values))
    return FiniteFunctionClass(np.asarray(cats, dtype=np.float64)[:, :, None],
                               cls.point_ids)
