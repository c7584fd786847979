"""Desk-scale verification suites.

Each ``check_*`` function runs one seeded experiment and returns a
:class:`CheckResult`.  :func:`run_all` is what ``psidim selfcheck`` and the
acceptance tests execute.
"""
import itertools
import math
import os
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np

from . import bounds, capacity, certify, margin, msvm
from .capacity import FiniteFunctionClass, GammaNatarajan
from .data import fixture_blobs
from .margin import MarginConfig, Operator


@dataclass
class CheckResult:
    key: str
    title: str
    passed: bool
    seconds: float
    time_limit: float
    detail: str = ""
    failures: list = field(default_factory=list)

    @property
    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.key} {self.title}: {self.detail} "
                f"({self.seconds:.2f}s, limit {self.time_limit:g}s)")


def _finish(key, title, limit, start, failures, detail):
    secs = time.perf_counter() - start
    if secs >= limit:
        failures = failures + [f"runtime {secs:.2f}s exceeds {limit}s"]
    return CheckResult(key, title, not failures, secs, limit, detail, failures[:20])


# -- 1. operator algebra -----------------------------------------------------

def _random_scores(rng, count, q):
    # half continuous, half on a small integer grid so ties actually occur
    cont = rng.standard_normal((count - count // 2, q)) * rng.uniform(0.1, 5.0, (count - count // 2, 1))
    grid = rng.integers(-2, 3, (count // 2, q)).astype(np.float64)
    return np.concatenate([cont, grid])


def check_operator_algebra(n_vectors=10_000, seed=0):
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []
    per_q = {3: n_vectors // 3, 4: n_vectors // 3}
    per_q[5] = n_vectors - per_q[3] - per_q[4]
    gammas = (0.05, 0.25, 0.5, 1.0, 2.0)
    for q, count in per_q.items():
        v = _random_scores(rng, count, q)
        d = margin.delta(v)
        ds = margin.delta_star(v)
        mx = margin.m_x(v)
        srt = np.sort(v, axis=1)[:, ::-1]
        if np.any((d > 0).sum(axis=1) > 1):
            failures.append(f"Q={q}: more than one positive Delta coordinate")
        if np.any(mx < 0):
            failures.append(f"Q={q}: max Delta coordinate negative")
        for k, l in itertools.combinations(range(q), 2):
            s = d[:, k] + d[:, l]
            if np.any(s > 0):
                failures.append(f"Q={q}: pair sum > 0 for ({k + 1},{l + 1})")
            top_two = (np.maximum(v[:, k], v[:, l]) == srt[:, 0]) & \
                      (np.minimum(v[:, k], v[:, l]) == srt[:, 1])
            if np.any((s == 0) != top_two):
                failures.append(f"Q={q}: pair sum zero off the top-two pair ({k + 1},{l + 1})")
        pos = mx > 0
        zero_ok = np.all(ds[~pos] == 0)
        n_plus = (ds[pos] == mx[pos, None]).sum(axis=1)
        n_minus = (ds[pos] == -mx[pos, None]).sum(axis=1)
        if not zero_ok or np.any(n_plus != 1) or np.any(n_minus != q - 1):
            failures.append(f"Q={q}: Delta* image has the wrong shape")
        labels = rng.integers(1, q + 1, count)
        margins = np.array([margin.multiclass_margin(v[i], labels[i]) for i in range(min(count, 500))])
        if np.any(margins != d[np.arange(margins.size), labels[:margins.size] - 1]):
            failures.append(f"Q={q}: margin differs from Delta at the label")
        cls = margin.classify(v)
        win = cls != margin.REJECTED
        if np.any(d[win, cls[win] - 1] <= 0) or np.any(mx[~win] != 0):
            failures.append(f"Q={q}: classify inconsistent with the margin")
        zero_one = margin.empirical_zero_one_risk(v, labels)
        for gamma in gammas:
            p = margin.pi_gamma(d, gamma)
            if np.any(np.abs(p) > gamma) or np.any(margin.pi_gamma(p, gamma) != p):
                failures.append(f"Q={q}, gamma={gamma}: clamp bound or idempotence broken")
            if np.any((np.sign(p) != np.sign(d)) & (p != 0)):
                failures.append(f"Q={q}, gamma={gamma}: clamp changed a sign")
            risks = {}
            for op in Operator:
                cfg = MarginConfig(gamma, op)
                raw = margin.empirical_margin_risk(v, labels, cfg)
                img = margin.apply_operator(v, op)
                lab = img[np.arange(count), labels - 1]
                squashed = float(np.mean(margin.pi_gamma(lab, gamma) < gamma))
                if raw != squashed:
                    failures.append(f"Q={q}, gamma={gamma}, {op.value}: clamp changed the risk")
                risks[op] = raw
            if risks[Operator.DELTA] != risks[Operator.DELTA_STAR]:
                failures.append(f"Q={q}, gamma={gamma}: Delta and Delta* risks differ")
            if zero_one > risks[Operator.DELTA]:
                failures.append(f"Q={q}, gamma={gamma}: zero-one risk exceeds margin risk")
    detail = f"{n_vectors} vectors, Q in (3, 4, 5), {len(failures)} violations"
    return _finish("C1", "operator algebra", 5.0, start, failures, detail)


# -- 2. covering oracle equivalence ------------------------------------------

EPS_GRID = (0.25, 0.5, 1.0, 1.5, 2.5)


def random_dyadic_class(rng, max_f=10, max_n=4, max_q=3):
    n = int(rng.integers(1, max_n + 1))
    F = int(rng.integers(1, max_f + 1))
    Q = int(rng.integers(1, max_q + 1))
    return FiniteFunctionClass(rng.integers(-8, 9, (n, F, Q)) * 0.25)


def check_covering_oracle(n_classes=200, seed=1):
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []
    greedy_gap = 0
    for c in range(n_classes):
        cls = random_dyadic_class(rng)
        dist = capacity.distance_matrix(cls)
        prev_g = prev_e = None
        for eps in EPS_GRID:
            g = capacity.greedy_proper_net(cls, eps)
            e = capacity.exact_min_proper_net(cls, eps)
            if not (g.is_valid_cover and capacity.is_cover(dist, g.centers, eps)):
                failures.append(f"class {c}, eps {eps}: greedy net is not a cover")
            if not (e.is_valid_cover and capacity.is_cover(dist, e.centers, eps)):
                failures.append(f"class {c}, eps {eps}: exact net is not a cover")
            if e.size > g.size:
                failures.append(f"class {c}, eps {eps}: exact {e.size} > greedy {g.size}")
            greedy_gap += g.size - e.size
            if prev_g is not None and (g.size > prev_g or e.size > prev_e):
                failures.append(f"class {c}, eps {eps}: net size grew with eps")
            prev_g, prev_e = g.size, e.size
    detail = (f"{n_classes} classes x {len(EPS_GRID)} radii, greedy excess {greedy_gap} "
              f"centers in total, {len(failures)} violations")
    return _finish("C2", "covering oracle equivalence", 30.0, start, failures, detail)


# -- 3. empirical Sauer-type covering bound ----------------------------------

SAUER_GAMMAS = (0.25, 0.5, 1.0)


def check_sauer(n_cases=100, seed=2, certificates=None):
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []
    cases = drawn = skipped = 0
    max_log_cov = 0.0
    while cases < n_cases:
        gamma = SAUER_GAMMAS[drawn % 3]
        drawn += 1
        n = int(rng.integers(2, 4))
        F = int(rng.integers(2, 9))
        scale = rng.uniform(0.05, 3.0)
        raw = FiniteFunctionClass(scale * rng.standard_normal((n, F, 3)))
        clamped = capacity.apply_margin_operator(raw, Operator.DELTA, gamma)
        res = capacity.dimension(clamped, GammaNatarajan(gamma / 24))
        d, m = res.dimension, 1
        if d < 1 or 2 * m < d:
            skipped += 1
            continue
        if certificates is not None:
            certificates.append((res.certificate, clamped.values))
        star = capacity.apply_margin_operator(raw, Operator.DELTA_STAR, gamma)
        cov = capacity.covering_number_sup(star, gamma / 4, 2 * m).value
        lhs = math.log(cov)
        rhs = bounds.sauer_covering_bound_log(d, m, 3)
        max_log_cov = max(max_log_cov, lhs)
        if not lhs < rhs:
            failures.append(f"case {cases}: ln N = {lhs:.4g} >= {rhs:.4g} (d={d})")
        cases += 1
    detail = (f"{cases} cases (skipped {skipped} with d = 0 or 2m < d), "
              f"max ln N = {max_log_cov:.3g}, {len(failures)} violations")
    return _finish("C3", "Sauer-type covering bound", 60.0, start, failures, detail)


# -- 4. empirical margin Natarajan dimension bound for linear models ---------

THM3_EPS = (0.1, 0.25, 0.5)


def linear_model_class(weights, points):
    """Score class of zero-bias linear models: weights (F, Q, p), points (n, p)."""
    return FiniteFunctionClass(np.einsum("fqp,np->nfq", weights, points))


def check_linear_ndim(n_cases=100, seed=3, certificates=None):
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []
    nonvacuous = 0
    positive = 0
    for c in range(n_cases):
        n = int(rng.integers(2, 5))
        F = int(rng.integers(2, 9))
        pts = rng.standard_normal((n, 2))
        w = rng.standard_normal((F, 3, 2)) * np.exp(rng.uniform(np.log(0.03), np.log(1.5)))
        w -= w.mean(axis=1, keepdims=True)
        lam_phi = float(np.linalg.norm(pts, axis=1).max())
        lam_w = max(0.5 * np.linalg.norm(w[f, k] - w[f, l])
                    for f in range(F) for k, l in itertools.combinations(range(3), 2))
        dcls = capacity.apply_margin_operator(linear_model_class(w, pts), Operator.DELTA)
        for eps in THM3_EPS:
            res = capacity.dimension(dcls, GammaNatarajan(eps))
            bound = bounds.ndim_bound_msvm(lam_w, lam_phi, eps, 3)
            if certificates is not None and res.dimension > 0:
                certificates.append((res.certificate, dcls.values))
            nonvacuous += bound < n
            positive += res.dimension > 0
            if not res.dimension <= bound:
                failures.append(f"case {c}, eps {eps}: dim {res.dimension} > bound {bound:.4g}")
    detail = (f"{n_cases} classes x {len(THM3_EPS)} scales, {nonvacuous} with bound below "
              f"the domain size, {positive} with positive dimension, {len(failures)} violations")
    return _finish("C4", "margin Natarajan bound for linear models", 60.0, start,
                   failures, detail)


# -- 5. hand-checked bound values --------------------------------------------

HAND_VALUES = (
    ("guaranteed_risk(0.1, ln 1000, 100, 0.5, 0.05)",
     lambda: bounds.guaranteed_risk(0.1, math.log(1000), 100, 0.5, 0.05), 0.5995, 1e-3),
    ("sauer_covering_bound_log(1, 2, 3)",
     lambda: bounds.sauer_covering_bound_log(1, 2, 3), 93.158, 0.01),
    ("bias_factor_log(1, 0.5, 3)", lambda: bounds.bias_factor_log(1, 0.5, 3), 4.8283, 1e-3),
    ("ndim_bound_msvm(1, 1, 0.5, 3)", lambda: bounds.ndim_bound_msvm(1, 1, 0.5, 3), 12.0, 0.0),
)


def check_hand_values():
    start = time.perf_counter()
    failures = []
    parts = []
    for name, fn, expected, tol in HAND_VALUES:
        got = fn()
        parts.append(f"{name} = {got:.6g}")
        if not abs(got - expected) <= tol:
            failures.append(f"{name} = {got!r}, expected {expected} +- {tol}")
    return _finish("C5", "hand-checked bound values", 1.0, start, failures, "; ".join(parts))


# -- 6. M-SVM fixture --------------------------------------------------------

def check_msvm_fixture(seed=7):
    start = time.perf_counter()
    failures = []
    ds = fixture_blobs(seed)
    model = msvm.train(ds.features, ds.labels, msvm.KernelSpec("linear"),
                       msvm.TrainConfig(lam=0.01), q=3)
    scores = model.scores(ds.features)
    risk = margin.empirical_zero_one_risk(scores, ds.labels)
    if risk != 0.0:
        failures.append(f"training zero-one risk {risk}")
    hist = np.array(model.history)
    if np.any(np.diff(hist) > 0):
        failures.append("objective increased during training")
    resid = max(model.sum_to_zero_residual(), float(np.abs(scores.sum(axis=1)).max()))
    if not resid < 1e-9:
        failures.append(f"sum-to-zero residual {resid:.3g}")
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        back = msvm.MSVMModel.load(path)
    if not np.array_equal(back.scores(ds.features), scores):
        failures.append("save/load round trip changed the scores")
    grid = np.linspace(0.05, 1.0, 20)
    ok = [g for g in grid
          if margin.empirical_margin_risk(scores, ds.labels, MarginConfig(g)) == 0.0]
    detail = (f"{len(ds)} points, {len(hist) - 1} recorded improvements, objective {hist[-1]:.4g}, "
              f"zero-one risk {risk}, residual {resid:.2g}, "
              f"largest zero-margin-risk gamma {f'{max(ok):.3g}' if ok else 'none'}")
    return _finish("C6", "M-SVM blobs fixture", 10.0, start, failures, detail)


# -- 7. rate claim -----------------------------------------------------------

RATE_MS = (10**3, 10**4, 10**5, 10**6)


def check_rate():
    start = time.perf_counter()
    failures = []
    rows = bounds.rate_table(RATE_MS)
    spread = bounds.relative_spread(r.ratio for r in rows)
    if not spread < 0.15:
        failures.append(f"ratio spread {spread:.3f} >= 0.15")
    for m in RATE_MS:
        a, b = bounds.rate_table([m, 4 * m])
        if not b.control < a.control:
            failures.append(f"control term does not decrease from {m} to {4 * m}")
    ratios = ", ".join(f"{r.ratio:.2f}" for r in rows)
    return _finish("C7", "ln(m)/sqrt(m) rate", 1.0, start, failures,
                   f"ratios {ratios}, spread {spread:.3f}")


# -- 8. certificate soundness ------------------------------------------------

def _notion_zoo(rng):
    """Random classes for every notion, paired with the notion to test."""
    out = []
    for _ in range(6):
        n, F = int(rng.integers(1, 4)), int(rng.integers(2, 7))
        out.append((FiniteFunctionClass(rng.integers(-4, 5, (n, F, 1)) * 0.5),
                    capacity.Fat(float(rng.choice([0.25, 0.5, 1.0])))))
        raw = FiniteFunctionClass(rng.integers(-2, 3, (n, F, 3)).astype(float))
        cats = capacity.categorical_class(raw)
        out.append((cats, capacity.NatarajanDiscrete(3)))
        fam = capacity.PsiFamily(np.array([[1, -1, 0], [1, 0, -1], [0, 1, -1], [1, -1, -1]]))
        out.append((cats, capacity.PsiDiscrete(fam)))
        dcls = capacity.apply_margin_operator(raw, Operator.DELTA)
        out.append((dcls, capacity.GammaPsi(0.25, fam)))
        out.append((dcls, GammaNatarajan(0.25)))
    return out


def check_certificates(collected=None, seed=4):
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    failures = []
    certs = list(collected or [])
    for cls, notion in _notion_zoo(rng):
        res = capacity.dimension(cls, notion)
        certs.append((res.certificate, cls.values))
        for size in range(1, cls.n_points + 1):
            for subset in itertools.combinations(range(cls.n_points), size):
                cert = capacity.shatter_check(cls, subset, notion)
                if cert is not None:
                    certs.append((cert, cls.values))
    replayed = 0
    for cert, values in certs:
        probs = certify.replay(cert, values)
        replayed += 1
        if probs:
            failures.append(f"certificate on {cert.subset}: {probs[0]}")
        for size in range(cert.size):
            for pos in itertools.combinations(range(cert.size), size):
                replayed += 1
                if not certify.verify(cert.restrict(pos), values):
                    failures.append(f"restriction {pos} of {cert.subset} fails")
    detail = f"{len(certs)} certificates, {replayed} replays incl. restrictions, {len(failures)} failures"
    return _finish("C8", "certificate soundness", 60.0, start, failures, detail)


def run_all():
    collected = []
    results = [
        check_operator_algebra(),
        check_covering_oracle(),
        check_sauer(certificates=collected),
        check_linear_ndim(certificates=collected),
        check_hand_values(),
        check_msvm_fixture(),
        check_rate(),
    ]
    results.append(check_certificates(collected))
    return results
