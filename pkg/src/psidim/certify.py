"""Independent replay of shattering certificates.

Nothing here touches the search code: each notion's defining inequalities
are re-evaluated directly on the class values, point by point and
dichotomy by dichotomy.
"""
import itertools

from .errors import ValidationError


def _natarajan_map(q, pair):
    k, l = pair
    return [1 if c == k else -1 if c == l else 0 for c in range(1, q + 1)]


def _point_ok(notion, row, option, b, sign):
    """Does one function's output ``row`` (length Q) satisfy the condition at one point?"""
    kind = notion["kind"]
    if kind == "fat":
        return sign * (row[0] - b) >= notion["gamma"]
    if kind in ("psi", "natarajan"):
        cat = int(row[0])
        if cat == 0:
            return False
        psi = option if kind == "psi" else _natarajan_map(notion["q"], option)
        return psi[cat - 1] == sign
    gamma = notion["gamma"]
    if kind == "gamma-natarajan":
        i1, i2 = option
        if sign == 1:
            return row[i1 - 1] - b >= gamma
        return row[i2 - 1] + b >= gamma
    if kind == "gamma-psi":
        if sign == 1:
            return any(option[c] == 1 and row[c] - b >= gamma for c in range(len(row)))
        return any(option[c] == -1 and row[c] + b >= gamma for c in range(len(row)))
    raise ValidationError(f"unknown notion kind {kind!r}")


def replay(cert, values):
    """Return a list of failure messages; empty means the certificate holds.

    ``values`` is the raw ``(n, F, Q)`` evaluation tensor (array or nested
    lists).
    """
    failures = []
    notion = cert.notion
    k = len(cert.subset)
    n_fun = len(values[0])
    if len(cert.options) != k:
        return ["options length differs from subset size"]
    witness = cert.witness if cert.witness is not None else [0.0] * k
    if len(witness) != k:
        return ["witness length differs from subset size"]
    for signs in itertools.product((1, -1), repeat=k):
        key = "".join("+" if s == 1 else "-" for s in signs)
        if key not in cert.realizers:
            failures.append(f"dichotomy {key!r} has no realizer")
            continue
        f = cert.realizers[key]
        if not 0 <= f < n_fun:
            failures.append(f"dichotomy {key!r}: function {f} out of range")
            continue
        for pos, (i, sign) in enumerate(zip(cert.subset, signs)):
            row = [float(x) for x in values[i][f]]
            if not _point_ok(notion, row, cert.options[pos], witness[pos], sign):
                failures.append(f"dichotomy {key!r}: function {f} fails at point {i}")
    return failures


def verify(cert, values):
    return not replay(cert, values)
