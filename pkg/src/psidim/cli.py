"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 budget exceeded.
"""
import argparse
import json
import logging
import sys

import numpy as np

from . import __version__, bounds, capacity, certify, margin, msvm, selfcheck
from .data import generate_blobs, load_dataset, read_class, save_dataset
from .errors import Overbudget, UsageError, ValidationError

log = logging.getLogger("psidim")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_BUDGET = 0, 1, 2, 3

DEFAULTS = {
    "kernel": "linear",
    "lambda": 0.01,
    "gamma": 0.5,
    "delta": 0.05,
    "seed": 0,
    "budget": 5_000_000,
    "operator": "delta",
    "cq2_mode": "binomial",
    "bias_mode": "free",
    "bias_bound": float("inf"),
    "max_iters": 4000,
    "tolerance": 1e-9,
    "format": "delimited",
    "q": None,
    "epsilon": None,
    "notion": "gamma-natarajan",
    "psi": None,
    "apply": "none",
    "cover_n": None,
    "m_list": "1000,10000,100000,1000000",
    "lambda_w": 1.0,
    "lambda_phi": 1.0,
    "beta_bias": 0.0,
    "emp_margin_risk": 0.0,
    "per_class": 20,
    "sigma": 0.3,
}

# --out names the produced artifact for these, not the JSON report
ARTIFACT_COMMANDS = ("train", "generate")

# the rate fixture needs a large fixed capacity for ln(m)/sqrt(m) to dominate
COMMAND_DEFAULTS = {"rate": {"gamma": 1.0}}

_CASTS = {
    "lambda": float, "gamma": float, "delta": float, "seed": int, "budget": int,
    "bias_bound": float, "max_iters": int, "tolerance": float, "q": int,
    "epsilon": float, "cover_n": int, "lambda_w": float, "lambda_phi": float,
    "beta_bias": float, "emp_margin_risk": float, "per_class": int, "sigma": float,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def read_config(path):
    """Parse a ``key = value`` file; unknown keys are errors."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {key!r} ({path}:{lineno})")
            out[key] = value.strip()
    return out


def resolve_config(args):
    cfg = dict(DEFAULTS)
    cfg.update(COMMAND_DEFAULTS.get(getattr(args, "command", None), {}))
    if args.config:
        cfg.update(read_config(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    for key, cast in _CASTS.items():
        if cfg[key] is not None and isinstance(cfg[key], str):
            try:
                cfg[key] = cast(cfg[key])
            except ValueError:
                raise UsageError(f"bad value {cfg[key]!r} for {key}") from None
    return cfg


def _budget(cfg):
    n = cfg["budget"]
    return capacity.Budget(max_subsets=n, max_candidates=n, max_net_subsets=n)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def emit(args, command, cfg, result, rows):
    """Print an aligned table (or JSON with --json); write JSON to --out if given."""
    report = _json_safe({"psidim_version": __version__, "command": command,
                         "config": cfg, "result": result})
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.json:
        print(text)
    else:
        width = max((len(k) for k, _ in rows), default=0)
        print(f"== psidim {command} ==")
        for k, v in rows:
            print(f"{k.ljust(width)}  {v}")
    if args.out and command not in ARTIFACT_COMMANDS:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return report


# -- subcommands -------------------------------------------------------------

def cmd_generate(args, cfg):
    q = cfg["q"] or 3
    ds = generate_blobs(q, cfg["per_class"], cfg["sigma"], seed=cfg["seed"])
    if not args.out:
        raise UsageError("generate needs --out")
    save_dataset(ds, args.out, cfg["format"])
    emit(args, "generate", cfg, {"samples": len(ds), "provenance": ds.provenance},
         [("samples", len(ds)), ("written", args.out)])
    return EXIT_OK


def _train_config(cfg):
    return msvm.TrainConfig(lam=cfg["lambda"], max_iters=cfg["max_iters"],
                            tolerance=cfg["tolerance"], bias_mode=cfg["bias_mode"],
                            bias_bound=cfg["bias_bound"], seed=cfg["seed"])


def cmd_train(args, cfg):
    ds = load_dataset(args.data, cfg["format"], cfg["q"])
    q = cfg["q"] or max(3, ds.q)
    kernel = msvm.KernelSpec.parse(cfg["kernel"])
    model = msvm.train(ds.features, ds.labels, kernel, _train_config(cfg), q=q)
    if args.out:
        model.save(args.out)
    scores = model.scores(ds.features)
    mcfg = margin.MarginConfig(cfg["gamma"], cfg["operator"])
    result = {
        "m": len(ds), "q": q, "kernel": str(kernel),
        "improvements": len(model.history) - 1, "converged": model.converged,
        "objective": model.history[-1],
        "zero_one_risk": margin.empirical_zero_one_risk(scores, ds.labels),
        "margin_risk": margin.empirical_margin_risk(scores, ds.labels, mcfg),
        "sum_to_zero_residual": model.sum_to_zero_residual(),
        "lambda_w": msvm.lambda_w(model), "model_path": args.out,
    }
    emit(args, "train", cfg, result, [(k, v) for k, v in result.items()])
    return EXIT_OK


def cmd_bound(args, cfg):
    model = msvm.MSVMModel.load(args.model)
    ds = load_dataset(args.data, cfg["format"], model.q)
    scores = model.scores(ds.features)
    mcfg = margin.MarginConfig(cfg["gamma"], cfg["operator"])
    emp = margin.empirical_margin_risk(scores, ds.labels, mcfg)
    lam_w = msvm.lambda_w(model)
    lam_phi = msvm.lambda_phi(np.vstack([model.training_points, ds.features]), model.kernel)
    beta = float(np.abs(model.bias).max())
    rep = bounds.msvm_guaranteed_risk(lam_w, lam_phi, beta, emp, len(ds), cfg["gamma"],
                                      cfg["delta"], model.q, cfg["cq2_mode"])
    result = rep.to_dict()
    rows = [(k, v) for k, v in result.items() if k != "route"]
    rows += [("route", step) for step in rep.route]
    emit(args, "bound", cfg, result, rows)
    return EXIT_OK


def _parse_psi(text):
    if not text:
        raise UsageError("this notion needs --psi, e.g. '1,-1,0;1,0,-1'")
    try:
        rows = [[int(t) for t in row.split(",")] for row in text.split(";") if row.strip()]
    except ValueError:
        raise UsageError(f"cannot parse psi family {text!r}") from None
    return capacity.PsiFamily(np.array(rows))


def build_notion(cfg, cls):
    kind = cfg["notion"]
    gamma = cfg["gamma"]
    if kind == "fat":
        return capacity.Fat(gamma), cls
    if kind == "gamma-natarajan":
        return capacity.GammaNatarajan(gamma), cls
    if kind == "gamma-psi":
        return capacity.GammaPsi(gamma, _parse_psi(cfg["psi"])), cls
    if kind in ("natarajan", "psi"):
        q = cls.q if cls.q > 1 else cfg["q"]
        if q is None:
            raise UsageError("category-valued classes need --q")
        if cls.q > 1:
            cls = capacity.categorical_class(cls)
        if kind == "natarajan":
            return capacity.NatarajanDiscrete(q), cls
        return capacity.PsiDiscrete(_parse_psi(cfg["psi"])), cls
    raise UsageError(f"unknown notion {kind!r}")


def cmd_capacity(args, cfg):
    cls = read_class(args.classfile)
    if cfg["apply"] != "none":
        clamp = cfg["gamma"] if args.clamp else None
        cls = capacity.apply_margin_operator(cls, cfg["apply"], clamp)
    budget = _budget(cfg)
    notion, target = build_notion(cfg, cls)
    res = capacity.dimension(target, notion, budget)
    cert = res.certificate
    result = {"n": cls.n_points, "functions": cls.n_functions, "q": cls.q,
              "notion": notion.to_dict(), "dimension": res.dimension,
              "subsets_checked": res.subsets_checked, "certificate": cert.to_dict(),
              "duplicate_functions": cls.duplicate_functions()}
    rows = [("notion", notion.to_dict()), ("dimension", res.dimension),
            ("shattered subset", list(cert.subset)), ("witness", cert.witness)]
    if args.cert:
        with open(args.cert, "w") as fh:
            json.dump(cert.to_dict(), fh, indent=2)
    if cfg["epsilon"] is not None:
        eps = cfg["epsilon"]
        greedy = capacity.greedy_proper_net(cls, eps)
        exact = capacity.exact_min_proper_net(cls, eps, budget)
        result["cover"] = {"epsilon": eps, "greedy_size": greedy.size,
                           "greedy_centers": list(greedy.centers),
                           "exact_size": exact.size, "exact_centers": list(exact.centers)}
        rows += [("greedy net size", greedy.size), ("exact net size", exact.size)]
        if cfg["cover_n"] is not None:
            sup = capacity.covering_number_sup(cls, eps, cfg["cover_n"], budget=budget)
            result["cover"]["sup"] = {"n": cfg["cover_n"], "value": sup.value,
                                      "points": list(sup.points), "exact": sup.exact}
            rows.append((f"sup over {cfg['cover_n']}-point samples", sup.value))
    emit(args, "capacity", cfg, result, rows)
    return EXIT_OK


def cmd_rate(args, cfg):
    try:
        ms = [int(float(t)) for t in str(cfg["m_list"]).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"bad m list {cfg['m_list']!r}") from None
    rows = bounds.rate_table(ms, cfg["lambda_w"], cfg["lambda_phi"], cfg["beta_bias"],
                             cfg["emp_margin_risk"], cfg["gamma"], cfg["delta"],
                             cfg["q"] or 3, cfg["cq2_mode"])
    table = [{"m": r.m, "control": r.control, "ln_m_over_sqrt_m": r.reference,
              "ratio": r.ratio, "m_pow_minus_quarter": r.slow_reference} for r in rows]
    spread = bounds.relative_spread(r.ratio for r in rows)
    text_rows = [("m", "control  ln(m)/sqrt(m)  ratio  m^-1/4")]
    text_rows += [(str(r.m), f"{r.control:.6g}  {r.reference:.6g}  {r.ratio:.4g}  "
                   f"{r.slow_reference:.4g}") for r in rows]
    text_rows.append(("ratio spread", f"{spread:.4f}"))
    emit(args, "rate", cfg, {"rows": table, "ratio_spread": spread}, text_rows)
    return EXIT_OK


def cmd_certify(args, cfg):
    with open(args.certificate) as fh:
        cert = capacity.ShatteringCertificate.from_dict(json.load(fh))
    cls = read_class(args.classfile)
    values = cls.values
    if cert.notion["kind"] in ("natarajan", "psi") and cls.q > 1:
        values = capacity.categorical_class(cls).values
    problems = certify.replay(cert, values)
    result = {"valid": not problems, "problems": problems, "subset": list(cert.subset)}
    emit(args, "certify", cfg, result,
         [("valid", not problems)] + [("problem", p) for p in problems])
    return EXIT_OK if not problems else EXIT_INVALID


def cmd_selfcheck(args, cfg):
    results = selfcheck.run_all()
    for r in results:
        if not args.json:
            print(r.line)
    result = {r.key: {"title": r.title, "passed": r.passed, "seconds": r.seconds,
                      "detail": r.detail, "failures": r.failures} for r in results}
    ok = all(r.passed for r in results)
    emit(args, "selfcheck", cfg, {"passed": ok, "checks": result},
         [("all passed", ok)])
    return EXIT_OK if ok else EXIT_INVALID


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--format", choices=("delimited", "sparse"))
    common.add_argument("--gamma", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--kernel", help="linear | poly:DEG[:OFFSET] | gaussian:BW")
    common.add_argument("--lambda", dest="lambda", type=float)
    common.add_argument("--operator", choices=("delta", "delta-star"))
    common.add_argument("--budget", type=int)
    common.add_argument("--out", help="model file for train, JSON report otherwise")
    common.add_argument("--json", action="store_true", help="print the JSON report")
    common.add_argument("--q", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="psidim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("generate", parents=[common], help="write seeded Gaussian blobs")
    p.add_argument("--per-class", dest="per_class", type=int)
    p.add_argument("--sigma", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="fit an M-SVM")
    p.add_argument("data")
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--bias-mode", dest="bias_mode", choices=("free", "zero"))
    p.add_argument("--bias-bound", dest="bias_bound", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bound", parents=[common], help="guaranteed risk of a model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("--cq2-mode", dest="cq2_mode", choices=("binomial", "q-squared"))
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("capacity", parents=[common], help="dimensions and covers of a class")
    p.add_argument("classfile")
    p.add_argument("--notion", choices=("fat", "psi", "natarajan", "gamma-psi",
                                        "gamma-natarajan"))
    p.add_argument("--psi", help="psi family rows, e.g. '1,-1,0;0,1,-1' (0 = null)")
    p.add_argument("--apply", choices=("none", "delta", "delta-star"))
    p.add_argument("--clamp", action="store_true", help="clamp the margin image to gamma")
    p.add_argument("--epsilon", type=float, help="also compute proper nets at this radius")
    p.add_argument("--cover-n", dest="cover_n", type=int,
                   help="sup of net sizes over samples of this size")
    p.add_argument("--cert", help="write the maximal certificate here")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("rate", parents=[common], help="control term against ln(m)/sqrt(m)")
    p.add_argument("--m-list", dest="m_list")
    p.add_argument("--lambda-w", dest="lambda_w", type=float)
    p.add_argument("--lambda-phi", dest="lambda_phi", type=float)
    p.add_argument("--beta-bias", dest="beta_bias", type=float)
    p.add_argument("--cq2-mode", dest="cq2_mode", choices=("binomial", "q-squared"))
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("certify", parents=[common], help="replay a shattering certificate")
    p.add_argument("certificate")
    p.add_argument("classfile")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("selfcheck", parents=[common], help="run the desk-scale suites")
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("missing command (try --help)")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Overbudget as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ValidationError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
