"""Batch command-line surface.

Every command writes its declared outputs plus a run manifest (config echo,
seeds, library versions, wall clock, sha256 of each output), so any run can
be reproduced byte-for-byte from the manifest. CSV output uses '.' decimals,
LF line endings and a header row; floats are written with shortest
round-trip repr.

Exit codes: 0 success, 2 validation error, 3 enumeration budget exhausted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from fractions import Fraction

import numpy as np
import scipy

from . import __version__
from .circuits import (
    BudgetExceededError,
    DEFAULT_NODE_BUDGET,
    count_circuits,
    full_count_record,
)
from .combinat import (
    Sentence,
    classify_sentence,
    enumerate_P2,
    enumerate_P24,
    enumerate_sentences,
    enumerate_special_partitions,
)
from .limits import integral_link_kind, theta, theta_extrapolate, theta_integral
from .links import LinkSpec
from .masks import MaskSpec, full_mask
from .moments import (
    sigma_p_squared,
    verify_gaussian_conditions,
    wick_moments,
    witness_sigma_lower_bound,
    WitnessFailure,
)
from .montecarlo import (
    EnsembleConfig,
    empirical_moments,
    ks_distance,
    normality_checks,
    sample_eta,
    sample_process,
)

_ENV_PREFIX = "PATLES_"


class ValidationError(ValueError):
    pass


def _env_default(name: str, fallback):
    return os.environ.get(_ENV_PREFIX + name, fallback)


def _parse_link(args) -> LinkSpec:
    if getattr(args, "link_config", None):
        with open(args.link_config) as fh:
            return LinkSpec.from_config(json.load(fh))
    if not getattr(args, "link", None):
        raise ValidationError("a --link kind or --link-config file is required")
    params = {}
    if args.link in ("generalized_toeplitz", "generalized_hankel"):
        params = {"alpha": args.alpha, "beta": args.beta}
    return LinkSpec.from_config({"kind": args.link, "params": params})


def _parse_mask(args) -> MaskSpec:
    if getattr(args, "mask_config", None):
        with open(args.mask_config) as fh:
            return MaskSpec.from_config(json.load(fh))
    kind = getattr(args, "mask", None) or "full"
    cfg = {"kind": kind}
    if kind in ("band", "antiband"):
        cfg["c"] = getattr(args, "band_c", "0") or "0"
        cfg["a"] = getattr(args, "band_a", 0)
    return MaskSpec.from_config(cfg)


def _parse_ints(text: str) -> list:
    return [int(x) for x in str(text).split(",") if x != ""]


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, Fraction):
        return str(x)
    return "" if x is None else str(x)


def _write_csv(path: str, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_json(path: str, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(args, command: str, config: dict, outputs, t0: float):
    manifest = {
        "command": command,
        "config": config,
        "seed": getattr(args, "seed", None),
        "versions": {
            "patles": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "wall_clock_s": round(time.time() - t0, 3),
        "outputs": {p: _sha256(p) for p in outputs},
    }
    path = getattr(args, "manifest", None) or (args.out + ".manifest.json")
    _write_json(path, manifest)
    return path


# -- commands ---------------------------------------------------------------------

def _cmd_enumerate(args) -> int:
    t0 = time.time()
    p, k = args.p, args.k
    if args.cls == "sp":
        stream = enumerate_special_partitions(p, k)
    elif args.cls == "p2":
        stream = enumerate_P2(p, p) if k == 2 else iter(())
    elif args.cls == "p24":
        stream = enumerate_P24(p, p) if k == 2 else iter(())
    else:
        stream = enumerate_sentences(p, k)
    lines = []
    for w in stream:
        info = classify_sentence(w)
        lines.append(
            {
                "sentence": str(w),
                "p": w.p,
                "k": w.k,
                "letters": w.n_letters,
                "component_kinds": list(info.kinds),
                "special": info.is_special_partition,
            }
        )
    if args.out:
        with open(args.out, "w") as fh:
            for line in lines:
                fh.write(json.dumps(line, sort_keys=True) + "\n")
        _write_manifest(args, "enumerate", {"p": p, "k": k, "class": args.cls}, [args.out], t0)
    else:
        for line in lines:
            print(json.dumps(line, sort_keys=True))
    return 0


def _cmd_count(args) -> int:
    t0 = time.time()
    link, mask = _parse_link(args), _parse_mask(args)
    sentence = Sentence.from_string(args.sentence)
    budget = args.budget_nodes
    rows = []
    for n in _parse_ints(args.n):
        rec = full_count_record(link, mask, sentence, n, budget=budget)
        rows.append(
            (n, rec.raw_star, rec.raw_exact, rec.masked, rec.masked_star, float(rec.normalized))
        )
    header = ["N", "raw_star", "raw_exact", "masked", "masked_star", "normalized"]
    if args.out:
        _write_csv(args.out, header, rows)
        cfg = {"link": link.to_config(), "mask": mask.to_config(), "sentence": args.sentence}
        _write_manifest(args, "count", cfg, [args.out], t0)
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(_fmt(x) for x in row))
    return 0


def _cmd_theta(args) -> int:
    t0 = time.time()
    link, mask = _parse_link(args), _parse_mask(args)
    p = args.p
    classes = args.cls.split(",")
    sentences = []
    if "p2" in classes or "all" in classes:
        sentences += list(enumerate_P2(p, p))
    if "p24" in classes or "all" in classes:
        sentences += list(enumerate_P24(p, p))
    n_grid = tuple(_parse_ints(args.n_grid)) if args.n_grid else None
    rows = []
    for w in sentences:
        methods = ["integral", "extrapolation"] if args.method == "both" else [args.method]
        for method in methods:
            if method == "integral" and integral_link_kind(link) is None:
                continue
            est = theta(link, mask, w, method, n_grid, args.variant)
            rows.append((str(w), est.method, est.value, est.error, est.branch_count))
    header = ["sentence", "method", "value", "error", "branches"]
    if args.out:
        _write_csv(args.out, header, rows)
        cfg = {"link": link.to_config(), "mask": mask.to_config(), "p": p, "variant": args.variant}
        _write_manifest(args, "theta", cfg, [args.out], t0)
    else:
        for row in rows:
            print(",".join(_fmt(x) for x in row))
    return 0


def _cmd_variance(args) -> int:
    t0 = time.time()
    link, mask = _parse_link(args), _parse_mask(args)
    n_grid = tuple(_parse_ints(args.n_grid)) if args.n_grid else None
    rep = sigma_p_squared(link, mask, args.p, args.kappa, args.theta_method, n_grid)
    out = {
        "p": rep.p,
        "kappa": rep.kappa,
        "sigma2": rep.sigma2,
        "p2_subtotal": rep.p2_subtotal,
        "p24_subtotal": rep.p24_subtotal,
        "error": rep.error,
        "low_confidence": rep.low_confidence,
        "provenance": rep.provenance,
        "wick_moments": wick_moments(max(rep.sigma2, 0.0), 6),
        "link": link.to_config(),
        "mask": mask.to_config(),
    }
    if args.out:
        _write_json(args.out, out)
        _write_manifest(args, "variance", {"link": link.to_config(), "p": args.p}, [args.out], t0)
    else:
        print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_check_gaussian(args) -> int:
    t0 = time.time()
    link, mask = _parse_link(args), _parse_mask(args)
    grid = _parse_ints(args.n)
    try:
        wit = verify_gaussian_conditions(link, mask, args.witness, grid)
    except WitnessFailure as exc:
        print(f"FAILED: {exc}", file=sys.stderr)
        return 2
    out = {
        "strategy": wit.strategy,
        "c1": wit.c1,
        "c2": wit.c2,
        "verified_at": [list(x) for x in wit.verified_at],
        "S_n": wit.s_description,
        "Z_n": wit.z_description,
        "note": "certified only at the listed N; extrapolation is the user's judgment",
    }
    if args.p:
        out["sigma2_lower_bound"] = witness_sigma_lower_bound(wit, args.p, link, max(grid))
    if args.out:
        _write_json(args.out, out)
        _write_manifest(args, "check-gaussian", {"link": link.to_config()}, [args.out], t0)
    else:
        print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _load_ensemble_config(args) -> EnsembleConfig:
    with open(args.config) as fh:
        raw = json.load(fh)
    cfg = EnsembleConfig(
        link=LinkSpec.from_config(raw["link"]),
        mask=MaskSpec.from_config(raw.get("mask", {"kind": "full"})),
        n=int(raw["n"]),
        p=int(raw["p"]),
        distribution=raw.get("distribution", "std_normal"),
        replications=int(raw.get("replications", 1000)),
        seed=int(args.seed if args.seed is not None else raw.get("seed", 0)),
        trace_method=raw.get("trace_method", "auto"),
    )
    return cfg


def _cmd_simulate(args) -> int:
    t0 = time.time()
    cfg = _load_ensemble_config(args)
    batch = sample_eta(cfg)
    rows = [(r, float(v)) for r, v in enumerate(batch.values)]
    _write_csv(args.out, ["replicate", "eta"], rows)
    side = {
        "seed": cfg.seed,
        "trace_mean": batch.trace_mean,
        "moments": {
            str(k): {"value": v, "se": se}
            for k, (v, se) in empirical_moments(batch.values, [1, 2, 3, 4]).items()
        },
    }
    _write_json(args.out + ".stats.json", side)
    cfgd = {
        "link": cfg.link.to_config(),
        "mask": cfg.mask.to_config(),
        "n": cfg.n,
        "p": cfg.p,
        "replications": cfg.replications,
        "seed": cfg.seed,
    }
    _write_manifest(args, "simulate", cfgd, [args.out, args.out + ".stats.json"], t0)
    return 0


def _cmd_process(args) -> int:
    t0 = time.time()
    cfg = _load_ensemble_config(args)
    grid = [float(x) for x in args.grid.split(",")]
    batch = sample_process(cfg, grid)
    rows = []
    for r in range(batch.paths.shape[0]):
        for ti, t in enumerate(batch.time_grid):
            rows.append((r, t, float(batch.paths[r, ti])))
    _write_csv(args.out, ["replicate", "t", "kappa"], rows)
    cfgd = {
        "link": cfg.link.to_config(),
        "mask": cfg.mask.to_config(),
        "n": cfg.n,
        "p": cfg.p,
        "replications": cfg.replications,
        "seed": cfg.seed,
        "grid": grid,
    }
    _write_manifest(args, "process", cfgd, [args.out], t0)
    return 0


def _cmd_report(args) -> int:
    t0 = time.time()
    link, mask = _parse_link(args), _parse_mask(args)
    p = args.p
    rep = sigma_p_squared(link, mask, p, kappa=3.0)
    cfg = EnsembleConfig(
        link=link,
        mask=mask,
        n=args.n,
        p=p,
        distribution="std_normal",
        replications=args.replications,
        seed=args.seed or 0,
    )
    batch = sample_eta(cfg)
    moments = empirical_moments(batch.values, [2, 3, 4])
    var, var_se = moments[2]
    checks = normality_checks(batch.values)
    sigma2 = rep.sigma2
    verdicts = {
        "variance_within_3se": bool(abs(var - sigma2) <= 3 * var_se),
        "ks_below_0.035": bool(sigma2 > 0 and ks_distance(batch.values, sigma2) <= 0.035),
    }
    out = {
        "link": link.to_config(),
        "mask": mask.to_config(),
        "p": p,
        "theory": {
            "sigma2": sigma2,
            "p2_subtotal": rep.p2_subtotal,
            "p24_subtotal": rep.p24_subtotal,
            "wick_moments": wick_moments(max(sigma2, 0.0), 6),
        },
        "monte_carlo": {
            "n": cfg.n,
            "replications": cfg.replications,
            "seed": cfg.seed,
            "variance": var,
            "variance_se": var_se,
            "skewness": checks["skewness"],
            "excess_kurtosis": checks["excess_kurtosis"],
            "ks_distance": None if sigma2 <= 0 else ks_distance(batch.values, sigma2),
        },
        "verdicts": verdicts,
    }
    if args.out:
        _write_json(args.out, out)
        _write_manifest(args, "report", {"link": link.to_config(), "p": p}, [args.out], t0)
    else:
        print(json.dumps(out, indent=2, sort_keys=True))
    return 0


# -- argument parsing --------------------------------------------------------------

def _add_link_mask_args(sub):
    sub.add_argument("--link", help="built-in link kind")
    sub.add_argument("--link-config", help="JSON file with a link config")
    sub.add_argument("--alpha", type=int, default=1)
    sub.add_argument("--beta", type=int, default=1)
    sub.add_argument("--mask", default="full", help="full|hollow|band|antiband")
    sub.add_argument("--mask-config", help="JSON file with a mask config")
    sub.add_argument("--band-c", default="0", help="bandwidth slope as a rational, e.g. 1/2")
    sub.add_argument("--band-a", type=int, default=0, help="bandwidth offset")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="patles",
        description="linear eigenvalue statistics of generalized patterned random matrices",
    )
    ap.add_argument("--version", action="version", version=__version__)
    sp = ap.add_subparsers(dest="command", required=True)

    e = sp.add_parser("enumerate", help="emit canonical sentences with classification")
    e.add_argument("--p", type=int, required=True)
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--cls", default="all", choices=["all", "sp", "p2", "p24"])
    e.add_argument("--out")
    e.add_argument("--manifest")
    e.set_defaults(func=_cmd_enumerate)

    c = sp.add_parser("count", help="exact circuit counts for one sentence")
    _add_link_mask_args(c)
    c.add_argument("--sentence", required=True, help='e.g. "abab" or "ab,ba"')
    c.add_argument("--n", required=True, help="comma-separated dimensions")
    c.add_argument(
        "--budget-nodes",
        type=int,
        default=int(_env_default("BUDGET_NODES", DEFAULT_NODE_BUDGET)),
    )
    c.add_argument("--out")
    c.add_argument("--manifest")
    c.set_defaults(func=_cmd_count)

    t = sp.add_parser("theta", help="limit values of normalized counts")
    _add_link_mask_args(t)
    t.add_argument("--p", type=int, required=True)
    t.add_argument("--cls", default="p2,p24")
    t.add_argument("--method", default="auto", choices=["auto", "integral", "extrapolation", "both"])
    t.add_argument("--variant", default="exact", choices=["exact", "star"])
    t.add_argument("--n-grid", help="comma-separated dimensions for extrapolation")
    t.add_argument("--out")
    t.add_argument("--manifest")
    t.set_defaults(func=_cmd_theta)

    v = sp.add_parser("variance", help="limiting variance sigma_p^2 and Wick moments")
    _add_link_mask_args(v)
    v.add_argument("--p", type=int, required=True)
    v.add_argument("--kappa", type=float, default=3.0)
    v.add_argument("--theta-method", default="auto")
    v.add_argument("--n-grid")
    v.add_argument("--out")
    v.add_argument("--manifest")
    v.set_defaults(func=_cmd_variance)

    g = sp.add_parser("check-gaussian", help="verify the positivity witness conditions")
    _add_link_mask_args(g)
    g.add_argument("--witness", default="full_image")
    g.add_argument("--n", required=True, help="comma-separated dimensions")
    g.add_argument("--p", type=int, default=0, help="also report the sigma^2 lower bound")
    g.add_argument("--out")
    g.add_argument("--manifest")
    g.set_defaults(func=_cmd_check_gaussian)

    s = sp.add_parser("simulate", help="Monte Carlo batch of the trace statistic")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--manifest")
    s.set_defaults(func=_cmd_simulate)

    pr = sp.add_parser("process", help="Brownian matrix process paths")
    pr.add_argument("--config", required=True)
    pr.add_argument("--grid", default="0,0.25,0.5,0.75,1")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--out", required=True)
    pr.add_argument("--manifest")
    pr.set_defaults(func=_cmd_process)

    r = sp.add_parser("report", help="theory vs Monte Carlo summary for one ensemble")
    _add_link_mask_args(r)
    r.add_argument("--p", type=int, required=True)
    r.add_argument("--n", type=int, default=256)
    r.add_argument("--replications", type=int, default=2000)
    r.add_argument("--seed", type=int, default=int(_env_default("SEED", 0)))
    r.add_argument("--out")
    r.add_argument("--manifest")
    r.set_defaults(func=_cmd_report)

    return ap


def run_command(argv) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except BudgetExceededError as exc:
        print(f"budget exhausted: {exc}", file=sys.stderr)
        return 3
    except (ValidationError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
