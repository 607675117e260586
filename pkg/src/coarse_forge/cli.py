"""``coarse-forge`` command line: one subcommand group per module, JSON out.

Exit codes: 0 when every emitted verdict passes, 1 when one fails, 2 on
usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import is_dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .controls import AFF, ALL, POLY, ControlFn, dominates_eventually, generalized_inverse_T, parse_control, perp
from .errors import (
    CoarseForgeError,
    EmptyTupleSpace,
    HypothesisUnverified,
    InputError,
    KappaTooSmall,
    PreconditionReplayFailed,
    UnknownDemo,
)
from .extdist import INF, encode_rational, to_ext, to_fraction
from .metric_space import Certificate, MapTable, Space, encode_point, normalize_point, point_label

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# errors that report a failed hypothesis or conclusion rather than bad input
FINDINGS = (KappaTooSmall, HypothesisUnverified, PreconditionReplayFailed, EmptyTupleSpace)


# -- output --------------------------------------------------------------------------

def to_plain(obj):
    """Recursively turn results into JSON-ready values (rationals as num/den)."""
    if obj is INF or isinstance(obj, Fraction):
        return encode_rational(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (str, int)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (Certificate, ControlFn)) or hasattr(obj, "to_json"):
        return to_plain(obj.to_json())
    if isinstance(obj, tuple):
        return [to_plain(x) for x in obj]
    if isinstance(obj, (list, set, frozenset)):
        items = [to_plain(x) for x in obj]
        return sorted(items, key=json.dumps) if isinstance(obj, (set, frozenset)) else items
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            key = k if isinstance(k, str) else (str(k) if isinstance(k, Fraction) else point_label(k))
            out[key] = to_plain(v)
        return out
    if is_dataclass(obj):
        return to_plain(vars(obj))
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, indent=2)


def _emit(args, payload, passed: bool | None = None) -> int:
    payload = dict(payload)
    payload.setdefault("seed", args.seed)
    text = dumps(payload)
    if getattr(args, "out", None):
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if passed is None:
        passed = _all_pass(payload)
    return EXIT_PASS if passed else EXIT_FAIL


def _all_pass(obj) -> bool:
    if isinstance(obj, Certificate):
        return obj.passed
    if isinstance(obj, dict):
        return all(_all_pass(v) for v in obj.values())
    if isinstance(obj, (list, tuple)):
        return all(_all_pass(v) for v in obj)
    return True


# -- input helpers ---------------------------------------------------------------------

def parse_point(text: str):
    try:
        return normalize_point(json.loads(text))
    except json.JSONDecodeError:
        return text


def parse_grid(text: str) -> list:
    try:
        return [to_fraction(x.strip()) if x.strip() != "inf" else INF for x in text.split(",") if x.strip()]
    except (ValueError, ZeroDivisionError, InputError):
        raise InputError(f"cannot parse grid {text!r}; expected comma-separated rationals") from None


def parse_scale(text: str):
    return INF if text.strip() in ("inf", "∞") else to_fraction(text)


def _doc(args) -> dict:
    from .loader import load_document, read_json

    if not getattr(args, "doc", None):
        return {"spaces": {}, "maps": {}, "windows": {}}
    return load_document(read_json(args.doc))


def resolve_space(name: str, doc: dict) -> Space:
    from .loader import BUILTIN_SPACES, builtin_space, read_json, space_from_json

    if name in doc["spaces"]:
        return doc["spaces"][name]
    if name in BUILTIN_SPACES:
        return builtin_space(name)
    if Path(name).is_file():
        s = space_from_json(read_json(name))
        s.name = Path(name).stem
        return s
    raise InputError(f"unknown space {name!r}: not in --doc, not built-in ({', '.join(sorted(BUILTIN_SPACES))}), not a file")


def resolve_map(name: str, doc: dict) -> MapTable:
    if name not in doc["maps"]:
        raise InputError(f"unknown map {name!r}; maps come from the --doc file's \"maps\" section")
    return doc["maps"][name]


def resolve_control(text: str) -> ControlFn:
    from .controls import control_from_json

    p = Path(text)
    if p.is_file():
        from .loader import read_json

        return control_from_json(read_json(p))
    text = text.strip()
    if text.startswith("{"):
        return control_from_json(json.loads(text))
    return parse_control(text)


# -- rips ------------------------------------------------------------------------------

def cmd_rips(args) -> int:
    from . import rips

    doc = _doc(args)
    s = resolve_space(args.space, doc)
    if args.action == "build":
        g = rips.build_rips(s, parse_scale(args.sigma))
        return _emit(args, {"rips": g.summary()})
    if args.action == "dist":
        if args.src is None or args.dst is None:
            raise InputError("rips dist needs --from and --to")
        sigma = parse_scale(args.sigma)
        g = rips.build_rips(s, sigma) if args.theta is None else rips.build_weighted_rips(s, resolve_control(args.theta), sigma)
        d = g.distance(parse_point(args.src), parse_point(args.dst))
        print("inf" if d is INF else str(d))
        return EXIT_PASS
    if args.action == "sweep":
        rep = rips.filtration_sweep(s, parse_grid(args.grid), to_fraction(args.margin))
        return _emit(args, {"sweep": rep}, passed=True)
    if args.action == "weighted":
        theta = resolve_control(args.theta or "exp_base(2)")
        g = rips.build_weighted_rips(s, theta, parse_scale(args.sigma))
        cert = rips.weight_control_check(s, theta, to_fraction(args.margin), graph=g)
        return _emit(args, {"weighted": g.summary(), "certificate": cert})
    if args.action == "cgeodesic":
        cert = rips.cgeodesic_certificate(s, parse_scale(args.sigma), resolve_control(args.rho), to_fraction(args.margin))
        return _emit(args, {"certificate": cert})
    if args.action == "surplus":
        cert = rips.surplus_weight_check(s, resolve_control(args.theta or "exp_base(2)"), resolve_control(args.rho),
                                         parse_scale(args.sigma), to_fraction(args.margin))
        return _emit(args, {"certificate": cert})
    if args.action == "shortcut":
        from .metric_space import metric_preorder_check

        g = rips.shortcut_metric(s, resolve_control(args.theta or "exp_base(2)"), seed=args.seed)
        cert = metric_preorder_check(g, s, AFF, anchors=[s.window[0]])
        return _emit(args, {"shortcut": g.summary(), "inequality": g.verification, "preorder": cert},
                     passed=g.verification.passed)
    raise InputError(f"unknown rips action {args.action!r}")


# -- eq ----------------------------------------------------------------------------------

def cmd_eq(args) -> int:
    from . import equalizer

    doc = _doc(args)
    f, g = resolve_map(args.f, doc), resolve_map(args.g, doc)
    if args.action == "build":
        E = equalizer.kappa_equalizer(f, g, parse_scale(args.kappa))
        return _emit(args, {"equalizer": E.to_json(), "size": len(E.window)}, passed=True)
    if args.action == "stability":
        tab = equalizer.equalizer_stability(f, g, parse_grid(args.grid))
        if args.csv:
            Path(args.csv).write_text(tab.to_csv())
        return _emit(args, {"stability": tab}, passed=True)
    raise InputError(f"unknown eq action {args.action!r}")


# -- diagram ---------------------------------------------------------------------------------

def cmd_diagram(args) -> int:
    from . import diagram
    from .loader import cone_from_json, diagram_from_json, read_json

    if not args.diagram:
        raise InputError("diagram commands need --diagram FILE (objects/arrows JSON)")
    D = diagram_from_json(read_json(args.diagram))
    kappa = parse_scale(args.kappa)
    if args.action == "validate":
        return _emit(args, {"certificate": diagram.validate_uc_diagram(D)})
    if args.action == "tuple":
        T = diagram.tuple_space(D, kappa)
        return _emit(args, {"tuple_space": T.to_json(), "size": len(T.window), "verified": T.verified}, passed=True)
    if args.action == "rips-tuple":
        g = diagram.rips_tuple(D, kappa, parse_scale(args.sigma))
        return _emit(args, {"rips": g.summary()}, passed=True)
    if args.action == "cone-factor":
        if not args.cone:
            raise InputError("cone-factor needs --cone FILE")
        C = cone_from_json(read_json(args.cone), D)
        uc = diagram.validate_uc_cone(C, D)
        res = diagram.cone_factorization(C, diagram.tuple_space(D, kappa), parse_scale(args.sigma))
        return _emit(args, {"cone": uc, "factorization": res["certificate"], "control": res["control"]})
    if args.action == "retract":
        from .loader import load_document

        if not (args.target and args.alpha and args.omega):
            raise InputError("diagram retract needs --target, --alpha and --omega")
        D2 = diagram_from_json(read_json(args.target))
        maps = _object_maps(args, D, D2)
        res = diagram.retraction_transport(maps["alpha"], maps["omega"], to_fraction(args.K),
                                           diagram.tuple_space(D, kappa), D2, parse_scale(args.sigma),
                                           resolve_control(args.rho) if args.rho else None)
        return _emit(args, {"constants": res["constants"], "certificate": res["certificate"]})
    raise InputError(f"unknown diagram action {args.action!r}")


def _object_maps(args, D, D2) -> dict:
    """``{"alpha": {obj: map}, "omega": {obj: map}}`` from JSON files keyed by object name."""
    from .loader import map_from_json, read_json

    out = {}
    for key, path, src, dst in (("alpha", args.alpha, D, D2), ("omega", args.omega, D2, D)):
        raw = read_json(path)
        comps = {}
        for name in D.names:
            if name not in raw:
                raise InputError(f"{key} file has no component for {name!r}")
            spaces = {"src": src.objects[name], "dst": dst.objects[name]}
            comps[name] = map_from_json(dict(raw[name], src="src", dst="dst", name=f"{key}_{name}"), spaces)
        out[key] = comps
    return out


# -- hhs -------------------------------------------------------------------------------------

def _family(args):
    from . import hhs
    from .loader import family_from_json, read_json, total_from_json

    if args.family in hhs.BUILTIN_FAMILIES:
        F, T = hhs.BUILTIN_FAMILIES[args.family]()
        return F, T
    if not args.family:
        raise InputError(f"--family needs a file or one of {', '.join(sorted(hhs.BUILTIN_FAMILIES))}")
    F = family_from_json(read_json(args.family))
    if not args.total:
        raise InputError("a family file needs --total FILE (space and projections)")
    return F, total_from_json(read_json(args.total), F)


def cmd_hhs(args) -> int:
    from . import hhs

    if args.action == "retract":
        if args.family not in (None, "nearest-even"):
            raise InputError("hhs retract currently supports --family nearest-even")
        F, F2, alpha, omega, T = hhs.nearest_even_retraction(2, args.lo, args.hi)
        rho = resolve_control(args.rho) if args.rho else None
        res = hhs.assemble_retraction(F, F2, alpha, omega, parse_scale(args.sigma), parse_scale(args.kappa),
                                      rho=rho, total=T)
        return _emit(args, {"constants": res.constants, "certificate": res.certificate})
    F, T = _family(args)
    if args.action == "qi":
        cert = hhs.hhs_qi_certificate(F, T, parse_scale(args.sigma), parse_scale(args.kappa), to_fraction(args.margin))
        return _emit(args, {"certificate": cert})
    if args.action == "realize":
        grid = parse_grid(args.grid) if args.grid else [parse_scale(args.kappa)]
        res = {str(k): hhs.realization_check(F, T, k)["certificate"] for k in grid}
        return _emit(args, {"realization": res})
    if args.action == "unique":
        return _emit(args, {"certificate": hhs.uniqueness_criterion_check(T, to_fraction(args.margin))})
    raise InputError(f"unknown hhs action {args.action!r}")


# -- metric ------------------------------------------------------------------------------------

def cmd_metric(args) -> int:
    from . import metric_space as ms

    doc = _doc(args)
    if args.action == "validate":
        return _emit(args, {"certificate": ms.validate_metric(resolve_space(args.space, doc), seed=args.seed)})
    if args.action == "qi":
        cert = ms.certify_quasi_isometry(resolve_map(args.map, doc), to_fraction(args.margin))
        return _emit(args, {"certificate": cert})
    if args.action == "preorder":
        cls = {"Aff": AFF, "Poly": POLY, "All": ALL}.get(args.cls)
        if cls is None:
            raise InputError("--class must be Aff, Poly or All")
        cert = ms.metric_preorder_check(resolve_space(args.hi_space, doc), resolve_space(args.lo_space, doc), cls)
        return _emit(args, {"certificate": cert})
    raise InputError(f"unknown metric action {args.action!r}")


# -- controls -------------------------------------------------------------------------------------

def cmd_controls(args) -> int:
    rho = resolve_control(args.control)
    if args.action == "eval":
        return _emit(args, {"control": rho, "t": to_fraction(args.at), "value": rho.eval(to_fraction(args.at))}, passed=True)
    if args.action == "inverse":
        t = to_fraction(args.at)
        return _emit(args, {"control": rho, "t": t, "inverse_T": generalized_inverse_T(rho).eval(t)}, passed=True)
    if args.action == "perp":
        t = to_fraction(args.at)
        return _emit(args, {"control": rho, "t": t, "perp": perp(rho).eval(t)}, passed=True)
    if args.action == "dominates":
        if not args.against:
            raise InputError("controls dominates needs --against RHO")
        dom = dominates_eventually(rho, resolve_control(args.against), to_fraction(args.bound))
        return _emit(args, {"domination": dom}, passed=dom.holds)
    raise InputError(f"unknown controls action {args.action!r}")


# -- demo ----------------------------------------------------------------------------------------

DEMOS = {
    "rips-closed-form": "rips_closed_form",
    "inverse-duality": "inverse_duality",
    "cgeodesic": "cgeodesic",
    "surplus-weight": "surplus_weight",
    "shortcut-negative": "shortcut_negative",
    "equalizer-shift": "equalizer_shift",
    "tuple-oracle": "tuple_oracle",
    "rips-tuple-z2": "rips_tuple_z2",
    "realization": "realization",
    "retraction-constants": "retraction_constants",
    "filtration-monotone": "filtration_monotone",
}


def run_demo(name: str):
    from . import scenarios

    if name not in DEMOS:
        raise UnknownDemo(f"unknown demo {name!r}; known: {', '.join(DEMOS)}")
    return getattr(scenarios, DEMOS[name])()


def cmd_demo(args) -> int:
    if args.list:
        print("\n".join(DEMOS))
        return EXIT_PASS
    if not args.name:
        raise InputError("demo needs --name (see --list)")
    res = run_demo(args.name)
    # runtimes are not part of the bundle so that output stays byte-identical
    return _emit(args, {"demo": args.name, "passed": res.passed, "detail": res.detail}, passed=res.passed)


# -- parser ----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coarse-forge", description="Coarse-geometry constructions checked on finite windows.")
    p.add_argument("--version", action="version", version=f"coarse-forge {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="sampling seed, recorded in the output")
    common.add_argument("--out", help="write JSON here instead of stdout")
    common.add_argument("--margin", default="1/10", help="inner-window margin (fraction of the radius)")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("rips", parents=[common], help="Rips graphs and weighted Rips metrics")
    r.add_argument("action", choices=["build", "dist", "sweep", "weighted", "cgeodesic", "surplus", "shortcut"])
    r.add_argument("--space", required=True, help="built-in name, --doc space name, or space JSON file")
    r.add_argument("--doc", help="JSON document with spaces/windows/maps")
    r.add_argument("--sigma", default="1")
    r.add_argument("--from", dest="src")
    r.add_argument("--to", dest="dst")
    r.add_argument("--grid", default="1,2,4,8")
    r.add_argument("--theta")
    r.add_argument("--rho", default="affine(1,1)")
    r.set_defaults(func=cmd_rips)

    e = sub.add_parser("eq", parents=[common], help="kappa-equalisers and their stability table")
    e.add_argument("action", choices=["build", "stability"])
    e.add_argument("--doc", required=True)
    e.add_argument("--f", required=True)
    e.add_argument("--g", required=True)
    e.add_argument("--kappa", default="0")
    e.add_argument("--grid", default="0,1,2,4,8")
    e.add_argument("--csv", help="also write the radius table as CSV")
    e.set_defaults(func=cmd_eq)

    d = sub.add_parser("diagram", parents=[common], help="tuple spaces of uniformly controlled diagrams")
    d.add_argument("action", choices=["validate", "tuple", "rips-tuple", "cone-factor", "retract"])
    d.add_argument("--diagram")
    d.add_argument("--cone")
    d.add_argument("--target")
    d.add_argument("--alpha")
    d.add_argument("--omega")
    d.add_argument("--K", default="0")
    d.add_argument("--rho")
    d.add_argument("--kappa", default="0")
    d.add_argument("--sigma", default="1")
    d.set_defaults(func=cmd_diagram)

    h = sub.add_parser("hhs", parents=[common], help="pairwise-constrained families")
    h.add_argument("action", choices=["qi", "realize", "unique", "retract"])
    h.add_argument("--family", help="family JSON file or built-in (lattice, diagonal, band, tree_tree)")
    h.add_argument("--total", help="total-space JSON (space and projections)")
    h.add_argument("--sigma", default="1")
    h.add_argument("--kappa", default="0")
    h.add_argument("--grid")
    h.add_argument("--rho")
    h.add_argument("--lo", type=int, default=-16)
    h.add_argument("--hi", type=int, default=16)
    h.set_defaults(func=cmd_hhs)

    m = sub.add_parser("metric", parents=[common], help="metric axioms, quasi-isometries, preorders")
    m.add_argument("action", choices=["validate", "qi", "preorder"])
    m.add_argument("--doc")
    m.add_argument("--space")
    m.add_argument("--map")
    m.add_argument("--hi", dest="hi_space")
    m.add_argument("--lo", dest="lo_space")
    m.add_argument("--class", dest="cls", default="Aff")
    m.set_defaults(func=cmd_metric)

    c = sub.add_parser("controls", parents=[common], help="control-function calculus")
    c.add_argument("action", choices=["eval", "inverse", "perp", "dominates"])
    c.add_argument("--control", required=True, help='e.g. "affine(2,1)", "exp_base(2)" or a JSON object/file')
    c.add_argument("--at", default="0")
    c.add_argument("--against")
    c.add_argument("--bound", default="64")
    c.set_defaults(func=cmd_controls)

    dm = sub.add_parser("demo", parents=[common], help="run a built-in scenario end to end")
    dm.add_argument("--name")
    dm.add_argument("--list", action="store_true")
    dm.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_PASS
    try:
        return args.func(args)
    except FINDINGS as e:
        payload = {"error": type(e).__name__, "message": str(e), "seed": args.seed}
        for attr in ("witness", "location"):
            if getattr(e, attr, None) is not None:
                payload[attr] = getattr(e, attr)
        print(dumps(payload))
        return EXIT_FAIL
    except (CoarseForgeError, ValueError, KeyError) as e:
        print(f"coarse-forge: error: {type(e).__name__}: {e}", file=sys.stderr)
        print("see `coarse-forge <command> --help` and the JSON formats in README.md", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
