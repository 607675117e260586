"""JSON documents for spaces, windows, maps, diagrams and families, plus built-in spaces."""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from .controls import control_from_json, exp_base
from .diagram import Arrow, ConeSpec, DiagramSpec
from .errors import InputError
from .extdist import INF, ScaledMatrix, to_ext
from .hhs import PairwiseFamily, TotalSpaceCandidate
from .metric_space import (
    ExplicitMatrix,
    GraphMetric,
    Lattice,
    MapTable,
    ProductLinf,
    Space,
    Subspace,
    TreeMetric,
    binary_tree,
    box_window,
    normalize_point,
    path_graph,
    z_window,
)


def _points(raw):
    return [normalize_point(p) for p in raw]


def space_from_json(obj, window=None) -> Space:
    """Build a space oracle from ``{"type": ..., ...}`` or a built-in name."""
    if isinstance(obj, str):
        return builtin_space(obj)
    if not isinstance(obj, dict) or "type" not in obj:
        raise InputError(f"space spec needs a 'type': {obj!r}")
    kind = obj["type"]
    win = window if window is not None else (_points(obj["window"]) if "window" in obj else None)
    if kind == "builtin":
        s = builtin_space(obj["name"])
        return s if win is None else s.with_window(win)
    if kind == "lattice":
        dim = int(obj.get("dim", 1))
        norm = obj.get("norm", "L1")
        if win is None and "box" in obj:
            lo, hi = obj["box"]
            return box_window(dim, int(lo), int(hi), norm) if dim > 1 else z_window(int(lo), int(hi), norm)
        return Lattice(dim, norm, win or ())
    if kind == "explicit_matrix":
        pts = _points(obj["points"])
        mat = ScaledMatrix.from_entries([[to_ext(v) for v in row] for row in obj["matrix"]])
        return ExplicitMatrix(pts, mat, win)
    if kind in ("graph_metric", "tree_metric"):
        cls = TreeMetric if kind == "tree_metric" else GraphMetric
        verts = _points(obj["vertices"])
        edges = [tuple(normalize_point(q) for q in e) for e in obj["edges"]]
        return cls(verts, edges, win)
    if kind == "product_linf":
        factors = [space_from_json(f) for f in obj["factors"]]
        return ProductLinf(factors, win)
    if kind == "subspace":
        parent = space_from_json(obj["parent"])
        pts = _points(obj["points"]) if "points" in obj else None
        return Subspace(parent, points=pts, window=win if win is not None else pts)
    if kind == "rips":
        from .rips import build_rips

        return build_rips(space_from_json(obj["parent"]), to_ext(obj["sigma"]))
    raise InputError(f"unknown space type {kind!r}")


def map_from_json(obj, spaces: dict) -> MapTable:
    try:
        src, dst = spaces[obj["src"]], spaces[obj["dst"]]
    except KeyError as e:
        raise InputError(f"map refers to unknown space {e.args[0]!r}") from None
    vals = {}
    for k, v in obj["values"].items():
        key = normalize_point(json.loads(k)) if isinstance(k, str) and k[:1] in "[-0123456789\"" else normalize_point(k)
        vals[key] = normalize_point(v)
    return MapTable(src, dst, vals, name=obj.get("name", "f"))


def load_document(obj) -> dict:
    """``{"spaces": ..., "windows": ..., "maps": ...}`` into live objects."""
    windows = {k: _points(v) for k, v in obj.get("windows", {}).items()}
    spaces = {}
    for name, spec in obj.get("spaces", {}).items():
        s = space_from_json(spec, windows.get(name))
        s.name = name
        spaces[name] = s
    maps = {name: map_from_json(dict(m, name=name), spaces) for name, m in obj.get("maps", {}).items()}
    return {"spaces": spaces, "windows": windows, "maps": maps}


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read {path}: {e}") from None


def diagram_from_json(obj) -> DiagramSpec:
    objects = {}
    for name, spec in obj["objects"].items():
        s = space_from_json(spec)
        s.name = name
        objects[name] = s
    arrows = []
    for a in obj.get("arrows", []):
        m = map_from_json(dict(a["map"], src=a["src"], dst=a["dst"], name=a["id"]), objects)
        arrows.append(Arrow(a["id"], a["src"], a["dst"], m))
    uc = obj.get("uniform_control")
    return DiagramSpec(objects, arrows, control_from_json(uc) if uc is not None else None)


def cone_from_json(obj, D: DiagramSpec) -> ConeSpec:
    apex = space_from_json(obj["apex"])
    apex.name = "apex"
    spaces = dict(D.objects, apex=apex)
    legs = {n: map_from_json(dict(m, src="apex", dst=n, name=f"mu_{n}"), spaces) for n, m in obj["legs"].items()}
    uc = obj.get("uniform_control")
    kb = obj.get("commutativity_bound")
    return ConeSpec(apex, legs, control_from_json(uc) if uc is not None else None,
                    to_ext(kb) if kb is not None else None)


def family_from_json(obj) -> PairwiseFamily:
    factors = {}
    for name, spec in obj["factors"].items():
        s = space_from_json(spec)
        s.name = name
        factors[name] = s
    return PairwiseFamily(factors, obj.get("constraints", {}), name=obj.get("name", "family"))


def total_from_json(obj, F: PairwiseFamily) -> TotalSpaceCandidate:
    X = space_from_json(obj["space"])
    X.name = "X"
    spaces = dict(F.factors, X=X)
    proj = {u: map_from_json(dict(m, src="X", dst=u, name=f"lambda_{u}"), spaces) for u, m in obj["projections"].items()}
    uc = obj.get("control")
    return TotalSpaceCandidate(X, proj, F, control_from_json(uc) if uc is not None else None)


# -- built-in spaces ----------------------------------------------------------------

def clusters(k: int = 3, size: int = 4, gap: int = 10) -> ExplicitMatrix:
    """``k`` clusters of ``size`` points: distance 1 inside a cluster, ``gap * |i - j|`` across."""
    pts = [(c, j) for c in range(k) for j in range(size)]
    rows = [[Fraction(0) if p == q else Fraction(1) if p[0] == q[0] else Fraction(gap * abs(p[0] - q[0]))
             for q in pts] for p in pts]
    return ExplicitMatrix(pts, rows, name="clusters")


def _shortcut():
    from .rips import shortcut_metric

    return shortcut_metric(path_graph(64), exp_base(2))


BUILTIN_SPACES = {
    "z1": lambda: z_window(-16, 16),
    "z2": lambda: box_window(2, -6, 6, "Linf"),
    "tree": lambda: binary_tree(4),
    "ray": lambda: path_graph(64),
    "clusters": clusters,
    "shortcut": _shortcut,
}


def builtin_space(name: str) -> Space:
    try:
        s = BUILTIN_SPACES[name]()
    except KeyError:
        raise InputError(f"unknown built-in space {name!r}; known: {', '.join(sorted(BUILTIN_SPACES))}") from None
    s.name = name
    return s
