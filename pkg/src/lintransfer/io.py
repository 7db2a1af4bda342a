"""JSON instances and reports, CSV matrices.

Infinite entries travel as the strings ``"inf"`` and ``"-inf"``; exact
rationals are written as floats next to a ``"..._exact"`` string field.
"""

from __future__ import annotations

import csv
import io
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from .gallery import KINDS as GALLERY_KINDS, GallerySpec, make_transfer
from .inequalities import InequalitySpec
from .operators import EntropicOperator, MarkovOperator
from .regularize import regularize
from .space import FiniteSpace, Measure, ValidationError
from .stochastic import ControlledChain
from .transfer import Transfer, convolve, cost_transfer, metric_transfer

_SENTINELS = {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf,
              "Infinity": math.inf, "-Infinity": -math.inf}


def decode_number(v) -> float:
    if isinstance(v, str):
        if v in _SENTINELS:
            return _SENTINELS[v]
        try:
            return float(Fraction(v))
        except ValueError as exc:
            raise ValidationError(f"not a number: {v!r}") from exc
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"not a number: {v!r}")
    return float(v)


def decode_array(v) -> np.ndarray:
    if not isinstance(v, list):
        raise ValidationError("expected a JSON array")
    return np.array([decode_array(x) if isinstance(x, list) else decode_number(x) for x in v],
                    dtype=float)


def encode_number(x) -> Any:
    x = float(x) + 0.0      # folds -0.0 into 0.0
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        raise ValidationError("NaN cannot be encoded")
    return x


def encode_vector(v) -> list:
    return [encode_number(x) for x in np.asarray(v, dtype=float).ravel()]


def encode_matrix(M) -> list:
    return [encode_vector(row) for row in np.atleast_2d(np.asarray(M, dtype=float))]


# ---------------------------------------------------------------------------
# spaces, measures
# ---------------------------------------------------------------------------

def space_from_json(obj: dict) -> FiniteSpace:
    pts = obj.get("points")
    coords = obj.get("coords")
    metric = obj.get("metric")
    labels = ()
    if isinstance(pts, list):
        labels, n = tuple(str(p) for p in pts), len(pts)
    elif isinstance(pts, int):
        n = pts
    elif coords is not None:
        n = len(coords)
    elif metric is not None:
        n = len(metric)
    else:
        raise ValidationError("space needs points, coords or metric")
    c = decode_array(coords) if coords is not None else None
    if metric is None and c is not None and obj.get("line_metric", True):
        d = np.abs(c[:, None] - c[None, :])
    else:
        d = decode_array(metric) if metric is not None else None
    return FiniteSpace(n, labels=labels, coords=c, metric=d)


def space_to_json(X: FiniteSpace) -> dict:
    out: dict = {"points": list(X.labels)}
    if X.coords is not None:
        out["coords"] = encode_vector(X.coords)
    if X.metric is not None:
        out["metric"] = encode_matrix(X.metric)
    return out


def measure_from_json(obj, space: FiniteSpace | None = None) -> Measure:
    if isinstance(obj, list):
        obj = {"weights": obj}
    w = decode_array(obj["weights"])
    if "space" in obj:
        space = space_from_json(obj["space"])
    space = space or FiniteSpace(len(w))
    return Measure(space, w)


def measure_to_json(m: Measure) -> dict:
    return {"weights": encode_vector(m.weights)}


# ---------------------------------------------------------------------------
# transfers
# ---------------------------------------------------------------------------

_RESERVED = {"kind", "space", "target", "children", "base", "epsilon"}


def transfer_from_json(obj: dict) -> Transfer:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValidationError("transfer JSON needs a 'kind'")
    kind = obj["kind"]
    space = space_from_json(obj["space"]) if "space" in obj else None
    if kind == "composite":
        kids = [transfer_from_json(c) for c in obj.get("children", [])]
        if not kids:
            raise ValidationError("composite needs children")
        out = kids[0]
        for k in kids[1:]:
            out = convolve(out, k)
        return out
    if kind == "regularized":
        return regularize(transfer_from_json(obj["base"]), decode_number(obj["epsilon"])).transfer
    if kind == "metric":
        if space is None:
            raise ValidationError("metric transfer needs a space")
        return metric_transfer(space)
    if kind == "cost":
        C = decode_array(obj["cost"])
        if C.ndim != 2:
            raise ValidationError("cost must be a matrix")
        target = space_from_json(obj["target"]) if "target" in obj else None
        if space is None or space.n != C.shape[0]:
            space = space or FiniteSpace(C.shape[0])
        if target is None:
            target = space if C.shape[0] == C.shape[1] else FiniteSpace(C.shape[1])
        return cost_transfer(C, space, target)
    params = dict(obj.get("params", {}))
    params.update({k: v for k, v in obj.items() if k not in _RESERVED and k != "params"})
    if "kernel" in params:
        params["kernel"] = decode_array(params["kernel"])
    if "cost" in params:
        params["cost"] = decode_array(params["cost"])
    if "d" in params:
        params["d"] = decode_array(params["d"])
    if kind in GALLERY_KINDS:
        if space is None:
            n = len(params["kernel"]) if "kernel" in params else len(params.get("sigma", []))
            if not n:
                raise ValidationError(f"{kind} needs a space")
            space = FiniteSpace(n)
        return make_transfer(GallerySpec(kind, space, params))
    raise ValidationError(f"unknown transfer kind {kind!r}")


def transfer_to_json(t: Transfer) -> dict:
    if t.cost is not None:
        out = {"kind": "cost", "cost": encode_matrix(t.cost), "space": space_to_json(t.source)}
        if t.target is not t.source:
            out["target"] = space_to_json(t.target)
        return out
    op = t.operator
    if isinstance(op, (MarkovOperator, EntropicOperator)):
        return {"kind": op.kind, "kernel": encode_matrix(op.P), "space": space_to_json(t.source)}
    if t.kind == "composite" and t.children:
        return {"kind": "composite", "children": [transfer_to_json(c) for c in t.children]}
    raise ValidationError(f"no JSON form for a {t.kind!r} transfer")


# ---------------------------------------------------------------------------
# chains, inequality specs
# ---------------------------------------------------------------------------

def chain_from_json(obj: dict) -> ControlledChain:
    N, dim = int(obj["N"]), int(obj.get("dim", 1))
    controls = obj.get("controls", [-1, 0, 1])
    if "kernel" in obj:
        return ControlledChain(N, dim, list(controls), decode_array(obj["kernel"]),
                               decode_array(obj["lagrangian"]))
    lag = obj.get("lagrangian", {})
    if lag.get("kinetic", "v2/2") != "v2/2":
        raise ValidationError("only the kinetic term 'v2/2' is supported")
    pot = lag.get("potential")
    return ControlledChain.lazy(N, controls, None if pot is None else decode_array(pot), dim)


def chain_to_json(ch: ControlledChain) -> dict:
    if "potential" in ch.meta:
        return {"N": ch.N, "dim": ch.dim, "controls": ch.meta["base_controls"],
                "lagrangian": {"kinetic": "v2/2", "potential": encode_vector(ch.meta["potential"])}}
    return {"N": ch.N, "dim": ch.dim, "controls": ch.controls,
            "kernel": [encode_matrix(k) for k in ch.kernel],
            "lagrangian": encode_matrix(ch.lagrangian)}


def inequality_from_json(obj: dict) -> InequalitySpec:
    F = transfer_from_json(obj["F"])
    mu = measure_from_json(obj["mu"], F.source)
    nu = measure_from_json(obj["nu"], F.target)
    return InequalitySpec(F, mu, nu, decode_number(obj["lambda1"]), decode_number(obj["lambda2"]),
                          sigma_step=decode_number(obj.get("sigma_step", 1e-2)),
                          name=str(obj.get("name", "")))


def inequality_to_json(spec: InequalitySpec) -> dict:
    return {"name": spec.name, "F": transfer_to_json(spec.F), "mu": measure_to_json(spec.mu),
            "nu": measure_to_json(spec.nu), "lambda1": spec.lam1, "lambda2": spec.lam2,
            "sigma_step": spec.sigma_step}


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def load_json(path) -> Any:
    return json.loads(Path(path).read_text())


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False)


def matrix_to_csv(M) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(np.asarray(M, dtype=float)):
        w.writerow([("inf" if x > 0 else "-inf") if math.isinf(x) else format(x, ".17g") for x in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return np.array([[decode_number(x) if x in _SENTINELS else float(x) for x in r] for r in rows])
