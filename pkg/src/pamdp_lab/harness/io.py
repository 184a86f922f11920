"""Flat-file formats: instance JSON, plan JSON, regret CSV with sidecar."""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import os

import numpy as np

from .. import bandit, core
from ..errors import InvalidInputError

CSV_COLUMNS = ("t", "action", "payment", "reward", "inst_regret", "cum_regret")


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _jsonable(u) for k, u in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(u) for u in v]
    if isinstance(v, float) and not np.isfinite(v):
        return str(v)
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True)


def instance_to_dict(inst) -> dict:
    if isinstance(inst, bandit.BanditInstance):
        inst = inst.as_pamdp()
    d = {"S": inst.S, "A": inst.A, "H": inst.H, "P": inst.P, "r": inst.r, "c": inst.c,
         "P0": inst.P0, "eta": inst.eta}
    if inst.iota is not None:
        d["iota"] = inst.iota
    if inst.certificates:
        d["certificates"] = inst.certificates
    return _jsonable(d)


def instance_from_dict(d) -> core.Pamdp:
    missing = [k for k in ("S", "A", "H", "P", "r", "c", "P0", "eta") if k not in d]
    if missing:
        raise InvalidInputError(f"instance JSON lacks fields {missing}")
    env = core.Pamdp(d["P"], d["r"], d["c"], d["P0"], d["eta"], d.get("iota"),
                     dict(d.get("certificates") or {}))
    if (env.S, env.A, env.H) != (d["S"], d["A"], d["H"]):
        raise InvalidInputError(f"declared (S, A, H) = {(d['S'], d['A'], d['H'])} "
                                f"disagrees with array shapes {(env.S, env.A, env.H)}")
    return env


def save_instance(inst, path):
    _write(path, dumps(instance_to_dict(inst)))


def load_instance(path) -> core.Pamdp:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as err:
            raise InvalidInputError(f"{path}: not valid JSON ({err})") from None
    return instance_from_dict(d)


def instance_hash(inst) -> str:
    return hashlib.sha256(dumps(instance_to_dict(inst)).encode()).hexdigest()


def plan_to_dict(plan) -> dict:
    return _jsonable({"x_star": plan.x_star, "pi_star": plan.pi_star,
                      "V_star": plan.value, "U_star": plan.agent_value,
                      "V_table": plan.V_star, "U_table": plan.U_star})


def trace_csv(trace) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cum = trace.cum_regret
    for k in range(len(trace.action)):
        w.writerow([k + 1, int(trace.action[k]), repr(float(trace.payment[k])),
                    repr(float(trace.reward[k])), repr(float(trace.inst_regret[k])), repr(float(cum[k]))])
    return buf.getvalue()


def save_trace(trace, path, inst=None, extra=None):
    """Write the CSV and a JSON sidecar (path + '.json')."""
    _write(path, trace_csv(trace))
    meta = {k: v for k, v in trace.meta.items() if k != "policies"}
    side = {"algorithm": meta.pop("algorithm", None), "parameters": meta, **(extra or {})}
    if inst is not None:
        side["instance_hash"] = instance_hash(inst)
    _write(str(path) + ".json", dumps(side))
    if "policies" in trace.meta:
        _write(str(path) + ".policies.json", dumps(trace.meta["policies"]))


def load_trace_csv(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    return {k: np.array([float(r[k]) for r in rows]) for k in CSV_COLUMNS}


def _write(path, text):
    d = os.path.dirname(str(path))
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as f:
        f.write(text)
