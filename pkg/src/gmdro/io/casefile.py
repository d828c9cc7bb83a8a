"""Case ingestion: native JSON plus a documented Matpower-GMD subset.

Native schema (JSON object):
    name         string
    buses        [{id, pd, qd, vmin, vmax, gs, bs}]
    generators   [{id, bus, c0, c1, c2, pmin, pmax, qmin, qmax}]
    branches     [{id, kind: "line"|"xfmr", from, to, g, b, bc, tap, smax,
                   angmin_deg, angmax_deg, ...}]
                 lines add {gamma, le_km, ln_km, compensated};
                 transformers add {config: {type, nh/nl or ns/nc}, k_loss,
                 ieff_max, winding_gamma: {label: 1/ohm}, neutral}
    substations  {neutral id: grounding conductance 1/ohm}
    params       {kappa_l, kappa_s, vd_max}

Matpower-GMD subset (read-only, converted to native on ingest): numeric
tables ``mpc.bus``, ``mpc.gen``, ``mpc.gencost``, ``mpc.branch`` with the
standard column meanings, plus
    mpc.gmd_bus     [parent_index, status, g_gnd]          (0 parent = neutral)
    mpc.gmd_branch  [row_f, row_t, parent_branch, status, br_r, le_km, ln_km]
    mpc.branch_gmd  [parent_branch, k_loss, type, n1, n2]  (1 gwye, 2 auto, 3 gsu)
Unmapped fields are collected as warnings, never guessed.
"""

import hashlib
import json
import math
import re
from dataclasses import dataclass, field

from ..grid.model import (AcBranch, AcNetwork, Bus, Generator, GridError,
                          TRANSFORMER_KINDS)

TABLE_III_DEFAULTS = {"kappa_l": 50000.0, "kappa_s": 100000.0, "vd_max": 10000.0}
BUS_DEFAULTS = {"pd": 0.0, "qd": 0.0, "vmin": 0.94, "vmax": 1.06, "gs": 0.0, "bs": 0.0}
BRANCH_DEFAULTS = {"bc": 0.0, "tap": 1.0, "angmin_deg": -30.0, "angmax_deg": 30.0}


class CaseError(ValueError):
    pass


@dataclass
class CaseParams:
    kappa_l: float = TABLE_III_DEFAULTS["kappa_l"]
    kappa_s: float = TABLE_III_DEFAULTS["kappa_s"]
    vd_max: float = TABLE_III_DEFAULTS["vd_max"]


@dataclass
class CaseFile:
    name: str
    net: AcNetwork
    params: CaseParams
    warnings: list = field(default_factory=list)
    sha: str = ""


def git_blob_sha(data: bytes) -> str:
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def _need(obj, key, where):
    if key not in obj:
        raise CaseError(f"{where}: missing required field {key!r}")
    return obj[key]


def _config_from_json(spec, where):
    kind = _need(spec, "type", where)
    if kind not in TRANSFORMER_KINDS:
        raise CaseError(f"{where}: unknown transformer type {kind!r}")
    cls = TRANSFORMER_KINDS[kind]
    try:
        if kind == "gwye-gwye":
            return cls(float(_need(spec, "nh", where)), float(_need(spec, "nl", where)))
        if kind == "gwye-gwye-auto":
            return cls(float(_need(spec, "ns", where)), float(_need(spec, "nc", where)))
        return cls()
    except GridError as exc:
        raise CaseError(f"{where}: {exc}") from exc


def _parse_native(doc, warnings):
    known_top = {"name", "buses", "generators", "branches", "substations",
                 "params", "base_mva"}
    for key in doc:
        if key not in known_top:
            warnings.append(f"ignored unknown top-level field {key!r}")

    buses = []
    for rec in _need(doc, "buses", "case"):
        where = f"bus {rec.get('id', '?')}"
        merged = {**BUS_DEFAULTS, **{k: v for k, v in rec.items() if k != "id"}}
        extra = set(merged) - set(BUS_DEFAULTS)
        for k in sorted(extra):
            warnings.append(f"{where}: ignored field {k!r}")
            merged.pop(k)
        try:
            buses.append(Bus(int(_need(rec, "id", where)), **merged))
        except GridError as exc:
            raise CaseError(f"{where}: {exc}") from exc

    gens = []
    gen_fields = {"c0": 0.0, "c1": 0.0, "c2": 0.0, "pmin": 0.0, "pmax": 0.0,
                  "qmin": 0.0, "qmax": 0.0}
    for rec in doc.get("generators", []):
        where = f"generator {rec.get('id', '?')}"
        merged = {**gen_fields, **{k: v for k, v in rec.items() if k not in ("id", "bus")}}
        extra = set(merged) - set(gen_fields)
        for k in sorted(extra):
            warnings.append(f"{where}: ignored field {k!r}")
            merged.pop(k)
        try:
            gens.append(Generator(int(_need(rec, "id", where)),
                                  int(_need(rec, "bus", where)), **merged))
        except GridError as exc:
            raise CaseError(f"{where}: {exc}") from exc

    branches = []
    for rec in _need(doc, "branches", "case"):
        where = f"branch {rec.get('id', '?')}"
        kind = rec.get("kind", "line")
        common = dict(
            id=int(_need(rec, "id", where)),
            from_bus=int(_need(rec, "from", where)),
            to_bus=int(_need(rec, "to", where)),
            g=float(_need(rec, "g", where)),
            b=float(_need(rec, "b", where)),
            bc=float(rec.get("bc", BRANCH_DEFAULTS["bc"])),
            tap=float(rec.get("tap", BRANCH_DEFAULTS["tap"])),
            smax=float(_need(rec, "smax", where)),
            amin=math.radians(float(rec.get("angmin_deg", BRANCH_DEFAULTS["angmin_deg"]))),
            amax=math.radians(float(rec.get("angmax_deg", BRANCH_DEFAULTS["angmax_deg"]))),
        )
        try:
            if kind == "line":
                branches.append(AcBranch(
                    **common,
                    gamma=float(rec.get("gamma", 0.0)),
                    le_km=float(rec.get("le_km", 0.0)),
                    ln_km=float(rec.get("ln_km", 0.0)),
                    compensated=bool(rec.get("compensated", False)),
                ))
            elif kind == "xfmr":
                cfg_spec = rec.get("config")
                if not cfg_spec:
                    raise CaseError(f"{where}: transformer lacks winding configuration")
                cfg = _config_from_json(cfg_spec, where)
                wg = rec.get("winding_gamma", {})
                branches.append(AcBranch(
                    **common,
                    config=cfg,
                    k_loss=float(rec.get("k_loss", 0.0)),
                    ieff_max=(None if rec.get("ieff_max") is None
                              else float(rec["ieff_max"])),
                    winding_gamma=tuple(sorted((str(k), float(v)) for k, v in wg.items())),
                    neutral=rec.get("neutral"),
                ))
            else:
                raise CaseError(f"{where}: unknown branch kind {kind!r}")
        except GridError as exc:
            raise CaseError(f"{where}: {exc}") from exc

    subs = {str(k): float(v) for k, v in doc.get("substations", {}).items()}
    try:
        net = AcNetwork(buses, gens, branches, substations=subs,
                        name=str(doc.get("name", "")),
                        base_mva=float(doc.get("base_mva", 100.0)))
    except GridError as exc:
        raise CaseError(str(exc)) from exc

    pdoc = doc.get("params", {})
    for k in pdoc:
        if k not in TABLE_III_DEFAULTS:
            warnings.append(f"params: ignored field {k!r}")
    params = CaseParams(
        kappa_l=float(pdoc.get("kappa_l", TABLE_III_DEFAULTS["kappa_l"])),
        kappa_s=float(pdoc.get("kappa_s", TABLE_III_DEFAULTS["kappa_s"])),
        vd_max=float(pdoc.get("vd_max", TABLE_III_DEFAULTS["vd_max"])),
    )
    return net, params


# ---------------------------------------------------------------------------
# Matpower-GMD subset

_MPC_TABLE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\];", re.S)


def _mpc_tables(text):
    out = {}
    for name, body in _MPC_TABLE.findall(text):
        rows = []
        for line in body.splitlines():
            line = line.split("%")[0].strip().rstrip(";")
            if not line:
                continue
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
        out[name] = rows
    return out


def _parse_matpower(text, warnings):
    tables = _mpc_tables(text)
    for required in ("bus", "branch"):
        if required not in tables:
            raise CaseError(f"matpower input lacks mpc.{required}")
    base_match = re.search(r"mpc\.baseMVA\s*=\s*([0-9.eE+-]+)", text)
    base = float(base_match.group(1)) if base_match else 100.0

    buses = []
    for row in tables["bus"]:
        buses.append(Bus(
            id=int(row[0]), pd=row[2] / base, qd=row[3] / base,
            gs=row[4] / base, bs=row[5] / base,
            vmax=row[11] if len(row) > 11 and row[11] > 0 else BUS_DEFAULTS["vmax"],
            vmin=row[12] if len(row) > 12 and row[12] > 0 else BUS_DEFAULTS["vmin"],
        ))

    gens = []
    gencost = tables.get("gencost", [])
    for k, row in enumerate(tables.get("gen", [])):
        c0 = c1 = c2 = 0.0
        if k < len(gencost):
            gc = gencost[k]
            if int(gc[0]) == 2 and len(gc) >= 7:
                c2, c1, c0 = gc[4] * base * base, gc[5] * base, gc[6]
            else:
                warnings.append(f"gencost row {k + 1}: unsupported model, costs zeroed")
        gens.append(Generator(
            id=k + 1, bus=int(row[0]),
            c0=c0, c1=c1, c2=c2,
            pmax=row[8] / base, pmin=row[9] / base,
            qmax=row[3] / base, qmin=row[4] / base,
        ))

    bgmd = {int(r[0]): r for r in tables.get("branch_gmd", [])}
    gmd_branch = tables.get("gmd_branch", [])
    gmd_bus = tables.get("gmd_bus", [])

    # neutral nodes: gmd_bus rows with parent 0; keyed sub<row index>
    subs = {}
    gmd_node_key = {}
    for i, row in enumerate(gmd_bus):
        parent = int(row[0])
        if parent == 0:
            key = f"sub{i + 1}"
            subs[key] = row[2]
            gmd_node_key[i + 1] = key
        else:
            gmd_node_key[i + 1] = f"b{parent}"
            if len(row) > 2 and row[2] != 0.0:
                warnings.append(f"gmd_bus row {i + 1}: grounding on a bus node ignored")

    # per-branch DC data: lines take (gamma, lengths); transformers take
    # winding conductances and their neutral from their arcs
    line_dc = {}
    xfmr_dc = {}
    for i, row in enumerate(gmd_branch):
        if int(row[3]) == 0:
            continue
        parent = int(row[2])
        gamma = 1.0 / row[4] if row[4] > 0 else 0.0
        fk = gmd_node_key.get(int(row[0]))
        tk = gmd_node_key.get(int(row[1]))
        if fk is None or tk is None:
            raise CaseError(f"gmd_branch row {i + 1} references missing gmd bus")
        le = row[5] if len(row) > 5 else 0.0
        ln = row[6] if len(row) > 6 else 0.0
        if parent in bgmd:
            xfmr_dc.setdefault(parent, []).append((fk, tk, gamma))
        else:
            line_dc[parent] = (gamma, le, ln)

    branches = []
    for i, row in enumerate(tables["branch"]):
        bid = i + 1
        if int(row[10]) == 0:
            warnings.append(f"branch {bid}: out-of-service branch kept switched on-able")
        r, x, b_ch = row[2], row[3], row[4]
        den = r * r + x * x
        g, b = (r / den, -x / den) if den > 0 else (0.0, 0.0)
        smax = row[5] / base if row[5] > 0 else 99.0
        tap = row[8] if row[8] > 0 else 1.0
        amin = math.radians(row[11]) if len(row) > 11 and row[11] != 0 else math.radians(-30)
        amax = math.radians(row[12]) if len(row) > 12 and row[12] != 0 else math.radians(30)
        common = dict(id=bid, from_bus=int(row[0]), to_bus=int(row[1]), g=g, b=b,
                      bc=b_ch, tap=tap, smax=smax, amin=amin, amax=amax)
        if bid in bgmd:
            gb = bgmd[bid]
            tcode = int(gb[2])
            if tcode == 1:
                cfg = TRANSFORMER_KINDS["gwye-gwye"](gb[3], gb[4])
                labels = ("h", "l")
            elif tcode == 2:
                cfg = TRANSFORMER_KINDS["gwye-gwye-auto"](gb[3], gb[4])
                labels = ("s", "c")
            elif tcode == 3:
                cfg = TRANSFORMER_KINDS["gwye-delta-gsu"]()
                labels = ("h",)
            else:
                raise CaseError(f"branch_gmd for branch {bid}: unknown type {tcode}")
            arcs = xfmr_dc.get(bid, [])
            if len(arcs) != len(labels):
                raise CaseError(
                    f"branch {bid}: expected {len(labels)} winding arcs, got {len(arcs)}")
            wg = {}
            neutral = None
            for lbl, (fk, tk, gamma) in zip(labels, arcs):
                wg[lbl] = gamma
                if tk.startswith("sub"):
                    neutral = tk
            if neutral is None:
                raise CaseError(f"branch {bid}: transformer arcs reach no neutral")
            branches.append(AcBranch(**common, config=cfg, k_loss=gb[1],
                                     winding_gamma=tuple(sorted(wg.items())),
                                     neutral=neutral))
        else:
            gamma, le, ln = line_dc.get(bid, (0.0, 0.0, 0.0))
            branches.append(AcBranch(**common, gamma=gamma, le_km=le, ln_km=ln))

    try:
        net = AcNetwork(buses, gens, branches, substations=subs, name="matpower",
                        base_mva=base)
    except GridError as exc:
        raise CaseError(str(exc)) from exc
    return net, CaseParams()


def parse_case(source) -> CaseFile:
    """Parse a case from a path, bytes, or str.  Any byte sequence yields
    either a CaseFile or a CaseError."""
    if isinstance(source, (str,)) and "\n" not in source and len(source) < 4096:
        try:
            with open(source, "rb") as fh:
                data = fh.read()
        except OSError as exc:
            raise CaseError(f"cannot read case file {source!r}: {exc}") from exc
    elif isinstance(source, bytes):
        data = source
    else:
        data = str(source).encode()

    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CaseError(f"case is not UTF-8: {exc}") from exc

    warnings = []
    if "mpc." in text and "function mpc" in text or re.search(r"mpc\.bus\s*=", text):
        net, params = _parse_matpower(text, warnings)
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CaseError(
                f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
            ) from exc
        if not isinstance(doc, dict):
            raise CaseError("case JSON must be an object")
        net, params = _parse_native(doc, warnings)

    return CaseFile(name=net.name or "case", net=net, params=params,
                    warnings=warnings, sha=git_blob_sha(data))
