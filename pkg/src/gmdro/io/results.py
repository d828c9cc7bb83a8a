"""Deterministic result serialization.

JSON is emitted with sorted keys and floats rendered at 10 significant
digits, so writing, re-parsing, and writing again is byte-identical.
Wall-clock fields are zeroed unless timings are explicitly requested,
keeping repeated runs with the same seed byte-identical.
"""

import json
import math
from dataclasses import asdict, dataclass, field

FLOAT_FMT = "%.10g"

CSV_COLUMNS = ["instance", "R", "M", "delta_mu", "approach", "C1", "C2", "C3",
               "C4", "shed_total", "loss_total", "dqloss_total", "iterations",
               "gap", "wall_ms"]


def fmt_float(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0.0:
            return "0"
        return FLOAT_FMT % x
    return str(x)


def _canon(obj, out):
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int,)):
        out.append(str(obj))
    elif isinstance(obj, float):
        if math.isfinite(obj):
            out.append(fmt_float(obj))
        else:
            out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        out.append("{")
        first = True
        for k in sorted(obj, key=str):
            if not first:
                out.append(",")
            first = False
            out.append(json.dumps(str(k)))
            out.append(":")
            _canon(obj[k], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _canon(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def canon_json(obj) -> bytes:
    out = []
    _canon(obj, out)
    out.append("\n")
    return "".join(out).encode()


@dataclass
class ResultBundle:
    meta: dict = field(default_factory=dict)
    switching: dict = field(default_factory=dict)
    report: dict = None
    value: float = None
    certificate: dict = None
    ccg_log: list = field(default_factory=list)
    sufficiency: list = field(default_factory=list)
    grid_rows: list = field(default_factory=list)

    def to_dict(self):
        return {
            "meta": self.meta,
            "switching": self.switching,
            "report": self.report,
            "value": self.value,
            "certificate": self.certificate,
            "ccg_log": self.ccg_log,
            "sufficiency": self.sufficiency,
            "grid_rows": self.grid_rows,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            meta=doc.get("meta", {}),
            switching=doc.get("switching", {}),
            report=doc.get("report"),
            value=doc.get("value"),
            certificate=doc.get("certificate"),
            ccg_log=doc.get("ccg_log", []),
            sufficiency=doc.get("sufficiency", []),
            grid_rows=doc.get("grid_rows", []),
        )


def _strip_timings(obj):
    if isinstance(obj, dict):
        return {k: (0.0 if k == "wall_ms" else _strip_timings(v))
                for k, v in obj.items()}
    if isinstance(obj, list):
        return [_strip_timings(v) for v in obj]
    return obj


def write_results(bundle: ResultBundle, fmt="json", include_timings=False) -> bytes:
    doc = bundle.to_dict()
    if not include_timings:
        doc = _strip_timings(doc)
    if fmt == "json":
        return canon_json(doc)
    if fmt == "csv":
        rows = doc.get("grid_rows") or ([] if doc.get("report") is None
                                        else [_report_row(doc)])
        lines = [",".join(CSV_COLUMNS)]
        for row in rows:
            lines.append(",".join(fmt_float(_csv_cell(row.get(c))) for c in CSV_COLUMNS))
        return ("\n".join(lines) + "\n").encode()
    raise ValueError(f"unknown result format {fmt!r}")


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return v


def _report_row(doc):
    rep = doc["report"]
    meta = doc.get("meta", {})
    return {
        "instance": meta.get("instance", 0),
        "R": meta.get("R", ""), "M": meta.get("M", ""),
        "delta_mu": meta.get("delta_mu", ""),
        "approach": rep.get("approach", ""),
        "C1": rep.get("c1"), "C2": rep.get("c2"), "C3": rep.get("c3"),
        "C4": rep.get("c4"), "shed_total": rep.get("shed_total"),
        "loss_total": rep.get("loss_total"),
        "dqloss_total": rep.get("dqloss_total"),
        "iterations": rep.get("iterations"), "gap": rep.get("gap"),
        "wall_ms": rep.get("wall_ms"),
    }


def read_results(data) -> ResultBundle:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return ResultBundle.from_dict(json.loads(data))


def report_to_dict(rep) -> dict:
    doc = asdict(rep)
    doc["per_bus_dqloss"] = {str(k): v for k, v in doc["per_bus_dqloss"].items()}
    return doc
