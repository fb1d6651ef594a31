"""Deterministic report serialization (JSON and CSV)."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any

from . import __version__

BASE_COLUMNS = (
    "form", "p", "n", "phi_exponent", "r",
    "s_re", "s_im", "value_re", "value_im", "tail_estimate", "flags",
)


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    out = "%.17g" % x
    if out == "-0":
        out = "0"
    return out


def dumps(obj: Any, indent: int = 0, step: int = 2) -> str:
    """JSON with fixed key order (as given) and 17-significant-digit floats."""
    pad = " " * (indent + step)
    end = " " * indent
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, complex):
        return dumps([obj.real, obj.imag], indent, step)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + step, step)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, step) for v in obj) + "]"
        items = [pad + dumps(v, indent + step, step) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "item"):  # numpy scalars
        return dumps(obj.item(), indent, step)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def base_row(form, p, n, phi_exponent, r, s, value, tail, flags) -> dict:
    s = complex(s) if s is not None else None
    value = complex(value) if value is not None else None
    return {
        "form": form,
        "p": p,
        "n": n,
        "phi_exponent": phi_exponent,
        "r": r,
        "s_re": None if s is None else s.real,
        "s_im": None if s is None else s.imag,
        "value_re": None if value is None else value.real,
        "value_im": None if value is None else value.imag,
        "tail_estimate": None if tail is None else float(tail),
        "flags": list(flags),
    }


@dataclass
class ReportEnvelope:
    command: str
    config: dict
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    timings: dict | None = None
    columns: tuple[str, ...] = BASE_COLUMNS

    @property
    def flags(self) -> list[dict]:
        out = []
        for i, row in enumerate(self.rows):
            for reason in row.get("flags", []):
                out.append({"row": i, "reason": reason})
        return out

    def to_dict(self) -> dict:
        d = {
            "artifact": "heckelab",
            "version": __version__,
            "command": self.command,
            "config": self.config,
            "rows": self.rows,
            "summary": self.summary,
            "flags": self.flags,
        }
        if self.timings is not None:
            d["timings"] = self.timings
        return d

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_csv_cell(row.get(c)) for c in self.columns])
        return buf.getvalue()


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return fmt_float(v).strip('"')
    if isinstance(v, (list, tuple)):
        return ";".join(str(x) for x in v)
    return str(v)
