"""JSON / CSV reading and writing for grid functions, instances and reports.

Floats are written with ``repr`` (shortest round-trip form) so a value read
back is bit-identical to the one written.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .generators import Instance
from .geometry import Domain, GridFunction
from .report import SCHEMA


def grid_to_dict(f: GridFunction, **meta) -> dict:
    d = f.domain
    out = {"schema": SCHEMA, "dim": d.dim, "box_exp": d.box_exp, "cell_exp": d.cell_exp}
    out.update(meta)
    out["values"] = [float(x) for x in f.flat]
    return out


def grid_from_dict(obj: dict) -> GridFunction:
    try:
        d = Domain(int(obj["dim"]), int(obj["box_exp"]), int(obj["cell_exp"]))
        vals = obj["values"]
    except KeyError as e:
        raise ValueError(f"grid function is missing {e.args[0]!r}") from None
    if not isinstance(vals, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                             for x in vals):
        raise ValueError("values must be a list of numbers")
    return GridFunction(d, np.array(vals, dtype=np.float64))


def grid_from_csv(text: str) -> GridFunction:
    """One value per line after a ``# dim,K,m`` header (``m`` is minus the cell exponent)."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("CSV grid needs a '# dim,K,m' header")
    head = lines[0].lstrip("#").strip()
    if head.replace(" ", "") == "dim,K,m":
        # header names on the first line, numbers on the second
        head, lines = lines[1].lstrip("#").strip(), lines[1:]
    try:
        dim, K, m = (int(x) for x in head.split(","))
        vals = np.array([float(x) for x in lines[1:]], dtype=np.float64)
    except ValueError:
        raise ValueError("malformed CSV grid function") from None
    return GridFunction(Domain(dim, K, -m), vals)


def read_grid(path) -> GridFunction:
    text = Path(path).read_text()
    if str(path).endswith(".csv") or text.lstrip().startswith("#"):
        return grid_from_csv(text)
    return grid_from_dict(json.loads(text))


def write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)


def write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)


def instance_to_dict(inst: Instance) -> dict:
    return {
        "schema": SCHEMA, "kind": inst.kind, "seed": inst.seed, "r": inst.r,
        "a1_u": inst.a1_u, "a1_vr": inst.a1_vr, "params": inst.params,
        "f": grid_to_dict(inst.f), "u": grid_to_dict(inst.u), "v": grid_to_dict(inst.v),
    }


def instance_from_dict(obj: dict) -> Instance:
    try:
        f, u, v = (grid_from_dict(obj[k]) for k in ("f", "u", "v"))
        if not (f.domain == u.domain == v.domain):
            raise ValueError("f, u and v live on different domains")
        return Instance(str(obj.get("kind", "file")), int(obj.get("seed", 0)), float(obj["r"]), f, u, v,
                        float(obj["a1_u"]), float(obj["a1_vr"]), dict(obj.get("params", {})))
    except KeyError as e:
        raise ValueError(f"instance is missing {e.args[0]!r}") from None


def read_instance(path) -> Instance:
    return instance_from_dict(json.loads(Path(path).read_text()))
