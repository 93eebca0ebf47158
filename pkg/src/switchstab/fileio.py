"""Problem and report files.

A problem file is a JSON object::

    {
      "systems": [{"A": [[...], ...], "B": [...]}, ...],
      "gains": [[...], ...],                      # optional, for check/simulate
      "params": {"eps_c": 1e-4, "eps_d": 1e-4, "multistart": 32, "seed": 0,
                 "tolerances": {"cert_floor": 1e-6, "tau_im": 1e-6}}
    }

Every number is either a plain real or a ``[re, im]`` pair. ``B`` is a list
of entries or an ``n x 1`` nested list.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import StructuralError, SwitchedSystem

PARAM_KEYS = {"eps_c", "eps_d", "multistart", "seed", "horizon", "tolerances"}
TOLERANCE_KEYS = {"cert_floor", "tau_im", "feastol", "rank_tol"}


class ProblemError(ValueError):
    """Malformed problem file; the message names the offending field."""


@dataclass(frozen=True)
class Problem:
    system: SwitchedSystem
    gains: np.ndarray | None = None
    params: dict = field(default_factory=dict)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _entry(x, where: str) -> complex:
    if _is_number(x):
        val = complex(x)
    elif isinstance(x, list) and len(x) == 2 and all(_is_number(t) for t in x):
        val = complex(x[0], x[1])
    else:
        raise ProblemError(f"{where}: expected a number or [re, im], got {json.dumps(x)[:60]}")
    if not (math.isfinite(val.real) and math.isfinite(val.imag)):
        raise ProblemError(f"{where}: non-finite value")
    return val


def _matrix(x, where: str) -> np.ndarray:
    if not isinstance(x, list) or not x:
        raise ProblemError(f"{where}: expected a non-empty list of rows")
    rows = []
    for r, row in enumerate(x):
        if not isinstance(row, list) or not row:
            raise ProblemError(f"{where}[{r}]: expected a non-empty row")
        rows.append([_entry(e, f"{where}[{r}][{c}]") for c, e in enumerate(row)])
    if len({len(r) for r in rows}) != 1:
        raise ProblemError(f"{where}: rows have different lengths")
    return np.array(rows, dtype=complex)


def _column(x, where: str) -> np.ndarray:
    if not isinstance(x, list) or not x:
        raise ProblemError(f"{where}: expected a non-empty list")
    out = []
    for r, e in enumerate(x):
        # a one-element row of an n x 1 matrix
        if isinstance(e, list) and len(e) == 1:
            e = e[0]
        out.append(_entry(e, f"{where}[{r}]"))
    return np.array(out, dtype=complex)


def _number_param(params: dict, key: str, kind, where: str):
    val = params[key]
    if kind is int:
        if not isinstance(val, int) or isinstance(val, bool) or val < 0:
            raise ProblemError(f"{where}.{key}: expected a nonnegative integer")
        return val
    if not _is_number(val) or not math.isfinite(val) or val < 0:
        raise ProblemError(f"{where}.{key}: expected a nonnegative number")
    return float(val)


def problem_from_obj(obj: Any) -> Problem:
    """Build a :class:`Problem` from a decoded JSON object.

    Raises
    ------
    ProblemError
        On any structural defect, with the field path in the message.
    """
    if not isinstance(obj, dict):
        raise ProblemError("top level: expected an object")
    unknown = set(obj) - {"systems", "gains", "params"}
    if unknown:
        raise ProblemError(f"top level: unknown keys {sorted(unknown)}")
    systems = obj.get("systems")
    if not isinstance(systems, list) or not systems:
        raise ProblemError("systems: expected a non-empty list")
    As, Bs = [], []
    for i, s in enumerate(systems):
        where = f"systems[{i}]"
        if not isinstance(s, dict) or set(s) != {"A", "B"}:
            raise ProblemError(f"{where}: expected an object with keys A and B")
        As.append(_matrix(s["A"], f"{where}.A"))
        Bs.append(_column(s["B"], f"{where}.B"))
    try:
        system = SwitchedSystem.from_matrices(As, Bs)
        for m in system.modes:
            if m.n != system.n:
                raise StructuralError(f"mode {m.index} has dimension {m.n}, mode 1 has {system.n}")
    except StructuralError as exc:
        raise ProblemError(f"systems: {exc}") from exc

    gains = None
    if "gains" in obj:
        G = _matrix(obj["gains"], "gains")
        if G.shape != (system.N, system.n):
            raise ProblemError(f"gains: expected shape {(system.N, system.n)}, got {G.shape}")
        gains = G

    params = obj.get("params", {})
    if not isinstance(params, dict):
        raise ProblemError("params: expected an object")
    unknown = set(params) - PARAM_KEYS
    if unknown:
        raise ProblemError(f"params: unknown keys {sorted(unknown)}")
    clean = {}
    for key, kind in (("eps_c", float), ("eps_d", float), ("multistart", int), ("seed", int),
                      ("horizon", int)):
        if key in params:
            clean[key] = _number_param(params, key, kind, "params")
    if "tolerances" in params:
        tol = params["tolerances"]
        if not isinstance(tol, dict) or set(tol) - TOLERANCE_KEYS:
            raise ProblemError(f"params.tolerances: expected an object with keys among {sorted(TOLERANCE_KEYS)}")
        clean["tolerances"] = {k: _number_param(tol, k, float, "params.tolerances") for k in tol}
    return Problem(system, gains, clean)


def parse_problem(text: str) -> Problem:
    """Parse problem-file text; JSON syntax errors report line and column."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return problem_from_obj(obj)


def load_problem(path: str) -> Problem:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemError(f"{path}: {exc.strerror}") from exc
    except UnicodeDecodeError as exc:
        raise ProblemError(f"{path}: not UTF-8 text") from exc
    return parse_problem(text)


def encode(x) -> Any:
    """JSON-ready form: complex entries become ``[re, im]`` unless real.

    Floats are emitted by ``json`` in shortest round-trip form; non-finite
    values become the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
    """
    if isinstance(x, dict):
        return {str(k): encode(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [encode(v) for v in x]
    if isinstance(x, np.ndarray):
        if x.dtype.kind == "c" and not np.any(x.imag):
            x = x.real
        return encode(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        if x.imag == 0:
            return encode(float(x.real))
        return [encode(float(x.real)), encode(float(x.imag))]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def problem_to_obj(problem: Problem) -> dict:
    obj = {"systems": [{"A": encode(m.A), "B": encode(m.b)} for m in problem.system.modes]}
    if problem.gains is not None:
        obj["gains"] = encode(np.asarray(problem.gains))
    if problem.params:
        obj["params"] = encode(problem.params)
    return obj


def dumps(obj) -> str:
    return json.dumps(encode(obj), indent=2, allow_nan=False) + "\n"
