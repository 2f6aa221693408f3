"""Evaluation metrics: success ratio, lower-energy discovery ratio, reduced
search-space ratio and cross-trial consistency.

All ratios are percentages.  Threshold comparisons carry a 1e-9 eV slack so
values printed to three decimals compare the way they read.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

from .errors import SchemaError

SLACK = 1e-9
METHODS = ("agent", "algorithm")
SR_MODES = ("strict", "lenient")

TABLE1_COLUMNS = ("system_id", "adsorbate", "catalyst", "agent_mean", "agent_std", "algo_mean",
                  "algo_std", "agent_ninit_mean", "algo_ninit")
TABLES1_COLUMNS = ("system_id", "run", "agent_e", "agent_ninit", "algo_mean", "algo_std",
                   "algo_ninit")
RECORD_COLUMNS = ("system_id", "method", "run", "e_min", "n_init")


@dataclass(frozen=True)
class TrialRecord:
    system_id: int
    method: str
    run: int
    e_min: float
    n_init: float

    def __post_init__(self):
        if self.method not in METHODS:
            raise SchemaError(f"method must be one of {METHODS}, got {self.method!r}")
        if not math.isfinite(self.e_min):
            raise SchemaError(f"e_min must be finite for system {self.system_id}")
        if not self.n_init >= 1:
            raise SchemaError(f"n_init must be >= 1 for system {self.system_id}")


@dataclass(frozen=True)
class EvalParams:
    epsilon: float = 0.1
    n_systems: int = 20
    sr_mode: str = "lenient"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.sr_mode not in SR_MODES:
            raise ValueError(f"sr_mode must be one of {SR_MODES}")


@dataclass(frozen=True)
class SolutionTriple:
    system_id: int
    surface: tuple
    adsorbate: tuple

    def __post_init__(self):
        surface = tuple(tuple(x) for x in self.surface)
        adsorbate = tuple(tuple(x) for x in self.adsorbate)
        if len(surface) != 3 or len(adsorbate) != 3:
            raise SchemaError(f"system {self.system_id}: exactly 3 runs are required")
        object.__setattr__(self, "surface", surface)
        object.__setattr__(self, "adsorbate", adsorbate)


# --- energy metrics ----------------------------------------------------------

def _algorithm_means(records):
    acc = defaultdict(list)
    for r in records:
        if r.method == "algorithm":
            acc[r.system_id].append(r.e_min)
    return {k: sum(v) / len(v) for k, v in acc.items()}


def _agent_pairs(records):
    """(agent record, E_algorithm) for every agent record."""
    e_alg = _algorithm_means(records)
    out = []
    for r in records:
        if r.method != "agent":
            continue
        if r.system_id not in e_alg:
            raise SchemaError(f"system {r.system_id} has no algorithm records")
        out.append((r, e_alg[r.system_id]))
    if not out:
        raise SchemaError("no agent records")
    return out


def success_flags(records, p: EvalParams = EvalParams(), mode=None):
    mode = mode or p.sr_mode
    flags = []
    for r, e_alg in _agent_pairs(records):
        if mode == "strict":
            ok = abs(r.e_min - e_alg) <= p.epsilon + SLACK
        elif mode == "lenient":
            ok = r.e_min <= e_alg + p.epsilon + SLACK
        else:
            raise ValueError(f"unknown SR mode {mode!r}")
        flags.append(((r.system_id, r.run), ok))
    return flags


def success_ratio(records, p: EvalParams = EvalParams(), mode=None) -> float:
    flags = success_flags(records, p, mode)
    return 100.0 * sum(ok for _, ok in flags) / len(flags)


def ledr_flags(records, p: EvalParams = EvalParams()):
    return [((r.system_id, r.run), r.e_min <= e_alg - p.epsilon + SLACK)
            for r, e_alg in _agent_pairs(records)]


def ledr(records, p: EvalParams = EvalParams()) -> float:
    flags = ledr_flags(records, p)
    return 100.0 * sum(ok for _, ok in flags) / len(flags)


@dataclass(frozen=True)
class RsrReport:
    pairs: dict
    per_system: dict
    mean: float
    minimum: float
    maximum: float
    argmin: tuple
    argmax: tuple

    def as_dict(self):
        return {
            "pairs": [{"system_id": s, "run": r, "rsr": v} for (s, r), v in self.pairs.items()],
            "per_system": {str(k): v for k, v in self.per_system.items()},
            "mean": self.mean, "min": self.minimum, "max": self.maximum,
            "argmin": list(self.argmin), "argmax": list(self.argmax),
        }


def rsr(records) -> RsrReport:
    """N_init,agent / N_init,algorithm x 100 for every (system, run) pair."""
    alg = defaultdict(dict)
    for r in records:
        if r.method == "algorithm":
            alg[r.system_id][r.run] = r.n_init
    pairs = {}
    for r in records:
        if r.method != "agent":
            continue
        runs = alg.get(r.system_id)
        if not runs:
            raise SchemaError(f"system {r.system_id} has no algorithm records")
        n_alg = runs.get(r.run, sum(runs.values()) / len(runs))
        if n_alg <= 0:
            raise SchemaError(f"system {r.system_id}: algorithm count is zero")
        pairs[(r.system_id, r.run)] = 100.0 * r.n_init / n_alg
    if not pairs:
        raise SchemaError("no agent records")
    pairs = dict(sorted(pairs.items()))
    by_sys = defaultdict(list)
    for (s, _), v in pairs.items():
        by_sys[s].append(v)
    per_system = {s: sum(v) / len(v) for s, v in sorted(by_sys.items())}
    vals = list(pairs.values())
    kmin = min(pairs, key=lambda k: (pairs[k], k))
    kmax = max(pairs, key=lambda k: (pairs[k], [-x for x in k]))
    return RsrReport(pairs, per_system, sum(vals) / len(vals), pairs[kmin], pairs[kmax],
                     kmin, kmax)


# --- consistency -------------------------------------------------------------

def _pair_consistent(a, b):
    a, b = list(a), list(b)
    if a == b:
        return True
    if abs(len(a) - len(b)) > 1:
        return False
    if len(a) == len(b):
        # both orderings of the pair are visited, so equal lengths need equal sets
        return set(a) == set(b)
    shorter, longer = (a, b) if len(a) < len(b) else (b, a)
    return set(shorter) <= set(longer)


def check_consistency(arrays) -> bool:
    """True when every pair of the three arrays agrees under the subset rule."""
    arrays = [list(x) for x in arrays]
    if len(arrays) != 3:
        raise ValueError("check_consistency needs exactly three arrays")
    return all(_pair_consistent(a, b) for a, b in combinations(arrays, 2))


@dataclass(frozen=True)
class ConsistencyReport:
    ratio: float
    surface_ratio: float
    adsorbate_ratio: float
    per_system: dict

    def as_dict(self):
        return {"ratio": self.ratio, "surface_ratio": self.surface_ratio,
                "adsorbate_ratio": self.adsorbate_ratio,
                "per_system": {str(k): v for k, v in self.per_system.items()}}


def consistency_ratio(triples) -> ConsistencyReport:
    triples = list(triples)
    if not triples:
        raise SchemaError("no solution triples")
    per = {}
    for t in triples:
        s_ok = check_consistency(t.surface)
        a_ok = check_consistency(t.adsorbate)
        per[t.system_id] = {"surface": s_ok, "adsorbate": a_ok, "consistent": s_ok and a_ok}
    n = len(triples)
    return ConsistencyReport(
        100.0 * sum(v["consistent"] for v in per.values()) / n,
        100.0 * sum(v["surface"] for v in per.values()) / n,
        100.0 * sum(v["adsorbate"] for v in per.values()) / n,
        dict(sorted(per.items())),
    )


# --- loading -----------------------------------------------------------------

def _num(row, key, lineno, kind=float):
    try:
        v = kind(row[key])
    except (KeyError, TypeError, ValueError):
        raise SchemaError(f"column {key!r}: bad value {row.get(key)!r}", lineno) from None
    if kind is float and not math.isfinite(v):
        raise SchemaError(f"column {key!r}: non-finite value", lineno)
    return v


def _records_from_rows(header, rows):
    out = []
    cols = set(header)
    if set(TABLE1_COLUMNS) <= cols:
        for lineno, row in rows:
            sid = _num(row, "system_id", lineno, int)
            out.append(TrialRecord(sid, "agent", 0, _num(row, "agent_mean", lineno),
                                   _num(row, "agent_ninit_mean", lineno)))
            out.append(TrialRecord(sid, "algorithm", 0, _num(row, "algo_mean", lineno),
                                   _num(row, "algo_ninit", lineno)))
        return out, "table1"
    if set(TABLES1_COLUMNS) <= cols:
        seen = set()
        for lineno, row in rows:
            sid = _num(row, "system_id", lineno, int)
            run = _num(row, "run", lineno, int)
            out.append(TrialRecord(sid, "agent", run, _num(row, "agent_e", lineno),
                                   _num(row, "agent_ninit", lineno)))
            if sid not in seen:
                seen.add(sid)
                out.append(TrialRecord(sid, "algorithm", 0, _num(row, "algo_mean", lineno),
                                       _num(row, "algo_ninit", lineno)))
        return out, "tableS1"
    if set(RECORD_COLUMNS) <= cols:
        for lineno, row in rows:
            out.append(TrialRecord(_num(row, "system_id", lineno, int), str(row["method"]).strip(),
                                   _num(row, "run", lineno, int), _num(row, "e_min", lineno),
                                   _num(row, "n_init", lineno)))
        return out, "records"
    raise SchemaError(
        f"unrecognized columns {sorted(cols)}; expected the table1, tableS1 or record schema", 1)


def parse_records(text: str):
    """Records from CSV or JSON text; returns (records, schema name)."""
    if not text.strip():
        raise SchemaError("empty records file", 1)
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}", exc.lineno) from None
        if isinstance(doc, dict):
            doc = doc.get("records", [])
        if not isinstance(doc, list) or not doc:
            raise SchemaError("JSON records must be a non-empty list", 1)
        header = set()
        for d in doc:
            if not isinstance(d, dict):
                raise SchemaError("each JSON record must be an object", 1)
            header |= set(d)
        rows = [(i + 1, d) for i, d in enumerate(doc)]
        try:
            records, schema = _records_from_rows(header, rows)
        except SchemaError as exc:
            raise SchemaError(f"record {exc.row}: {exc}" if exc.row else str(exc), exc.row) from None
        return records, schema
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames:
        raise SchemaError("missing header row", 1)
    header = [h.strip() for h in reader.fieldnames]
    rows = []
    for i, row in enumerate(reader):
        row = {(k or "").strip(): (v.strip() if isinstance(v, str) else v) for k, v in row.items()}
        rows.append((i + 2, row))
    if not rows:
        raise SchemaError("no data rows", 2)
    return _records_from_rows(header, rows)


def load_records(path):
    return parse_records(Path(path).read_text())


def load_solutions(path):
    """Solution triples from JSON: [{"system_id", "runs": [{"surface", "adsorbate"} x 3]}]."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        doc = doc.get("systems", [])
    out = []
    for k, entry in enumerate(doc):
        runs = entry.get("runs", [])
        if len(runs) != 3:
            raise SchemaError(f"system {entry.get('system_id')}: expected 3 runs, got {len(runs)}",
                              k + 1)
        out.append(SolutionTriple(int(entry["system_id"]),
                                  [r["surface"] for r in runs], [r["adsorbate"] for r in runs]))
    return out


# --- report ------------------------------------------------------------------

@dataclass
class EvalReport:
    schema: str
    n_records: int
    sr_strict: float
    sr_lenient: float
    ledr: float
    rsr: RsrReport
    consistency: ConsistencyReport | None = None
    params: EvalParams = field(default_factory=EvalParams)

    def as_dict(self):
        out = {
            "schema": self.schema, "n_records": self.n_records,
            "epsilon": self.params.epsilon,
            "sr": {"strict": self.sr_strict, "lenient": self.sr_lenient,
                   "default_mode": self.params.sr_mode},
            "ledr": self.ledr, "rsr": self.rsr.as_dict(),
        }
        if self.consistency is not None:
            out["consistency"] = self.consistency.as_dict()
        return out

    def to_text(self):
        lines = [
            f"records: {self.n_records} ({self.schema}), epsilon = {self.params.epsilon} eV",
            f"SR (lenient)   {self.sr_lenient:6.2f} %",
            f"SR (strict)    {self.sr_strict:6.2f} %",
            f"LEDR           {self.ledr:6.2f} %",
            f"RSR mean       {self.rsr.mean:6.2f} %",
            f"RSR min        {self.rsr.minimum:6.2f} %  (system {self.rsr.argmin[0]}, run {self.rsr.argmin[1]})",
            f"RSR max        {self.rsr.maximum:6.2f} %  (system {self.rsr.argmax[0]}, run {self.rsr.argmax[1]})",
        ]
        if self.consistency is not None:
            c = self.consistency
            lines += [f"Consistency    {c.ratio:6.2f} %  (surface {c.surface_ratio:.2f} %, "
                      f"adsorbate {c.adsorbate_ratio:.2f} %)"]
        lines.append("")
        lines.append(" system  run      RSR %")
        for (s, r), v in self.rsr.pairs.items():
            lines.append(f" {s:6d} {r:4d} {v:10.2f}")
        return "\n".join(lines) + "\n"


def evaluate(records, params: EvalParams = EvalParams(), triples=None, schema="records"):
    records = list(records)
    return EvalReport(
        schema, len(records),
        success_ratio(records, params, "strict"),
        success_ratio(records, params, "lenient"),
        ledr(records, params),
        rsr(records),
        consistency_ratio(triples) if triples is not None else None,
        params,
    )


def evaluate_file(path, params: EvalParams = EvalParams(), solutions=None):
    records, schema = load_records(path)
    triples = load_solutions(solutions) if solutions else None
    return evaluate(records, params, triples, schema)
