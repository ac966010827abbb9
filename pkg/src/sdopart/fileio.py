"""Problem and report file formats.

Both formats are JSON-compatible structured text with every real number
encoded as a decimal string (repr of the double), which round-trips exactly
and is immune to locale and NaN pitfalls.  The writers emit a canonical
layout so that write -> read -> write is byte-identical, and identically
configured runs produce byte-identical report files.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from . import __version__
from .classifier import SingularRecord
from .model import ParametricSDO
from .partition import PartitionReport, Segment
from .symlin import svec_dim

PROBLEM_SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1

#: symmetry mismatch allowed in full-matrix problem files
SYMMETRY_TOL = 1e-12


class FileFormatError(ValueError):
    pass


def _enc(x: float) -> str:
    return repr(float(x))


def _enc_vec(v) -> list[str]:
    return [_enc(x) for x in np.asarray(v, dtype=float).ravel()]


def _dec(s) -> float:
    try:
        return float(s)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"expected a decimal string, got {s!r}") from exc


def _dec_vec(vals, expected_len: int, what: str) -> np.ndarray:
    arr = np.array([_dec(s) for s in vals], dtype=float)
    if arr.size != expected_len:
        raise FileFormatError(f"{what} has length {arr.size}, expected {expected_len}")
    return arr


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


def _matrix_to_entries(m: np.ndarray, upper_only: bool) -> list[str]:
    if upper_only:
        iu = np.triu_indices(m.shape[0])
        return _enc_vec(m[iu])
    return _enc_vec(m)


def _matrix_from_entries(vals, n: int, upper_only: bool, what: str) -> np.ndarray:
    if upper_only:
        arr = _dec_vec(vals, svec_dim(n), what)
        out = np.zeros((n, n))
        iu, ju = np.triu_indices(n)
        out[iu, ju] = arr
        out[ju, iu] = arr
        return out
    arr = _dec_vec(vals, n * n, what).reshape(n, n)
    scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
    if np.abs(arr - arr.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise FileFormatError(f"{what} is not symmetric to {SYMMETRY_TOL}")
    return 0.5 * (arr + arr.T)


def problem_to_dict(prob: ParametricSDO, upper_triangle_only: bool = False) -> dict:
    return {
        "schema_version": PROBLEM_SCHEMA_VERSION,
        "name": prob.name,
        "n": prob.n,
        "m": prob.m,
        "upper_triangle_only": bool(upper_triangle_only),
        "A": [_matrix_to_entries(a, upper_triangle_only) for a in prob.A],
        "b": _enc_vec(prob.b),
        "C": _matrix_to_entries(prob.C, upper_triangle_only),
        "Cbar": _matrix_to_entries(prob.Cbar, upper_triangle_only),
        "domain": [_enc(prob.domain[0]), _enc(prob.domain[1])],
    }


def problem_from_dict(data: dict) -> ParametricSDO:
    try:
        version = data["schema_version"]
        n, m = int(data["n"]), int(data["m"])
        upper = bool(data.get("upper_triangle_only", False))
        a_raw, b_raw = data["A"], data["b"]
        c_raw, cbar_raw = data["C"], data["Cbar"]
        dom_raw = data["domain"]
    except KeyError as exc:
        raise FileFormatError(f"problem file is missing field {exc}") from exc
    if version != PROBLEM_SCHEMA_VERSION:
        raise FileFormatError(f"unsupported problem schema version {version}")
    if len(a_raw) != m:
        raise FileFormatError(f"A has {len(a_raw)} matrices, expected m = {m}")
    mats = tuple(_matrix_from_entries(raw, n, upper, f"A[{i}]") for i, raw in enumerate(a_raw))
    return ParametricSDO(
        n=n,
        m=m,
        A=mats,
        b=_dec_vec(b_raw, m, "b"),
        C=_matrix_from_entries(c_raw, n, upper, "C"),
        Cbar=_matrix_from_entries(cbar_raw, n, upper, "Cbar"),
        domain=(_dec(dom_raw[0]), _dec(dom_raw[1])),
        name=data.get("name"),
    )


def write_problem(path, prob: ParametricSDO, upper_triangle_only: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(problem_to_dict(prob, upper_triangle_only)))


def read_problem(path) -> ParametricSDO:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------


def _ranks_or_none(ranks) -> list[int] | None:
    return None if ranks is None else [int(ranks[0]), int(ranks[1])]


def _segment_to_dict(seg: Segment) -> dict:
    return {
        "kind": seg.kind,
        "lo": _enc(seg.lo),
        "hi": _enc(seg.hi),
        "ranks": _ranks_or_none(seg.ranks),
    }


def _evidence_to_dict(evidence: dict) -> dict:
    out = {}
    for key in sorted(evidence):
        val = evidence[key]
        if isinstance(val, (bool, int, str)) or val is None:
            out[key] = val
        elif isinstance(val, float):
            out[key] = _enc(val)
        elif key == "rank_sweep":
            out[key] = [_ranks_or_none(r) for r in val]
        elif isinstance(val, tuple):
            out[key] = _ranks_or_none(val)
        else:
            out[key] = str(val)
    return out


def _record_to_dict(rec: SingularRecord) -> dict:
    return {
        "eps_hat": _enc(rec.eps_hat),
        "classification": rec.classification,
        "left_ranks": _ranks_or_none(rec.left_ranks),
        "right_ranks": _ranks_or_none(rec.right_ranks),
        "v_accum": _enc_vec(rec.v_accum),
        "evidence": _evidence_to_dict(rec.evidence),
    }


def report_to_dict(report: PartitionReport, settings_echo: dict | None = None) -> dict:
    diagnostics = {
        k: v for k, v in sorted(report.diagnostics.items()) if not k.startswith("wall_time")
    }
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "version": __version__,
        "domain": [_enc(report.domain[0]), _enc(report.domain[1])],
        "epsilon_init": _enc(report.eps_init),
        "delta_eps": _enc(report.delta_eps),
        "seed": int(report.seed),
        "settings": settings_echo or {},
        "certified": bool(report.certified),
        "segments": [_segment_to_dict(s) for s in report.segments],
        "transition_points": [_enc(t) for t in report.transition_points],
        "singular_records": [_record_to_dict(r) for r in report.singular_records],
        "diagnostics": diagnostics,
    }


def write_report(path, report_dict: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(report_dict))


def read_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise FileFormatError(f"unsupported report schema version {data.get('schema_version')}")
    return data


# ---------------------------------------------------------------------------
# sample CSV
# ---------------------------------------------------------------------------

SAMPLE_CSV_HEADER = "eps,v,min_eig_X,min_eig_S,jac_min_sv"


def write_samples_csv(path, samples) -> None:
    """Fixed-column CSV of track samples (the quantities plotted per run)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SAMPLE_CSV_HEADER + "\n")
        for s in samples:
            fh.write(
                f"{_enc(s.eps)},{_enc(s.objective)},{_enc(s.min_eig_x)},"
                f"{_enc(s.min_eig_s)},{_enc(s.jac_min_sv)}\n"
            )
