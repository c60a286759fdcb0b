"""Report serialisation: JSON, flat CSV and a markdown table per unit.

The CSV carries one ``unit`` row, one ``U`` (noise) row and one ``CE`` row
per counterfactual. Report-level metadata travels in a leading ``#`` comment
line holding JSON, so JSON -> CSV -> JSON is lossless. Floats are written
with ``repr`` (shortest exact round-trip form).
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .harness import CeRecord, ExperimentReport, UnitRecord

__all__ = ["to_dict", "from_dict", "to_json", "to_csv", "to_markdown", "parse", "emit_report", "read_report"]

FORMATS = ("markdown", "csv", "json")
_SUFFIX = {"markdown": ".md", "csv": ".csv", "json": ".json"}


def _summary(report: ExperimentReport) -> dict:
    return {
        "conflict_count": report.conflict_count,
        "total_ces": report.total_ces,
        "non_converged": report.non_converged,
        "conflict_rate": report.conflict_rate,
    }


def to_dict(report: ExperimentReport) -> dict:
    return {
        "structure": report.structure,
        "features": list(report.features),
        "outcome": report.outcome,
        "threshold": report.threshold,
        "config": report.config,
        **_summary(report),
        "units": [
            {
                "unit_id": u.unit_id,
                "values": u.values,
                "y": u.y,
                "class": u.cls,
                "noise": u.noise,
                "ces": [
                    {
                        "ce_id": c.ce_id,
                        "values": c.values,
                        "predicted_class": c.predicted_class,
                        "predicted_proba": c.predicted_proba,
                        "objective": c.objective,
                        "converged": c.converged,
                        "interventions": list(c.interventions),
                        "pcm_y": c.pcm_y,
                        "pcm_class": c.pcm_class,
                        "conflict": c.conflict,
                    }
                    for c in u.ces
                ],
            }
            for u in report.units
        ],
    }


def from_dict(data: dict) -> ExperimentReport:
    units = []
    for u in data["units"]:
        ces = [
            CeRecord(
                ce_id=c["ce_id"],
                values=c["values"],
                predicted_class=c["predicted_class"],
                predicted_proba=c["predicted_proba"],
                objective=c["objective"],
                converged=c["converged"],
                interventions=list(c["interventions"]),
                pcm_y=c["pcm_y"],
                pcm_class=c["pcm_class"],
            )
            for c in u["ces"]
        ]
        units.append(UnitRecord(u["unit_id"], u["values"], u["y"], u["class"], u["noise"], ces))
    return ExperimentReport(
        structure=data["structure"],
        features=list(data["features"]),
        outcome=data["outcome"],
        threshold=data["threshold"],
        config=data["config"],
        units=units,
    )


def to_json(report: ExperimentReport) -> str:
    return json.dumps(to_dict(report), indent=2, sort_keys=True) + "\n"


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _columns(report: ExperimentReport) -> list[str]:
    return [
        "row_type",
        "unit_id",
        "ce_id",
        *report.features,
        report.outcome,
        "class",
        "predicted_proba",
        "objective",
        "converged",
        "changed",
        "pcm_y",
        "pcm_class",
        "conflict",
    ]


def to_csv(report: ExperimentReport) -> str:
    meta = {k: v for k, v in to_dict(report).items() if k != "units"}
    buf = io.StringIO()
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(_columns(report))
    feats = report.features
    for u in report.units:
        w.writerow(["unit", u.unit_id, "", *(_num(u.values[f]) for f in feats), _num(u.y), u.cls, *[""] * 7])
        w.writerow(
            ["U", u.unit_id, "", *(_num(u.noise[f]) for f in feats), _num(u.noise[report.outcome]), *[""] * 8]
        )
        for c in u.ces:
            w.writerow(
                [
                    "CE",
                    u.unit_id,
                    c.ce_id,
                    *(_num(c.values[f]) for f in feats),
                    "",
                    c.predicted_class,
                    _num(c.predicted_proba),
                    _num(c.objective),
                    _num(c.converged),
                    ";".join(c.interventions),
                    _num(c.pcm_y),
                    c.pcm_class,
                    _num(c.conflict),
                ]
            )
    return buf.getvalue()


def _from_csv(text: str) -> ExperimentReport:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("report CSV must start with a '# {...}' metadata line")
    meta = json.loads(lines[0][2:])
    feats, outcome = meta["features"], meta["outcome"]
    rows = list(csv.DictReader(lines[1:]))
    units: list[UnitRecord] = []
    for r in rows:
        kind, uid = r["row_type"], int(r["unit_id"])
        if kind == "unit":
            vals = {f: float(r[f]) for f in feats}
            units.append(UnitRecord(uid, vals, float(r[outcome]), int(r["class"]), {}))
        elif kind == "U":
            noise = {f: float(r[f]) for f in feats}
            noise[outcome] = float(r[outcome])
            units[-1].noise = noise
        elif kind == "CE":
            units[-1].ces.append(
                CeRecord(
                    ce_id=int(r["ce_id"]),
                    values={f: float(r[f]) for f in feats},
                    predicted_class=int(r["class"]),
                    predicted_proba=float(r["predicted_proba"]),
                    objective=float(r["objective"]),
                    converged=r["converged"] == "1",
                    interventions=[s for s in r["changed"].split(";") if s],
                    pcm_y=float(r["pcm_y"]),
                    pcm_class=int(r["pcm_class"]),
                )
            )
        else:
            raise ValueError(f"unknown row_type {kind!r}")
    return ExperimentReport(
        structure=meta["structure"],
        features=list(feats),
        outcome=outcome,
        threshold=meta["threshold"],
        config=meta["config"],
        units=units,
    )


def _cell(v: float, bold: bool = False) -> str:
    text = f"{v:.2f}" if abs(v - round(v)) > 1e-9 else f"{v:.0f}"
    return f"**{text}**" if bold else text


def to_markdown(report: ExperimentReport) -> str:
    feats = report.features
    s = _summary(report)
    rate = "n/a" if s["conflict_rate"] is None else f"{s['conflict_rate']:.3f}"
    threshold = "n/a" if report.threshold is None else f"{report.threshold:.4f}"
    out = [
        f"# Results for {report.structure} causal structure",
        "",
        f"- threshold (mean {report.outcome}): {threshold}",
        f"- conflicts: {s['conflict_count']} / {s['total_ces']} converged CEs (rate {rate})",
        f"- non-converged CEs: {s['non_converged']}",
        "",
        "Changed features are in bold; conflicting rows are flagged `CONFLICT`.",
        "",
        "| Item | " + " | ".join(feats) + f" | {report.outcome} | class | class (PCM) | {report.outcome} (PCM) | flag |",
        "|" + "---|" * (len(feats) + 6),
    ]
    for u in report.units:
        out.append(
            f"| Unit {u.unit_id} | " + " | ".join(_cell(u.values[f]) for f in feats)
            + f" | {_cell(u.y)} | {u.cls} | - | - | |"
        )
        out.append(
            "| U | " + " | ".join(_cell(u.noise[f]) for f in feats)
            + f" | {_cell(u.noise[report.outcome])} | - | - | - | |"
        )
        for c in u.ces:
            flag = "CONFLICT" if c.conflict else ""
            if not c.converged:
                flag = (flag + " not-converged").strip()
            cells = " | ".join(_cell(c.values[f], f in c.interventions) for f in feats)
            out.append(
                f"| CE{c.ce_id} | {cells} | - | {c.predicted_class} | {c.pcm_class} | {_cell(c.pcm_y)} | {flag} |"
            )
    return "\n".join(out) + "\n"


def parse(text: str, fmt: str) -> ExperimentReport:
    if fmt == "json":
        return from_dict(json.loads(text))
    if fmt == "csv":
        return _from_csv(text)
    raise ValueError(f"cannot parse report format {fmt!r}")


def render(report: ExperimentReport, fmt: str) -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return to_csv(report)
    if fmt == "markdown":
        return to_markdown(report)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report: ExperimentReport, fmt: str, path) -> Path:
    """Write ``report`` in ``fmt``; ``path`` may be a directory."""
    path = Path(path)
    if path.is_dir():
        path = path / f"report_{report.structure}{_SUFFIX[fmt]}"
    path.write_text(render(report, fmt))
    return path


def read_report(path) -> ExperimentReport:
    path = Path(path)
    fmt = "csv" if path.suffix == ".csv" else "json"
    return parse(path.read_text(), fmt)
