"""Dataset-level metrics and report serialization.

PCA counts samples that are both correctly classified and certified below
a threshold; CPCA is the same with Clopper-Pearson upper limits standing
in for the Chernoff bounds.  Reports carry a full config echo and dataset
digest so every number is attributable to an exact run.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .baselines import CPOutcome
from .core import BoundRecord, CertConfig


def pca(records: list[BoundRecord], epsilon: float) -> float:
    """Fraction of samples with bound < epsilon and a correct clean prediction."""
    if not records:
        raise ValueError("records must be nonempty")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    good = sum(1 for r in records if r.bound < epsilon and r.hit)
    return good / len(records)


def cpca(outcomes: list[CPOutcome], hits: list[bool], epsilon: float) -> float:
    """PCA arithmetic with CP upper limits in place of bounds."""
    if len(outcomes) != len(hits):
        raise ValueError(f"length mismatch: {len(outcomes)} outcomes vs {len(hits)} hits")
    if not outcomes:
        raise ValueError("outcomes must be nonempty")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    good = sum(1 for o, h in zip(outcomes, hits) if o.upper < epsilon and h)
    return good / len(outcomes)


def epsilon_sweep(records: list[BoundRecord], eps_grid) -> list[float]:
    """PCA at each epsilon of an ascending grid; non-decreasing by construction."""
    eps = list(eps_grid)
    if any(e2 <= e1 for e1, e2 in zip(eps, eps[1:])):
        raise ValueError("eps_grid must be strictly ascending")
    return [pca(records, e) for e in eps]


DEFAULT_EPS_GRID = (1e-10, 1e-7, 1e-4)


@dataclass(frozen=True)
class SampleResult:
    sample_id: int
    label: int
    record: BoundRecord
    cp: CPOutcome | None = None


@dataclass(frozen=True)
class CertificationReport:
    config: CertConfig
    transform: dict          # serialized TransformSpec
    dataset: dict            # name, digest, count, num_classes
    samples: list[SampleResult]
    era_value: float | None = None
    eps_grid: tuple[float, ...] = DEFAULT_EPS_GRID

    def __post_init__(self):
        if any(not 0.0 < e < 1.0 for e in self.eps_grid):
            raise ValueError("every epsilon must lie in (0, 1)")
        if self.dataset.get("count") != len(self.samples):
            raise ValueError("sample count inconsistent with dataset section")

    def records(self) -> list[BoundRecord]:
        return [s.record for s in self.samples]

    def curves(self) -> dict:
        out = {"epsilon": list(self.eps_grid),
               "pca": epsilon_sweep(self.records(), self.eps_grid)}
        if all(s.cp is not None for s in self.samples):
            hits = [s.record.hit for s in self.samples]
            out["cpca"] = [cpca([s.cp for s in self.samples], hits, e) for e in self.eps_grid]
        return out


CSV_COLUMNS = ["sample_id", "label", "predicted", "hit", "gap_d", "bound", "cp_upper", "t_argmin"]


def emit_report_csv(report: CertificationReport) -> bytes:
    """One row per sample; floats use their shortest round-tripping form."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for s in report.samples:
        r = s.record
        writer.writerow([
            s.sample_id, s.label, r.predicted, int(r.hit),
            repr(r.gap_d), repr(r.bound),
            repr(s.cp.upper) if s.cp is not None else "",
            repr(r.t_argmin),
        ])
    return buf.getvalue().encode("utf-8")


def parse_report_csv(data: bytes) -> list[dict]:
    rows = []
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    if reader.fieldnames != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
    for row in reader:
        rows.append({
            "sample_id": int(row["sample_id"]),
            "label": int(row["label"]),
            "predicted": int(row["predicted"]),
            "hit": bool(int(row["hit"])),
            "gap_d": float(row["gap_d"]),
            "bound": float(row["bound"]),
            "cp_upper": float(row["cp_upper"]) if row["cp_upper"] else None,
            "t_argmin": float(row["t_argmin"]),
        })
    return rows


def emit_report_json(report: CertificationReport) -> bytes:
    cfg = report.config
    doc = {
        "schema": "cccert-report-1",
        "config": {
            "n_samples": cfg.n_samples,
            "k_repeats": cfg.k_repeats,
            "delta": cfg.delta,
            "t_grid": [float(t) for t in cfg.t_grid],
            "rng_seed": cfg.rng_seed,
        },
        "transform": report.transform,
        "dataset": report.dataset,
        "era": report.era_value,
        "eps_grid": list(report.eps_grid),
        "curves": report.curves(),
        "samples": [
            {
                "sample_id": s.sample_id,
                "label": s.label,
                "predicted": s.record.predicted,
                "hit": s.record.hit,
                "gap_d": s.record.gap_d,
                "bound": s.record.bound,
                "k_bounds": list(s.record.k_bounds),
                "t_argmin": s.record.t_argmin,
                "cv_diag": s.record.cv_diag,
                "cp": None if s.cp is None else {
                    "n_trials": s.cp.n_trials, "n_failures": s.cp.n_failures,
                    "alpha": s.cp.alpha, "upper": s.cp.upper,
                },
            }
            for s in report.samples
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True).encode("utf-8")


def parse_report_json(data: bytes) -> CertificationReport:
    doc = json.loads(data.decode("utf-8"))
    if doc.get("schema") != "cccert-report-1":
        raise ValueError(f"unknown report schema {doc.get('schema')!r}")
    cfg = doc["config"]
    config = CertConfig(n_samples=cfg["n_samples"], k_repeats=cfg["k_repeats"],
                        delta=cfg["delta"], t_grid=np.asarray(cfg["t_grid"]),
                        rng_seed=cfg["rng_seed"])
    samples = []
    for s in doc["samples"]:
        record = BoundRecord(bound=s["bound"], hit=s["hit"], gap_d=s["gap_d"],
                             k_bounds=tuple(s["k_bounds"]), t_argmin=s["t_argmin"],
                             predicted=s["predicted"], cv_diag=s["cv_diag"])
        cp = None
        if s.get("cp") is not None:
            c = s["cp"]
            cp = CPOutcome(c["n_trials"], c["n_failures"], c["alpha"], c["upper"])
        samples.append(SampleResult(s["sample_id"], s["label"], record, cp))
    return CertificationReport(config=config, transform=doc["transform"],
                               dataset=doc["dataset"], samples=samples,
                               era_value=doc.get("era"),
                               eps_grid=tuple(doc["eps_grid"]))


def emit_report(report: CertificationReport, format: str) -> bytes:
    if format == "csv":
        return emit_report_csv(report)
    if format == "json":
        return emit_report_json(report)
    raise ValueError(f"unknown report format {format!r}")


def emit_curve_csv(eps_grid, values, header: tuple[str, str] = ("epsilon", "pca")) -> bytes:
    """Two-column plot data, one row per epsilon."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for e, v in zip(eps_grid, values):
        writer.writerow([repr(float(e)), repr(float(v))])
    return buf.getvalue().encode("utf-8")
