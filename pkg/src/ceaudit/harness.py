"""End-to-end audit: sample -> fit -> explain -> validate, plus aggregation."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .ce_search import (
    Counterfactual,
    SearchConfig,
    dice_generate,
    mad_of,
    make_request,
    wachter_generate,
)
from .classifier import LogisticModel, TrainConfig, fit
from .pcm import DEFAULT_EPS, abduct, validate_ce
from .sampler import Dataset, sample_dataset
from .scm import Scm, StructureKind, load_scm, preset

__all__ = [
    "ExperimentConfig",
    "CeRecord",
    "UnitRecord",
    "ExperimentReport",
    "SCALES",
    "load_structure",
    "unit_seed",
    "select_units",
    "run_experiment",
    "conflict_summary",
]

log = logging.getLogger(__name__)

SCALES = {
    "small": {"n_samples": 1000, "n_units": 5, "k_per_unit": 2},
    "large": {"n_samples": 1000, "n_units": 500, "k_per_unit": 2},
}


@dataclass
class ExperimentConfig:
    structure: str = "chain"
    n_samples: int = 1000
    n_units: int = 5
    k_per_unit: int = 2
    method: str = "dice"
    seed: int = 0
    lam: float = 0.5
    lambda1: float = 0.5
    lambda2: float = 1.0
    eps: float = DEFAULT_EPS
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchConfig = field(default_factory=SearchConfig)
    output_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.train, Mapping):
            self.train = TrainConfig(**self.train)
        if isinstance(self.search, Mapping):
            self.search = SearchConfig(**self.search)
        if self.method not in ("dice", "wachter"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "wachter" and self.k_per_unit != 1:
            raise ValueError("wachter produces one CE per unit; set k_per_unit = 1")
        if self.k_per_unit < 1:
            raise ValueError("k_per_unit must be >= 1")
        if self.n_units < 0 or self.n_units > self.n_samples:
            raise ValueError("need 0 <= n_units <= n_samples")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @classmethod
    def from_dict(cls, data: Mapping) -> ExperimentConfig:
        data = dict(data)
        scale = data.pop("scale", None)
        if scale is not None:
            if scale not in SCALES:
                raise ValueError(f"unknown scale {scale!r}")
            data = {**SCALES[scale], **data}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = asdict(self)
        # run-location and scheduling knobs do not affect results
        out.pop("output_dir")
        out.pop("workers")
        return out


@dataclass
class CeRecord:
    ce_id: int
    values: dict[str, float]
    predicted_class: int
    predicted_proba: float
    objective: float
    converged: bool
    interventions: list[str]
    pcm_y: float
    pcm_class: int

    @property
    def conflict(self) -> bool:
        return self.pcm_class != self.predicted_class


@dataclass
class UnitRecord:
    unit_id: int
    values: dict[str, float]
    y: float
    cls: int
    noise: dict[str, float]
    ces: list[CeRecord] = field(default_factory=list)


@dataclass
class ExperimentReport:
    structure: str
    features: list[str]
    outcome: str
    threshold: float | None
    config: dict
    units: list[UnitRecord] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict, compare=False)

    def ce_rows(self) -> Iterable[tuple[UnitRecord, CeRecord]]:
        for u in self.units:
            for c in u.ces:
                yield u, c

    @property
    def total_ces(self) -> int:
        """Converged CEs only; these form the conflict-rate denominator."""
        return sum(c.converged for _, c in self.ce_rows())

    @property
    def non_converged(self) -> int:
        return sum(not c.converged for _, c in self.ce_rows())

    @property
    def conflict_count(self) -> int:
        return sum(c.converged and c.conflict for _, c in self.ce_rows())

    @property
    def conflict_rate(self) -> float | None:
        total = self.total_ces
        return self.conflict_count / total if total else None


def load_structure(structure: str) -> tuple[str, Scm]:
    """Preset name or path to an SCM JSON file -> (label, Scm)."""
    try:
        kind = StructureKind(structure)
    except ValueError:
        path = Path(structure)
        if not path.exists():
            raise ValueError(f"{structure!r} is neither a preset nor an SCM file") from None
        return path.stem, load_scm(path)
    return kind.value, preset(kind)


def unit_seed(seed: int, unit_index: int) -> int:
    return int(np.random.SeedSequence([seed, unit_index]).generate_state(1)[0])


def select_units(model: LogisticModel, dataset: Dataset, n_units: int) -> list[int]:
    """First ``n_units`` rows whose factual class the classifier reproduces.

    A misclassified unit already sits on the desired side of the decision
    boundary, so there is nothing for a counterfactual to flip.
    """
    predicted = (model.proba(dataset.X) >= 0.5).astype(int)
    hits = np.flatnonzero(predicted == dataset.classes)
    if len(hits) < n_units:
        raise ValueError(f"only {len(hits)} correctly classified units, {n_units} requested")
    return [int(i) for i in hits[:n_units]]


def _explain_unit(args) -> list[Counterfactual]:
    model, dataset, mad, cfg, i = args
    request = make_request(
        dataset.unit(i),
        dataset,
        k=cfg.k_per_unit,
        lam=cfg.lam,
        lambda1=cfg.lambda1,
        lambda2=cfg.lambda2,
    )
    seed = unit_seed(cfg.seed, i)
    if cfg.method == "wachter":
        return [wachter_generate(model, request, mad, seed, cfg.search)]
    return dice_generate(model, request, mad, seed, cfg.search)


def explain_units(
    model: LogisticModel,
    dataset: Dataset,
    cfg: ExperimentConfig,
    indices: Iterable[int],
) -> list[list[Counterfactual]]:
    """CEs for each unit index; results are ordered by index whatever ``workers`` is."""
    mad = mad_of(dataset)
    jobs = [(model, dataset, mad, cfg, i) for i in indices]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_explain_unit, jobs, chunksize=8))
    return [_explain_unit(job) for job in jobs]


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run the whole audit for one structure.

    Raises:
        DegenerateLabelsError: if the sampled labels contain a single class.
    """
    label, scm = load_structure(cfg.structure)
    timings = {}
    t0 = time.perf_counter()
    dataset = sample_dataset(scm, cfg.n_samples, cfg.seed)
    timings["sample"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    model = fit(dataset, cfg.train)
    timings["fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    indices = select_units(model, dataset, cfg.n_units)
    all_ces = explain_units(model, dataset, cfg, indices)
    timings["explain"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    units = []
    for i, ces in zip(indices, all_ces):
        unit = dataset.unit(i)
        rec = UnitRecord(i, dict(unit.values), unit.y, unit.cls, abduct(scm, unit))
        for j, ce in enumerate(ces):
            v = validate_ce(scm, unit, ce, dataset.threshold, cfg.eps)
            rec.ces.append(
                CeRecord(
                    ce_id=j,
                    values=dict(ce.values),
                    predicted_class=ce.predicted_class,
                    predicted_proba=ce.predicted_proba,
                    objective=ce.objective,
                    converged=ce.converged,
                    interventions=sorted(v.interventions, key=dataset.features.index),
                    pcm_y=v.pcm_y,
                    pcm_class=v.pcm_class,
                )
            )
        units.append(rec)
    timings["validate"] = time.perf_counter() - t0

    report = ExperimentReport(
        structure=label,
        features=list(dataset.features),
        outcome=dataset.outcome,
        threshold=dataset.threshold,
        config=cfg.to_dict(),
        units=units,
        timings=timings,
    )
    log.info(
        "%s: %d/%d conflicts, %d non-converged, timings %s",
        label,
        report.conflict_count,
        report.total_ces,
        report.non_converged,
        {k: round(v, 3) for k, v in timings.items()},
    )
    return report


def conflict_summary(reports: Iterable[ExperimentReport]) -> dict:
    """Per-structure and pooled conflict counts and rates (None when empty)."""
    per: dict[str, dict] = {}
    for r in reports:
        entry = per.setdefault(r.structure, {"conflicts": 0, "total": 0, "non_converged": 0})
        entry["conflicts"] += r.conflict_count
        entry["total"] += r.total_ces
        entry["non_converged"] += r.non_converged
    pooled = {"conflicts": 0, "total": 0, "non_converged": 0}
    for entry in per.values():
        entry["rate"] = entry["conflicts"] / entry["total"] if entry["total"] else None
        for key in ("conflicts", "total", "non_converged"):
            pooled[key] += entry[key]
    pooled["rate"] = pooled["conflicts"] / pooled["total"] if pooled["total"] else None
    return {"per_structure": per, "pooled": pooled}
