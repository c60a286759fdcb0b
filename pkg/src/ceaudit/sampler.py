"""Ancestral sampling of datasets from an Scm, plus mean-threshold labels.

Randomness: every node owns a counter-based Philox stream derived from
``(seed, node index)``; unit ``i`` always consumes the ``i``-th uniform of
that stream. Any slice of units can therefore be generated on its own and
reproduces the sequential result bit for bit. Gaussian draws use the inverse
normal CDF of that uniform; Bernoulli draws are ``uniform < p``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.special import ndtri

from .scm import Scm, scm_digest, topo_order, validate

__all__ = [
    "Unit",
    "Dataset",
    "label",
    "sample_dataset",
    "node_uniforms",
    "write_dataset",
    "read_dataset",
]


@dataclass(frozen=True)
class Unit:
    """One factual observation: feature values, outcome and class."""

    values: Mapping[str, float]
    y: float
    cls: int
    outcome: str = "y"

    def as_observation(self) -> dict[str, float]:
        out = dict(self.values)
        out[self.outcome] = self.y
        return out


@dataclass
class Dataset:
    features: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    classes: np.ndarray
    threshold: float
    seed: int | None = None
    scm_digest: str | None = None
    outcome: str = "y"

    def __len__(self) -> int:
        return len(self.y)

    def unit(self, i: int) -> Unit:
        values = {f: float(v) for f, v in zip(self.features, self.X[i])}
        return Unit(values, float(self.y[i]), int(self.classes[i]), self.outcome)

    def column(self, name: str) -> np.ndarray:
        if name == self.outcome:
            return self.y
        return self.X[:, self.features.index(name)]


def label(y: float, threshold: float) -> int:
    return int(y >= threshold)


def node_uniforms(seed: int, node_index: int, start: int, stop: int) -> np.ndarray:
    """Uniforms in [0, 1) for units ``start..stop-1`` of one node's stream."""
    bitgen = np.random.Philox(np.random.SeedSequence(seed, spawn_key=(node_index,)))
    # Philox4x64 emits four 64-bit words per counter step.
    blocks, skip = divmod(start, 4)
    bitgen.advance(blocks)
    return np.random.Generator(bitgen).random(stop - start + skip)[skip:]


def _draw_noise(spec, u: np.ndarray) -> np.ndarray:
    if spec.kind == "gaussian":
        # ndtri(0) = -inf; the stream never yields exactly 0 in practice but guard anyway
        u = np.clip(u, np.finfo(float).tiny, None)
        return spec.mu + spec.sigma * ndtri(u)
    return (u < spec.p).astype(float)


def _simulate(scm: Scm, seed: int, start: int, stop: int) -> dict[str, np.ndarray]:
    index = {name: i for i, name in enumerate(scm.names)}
    values: dict[str, np.ndarray] = {}
    for name in topo_order(scm):
        node = scm.node(name)
        eq = node.equation
        if eq.noise_free:
            values[name] = np.full(stop - start, eq.intercept)
            continue
        noise = _draw_noise(node.noise, node_uniforms(seed, index[name], start, stop))
        total = np.full(stop - start, eq.intercept)
        for parent, coeff in eq.parents:
            total = total + coeff * values[parent]
        values[name] = total + noise
    return values


def sample_dataset(scm: Scm, n: int, seed: int, chunk_size: int | None = None) -> Dataset:
    """Draw ``n`` units and label them against the sample mean of ``y``.

    Args:
        scm: generating model; must validate.
        n: number of units, at least 2.
        seed: master seed.
        chunk_size: optional number of units generated per slice. The output
            does not depend on it.
    """
    if n < 2:
        raise ValueError(f"need n >= 2 to form a mean threshold, got {n}")
    problems = validate(scm)
    if problems:
        raise ValueError("invalid SCM: " + "; ".join(problems))

    step = chunk_size or n
    parts = [_simulate(scm, seed, lo, min(lo + step, n)) for lo in range(0, n, step)]
    cols = {name: np.concatenate([p[name] for p in parts]) for name in scm.names}

    features = scm.features
    X = np.column_stack([cols[f] for f in features])
    y = cols[scm.outcome]
    threshold = float(np.mean(y))
    classes = (y >= threshold).astype(int)
    return Dataset(features, X, y, classes, threshold, seed, scm_digest(scm), scm.outcome)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_dataset(ds: Dataset, path) -> Path:
    """Write ``path`` (CSV) plus a ``.json`` sidecar with seed/n/threshold."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.features, ds.outcome, "class"])
        for row, yv, c in zip(ds.X, ds.y, ds.classes):
            w.writerow([*(_fmt(v) for v in row), _fmt(yv), int(c)])
    meta = {
        "seed": ds.seed,
        "n": len(ds),
        "threshold": ds.threshold,
        "scm_digest": ds.scm_digest,
        "features": list(ds.features),
        "outcome": ds.outcome,
    }
    with open(path.with_suffix(".json"), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return path


def read_dataset(path) -> Dataset:
    """Read a dataset CSV; the sidecar JSON is used when present.

    Without a sidecar the threshold is recomputed as the mean of ``y``.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if "class" not in header:
        raise ValueError(f"{path}: missing 'class' column")
    meta = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    outcome = meta.get("outcome", "y")
    features = tuple(h for h in header if h not in (outcome, "class"))
    idx = {h: i for i, h in enumerate(header)}
    data = np.array([[float(r[idx[f]]) for f in features] for r in body]).reshape(len(body), len(features))
    y = np.array([float(r[idx[outcome]]) for r in body])
    classes = np.array([int(r[idx["class"]]) for r in body])
    threshold = float(meta["threshold"]) if "threshold" in meta else float(np.mean(y))
    return Dataset(features, data, y, classes, threshold, meta.get("seed"), meta.get("scm_digest"), outcome)
