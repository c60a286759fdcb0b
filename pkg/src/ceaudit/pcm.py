"""Abduction, action and prediction on a linear-additive Scm.

Given a factual unit and a candidate counterfactual, :func:`validate_ce`
recovers the unit's exogenous noise, replaces every changed feature's
mechanism by a constant, re-evaluates the model and compares the resulting
class with the one the classifier promised.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Mapping

from .sampler import Unit, label
from .scm import Scm, StructuralEquation, eval_node, topo_order

__all__ = [
    "Verdict",
    "OutcomeInterventionError",
    "abduct",
    "detect_interventions",
    "mutilate",
    "predict_full",
    "validate_ce",
    "DEFAULT_EPS",
]

DEFAULT_EPS = 1e-6


class OutcomeInterventionError(ValueError):
    pass


@dataclass(frozen=True)
class Verdict:
    pcm_y: float
    pcm_class: int
    ce_class: int
    factual_y: float
    factual_class: int
    interventions: dict[str, float]
    values: dict[str, float]

    @property
    def conflict(self) -> bool:
        return self.pcm_class != self.ce_class


def abduct(scm: Scm, unit: Unit | Mapping[str, float]) -> dict[str, float]:
    """Noise values that reproduce the observed unit exactly."""
    observed = unit.as_observation() if isinstance(unit, Unit) else dict(unit)
    noise = {}
    for name in topo_order(scm):
        if name not in observed:
            raise KeyError(f"missing observed value for node {name!r}")
        eq = scm.node(name).equation
        if eq.noise_free:
            noise[name] = 0.0
            continue
        noise[name] = observed[name] - eval_node(eq, observed, 0.0)
    return noise


def detect_interventions(unit: Unit, ce, eps: float = DEFAULT_EPS) -> dict[str, float]:
    """Features whose CE value differs from the factual one by more than ``eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    values = ce.values if hasattr(ce, "values") and not isinstance(ce, Mapping) else ce
    return {
        f: float(values[f])
        for f, v in unit.values.items()
        if f != unit.outcome and f in values and abs(values[f] - v) > eps
    }


def mutilate(scm: Scm, interventions: Mapping[str, float]) -> Scm:
    """do-surgery: each intervened node becomes a noise-free constant."""
    for name, value in interventions.items():
        if name == scm.outcome:
            raise OutcomeInterventionError("outcome intervention unsupported")
        node = scm.node(name)
        scm = scm.with_node(replace(node, equation=StructuralEquation.constant(value)))
    return scm


def predict_full(scm: Scm, noise: Mapping[str, float]) -> dict[str, float]:
    values: dict[str, float] = {}
    for name in topo_order(scm):
        eq = scm.node(name).equation
        if eq.noise_free:
            values[name] = eq.intercept
            continue
        if name not in noise:
            raise KeyError(f"missing noise for node {name!r}")
        values[name] = eval_node(eq, values, noise[name])
    return values


def validate_ce(
    scm: Scm,
    unit: Unit,
    ce,
    threshold: float,
    eps: float = DEFAULT_EPS,
    ce_class: int | None = None,
) -> Verdict:
    """Run abduction -> action -> prediction and label the result.

    Args:
        scm: ground-truth model.
        unit: the factual unit.
        ce: a :class:`~ceaudit.ce_search.Counterfactual` or a plain feature
            mapping (then ``ce_class`` is required).
        threshold: the labelling threshold of the generating dataset.
        eps: intervention-detection tolerance in raw feature units.
        ce_class: overrides ``ce.predicted_class``.
    """
    if ce_class is None:
        ce_class = ce.predicted_class
    noise = abduct(scm, unit)
    iv = detect_interventions(unit, ce, eps)
    values = predict_full(mutilate(scm, iv), noise)
    pcm_y = values[scm.outcome]
    return Verdict(
        pcm_y=pcm_y,
        pcm_class=label(pcm_y, threshold),
        ce_class=int(ce_class),
        factual_y=unit.y,
        factual_class=unit.cls,
        interventions=iv,
        values=values,
    )
