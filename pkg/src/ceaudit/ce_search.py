"""Counterfactual search against a fitted logistic model.

Two objectives are supported:

* Wachter: ``lam * (f(x') - y')**2 + dist(x, x')`` for a single CE.
* DiCE: ``mean_i yloss(f(c_i), y') + (lambda1 / k) * sum_i dist(c_i, x)
  - lambda2 * det(K)`` with ``K_ij = 1 / (1 + dist(c_i, c_j))``.

``dist`` is the MAD-normalised L1 distance averaged over features and
``yloss`` is the squared probability error.

The optimiser is a batched proximal gradient method: the smooth part
(prediction loss and diversity) takes a gradient step in z-scored feature
space, the L1 distance to the query is handled exactly by soft-thresholding,
and the result is clipped to the feature bounds. Binary features are not
relaxed; every 0/1 assignment of the mutable binaries is enumerated and
optimised alongside several random restarts. If no candidate reaches the
desired class, the weight on the prediction loss is raised geometrically and the search
repeated (Wachter's lambda schedule); the reported objective is always
evaluated with the requested lambdas.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .classifier import LogisticModel
from .sampler import Dataset, Unit

__all__ = [
    "CeRequest",
    "SearchConfig",
    "Counterfactual",
    "NegativeDeterminantError",
    "dist",
    "yloss",
    "dpp_diversity",
    "mad_of",
    "wachter_objective",
    "wachter_gradient",
    "dice_objective",
    "dice_gradient",
    "wachter_generate",
    "dice_generate",
    "make_request",
]


class NegativeDeterminantError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CeRequest:
    """Everything needed to explain one unit.

    ``desired_class`` normally differs from ``unit.cls``; that is enforced
    by :func:`make_request`, not here, so boundary cases stay expressible.
    """

    unit: Unit
    desired_class: int
    feature_bounds: Mapping[str, tuple[float, float]]
    k: int = 1
    lam: float = 0.5
    lambda1: float = 0.5
    lambda2: float = 1.0
    immutable_features: frozenset[str] = frozenset()
    binary_features: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.desired_class not in (0, 1):
            raise ValueError("desired_class must be 0 or 1")
        if min(self.lam, self.lambda1, self.lambda2) < 0:
            raise ValueError("lambdas must be >= 0")
        for name, (lo, hi) in self.feature_bounds.items():
            if lo > hi:
                raise ValueError(f"bounds for {name!r} have lo > hi")


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = 8
    max_iter: int = 2000
    step: float = 0.05
    tol: float = 1e-3
    patience: int = 100
    polish_iter: int = 200
    polish_top: int = 8
    escalations: int = 3
    escalation_factor: float = 4.0
    init_scale: float = 1.0


@dataclass(frozen=True)
class Counterfactual:
    values: dict[str, float]
    predicted_class: int
    predicted_proba: float
    objective: float
    converged: bool
    meta: dict = field(default_factory=dict, compare=False)


# -- primitive terms ---------------------------------------------------------


def _as_vec(a, order) -> np.ndarray:
    if isinstance(a, Counterfactual):
        a = a.values
    if isinstance(a, Mapping):
        return np.array([float(a[f]) for f in order])
    return np.asarray(a, dtype=float)


def dist(a, b, mad) -> float:
    """Mean over features of ``|a_f - b_f| / mad_f``.

    ``a`` and ``b`` may be mappings (then ``mad`` must be a mapping too) or
    aligned arrays.
    """
    if isinstance(mad, Mapping):
        order = list(mad)
        if isinstance(a, Mapping) and set(a) != set(order):
            raise ValueError("feature sets differ")
        if isinstance(b, Mapping) and set(b) != set(order):
            raise ValueError("feature sets differ")
        m = np.array([float(mad[f]) for f in order])
        a, b = _as_vec(a, order), _as_vec(b, order)
    else:
        m = np.asarray(mad, dtype=float)
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.any(m <= 0):
        raise ValueError("MAD values must be positive")
    return float(np.sum(np.abs(a - b) / m) / len(m))


def yloss(proba: float, desired_class: int) -> float:
    return (proba - desired_class) ** 2


def _kernel(C: np.ndarray, inv_mad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise distances and kernel for CE sets ``C`` of shape (..., k, F)."""
    diff = C[..., :, None, :] - C[..., None, :, :]
    D = np.sum(np.abs(diff) * inv_mad, axis=-1)
    return diff, 1.0 / (1.0 + D)


def _cofactors(K: np.ndarray) -> np.ndarray:
    k = K.shape[-1]
    if k == 1:
        return np.ones_like(K)
    if k == 2:
        cof = np.empty_like(K)
        cof[..., 0, 0] = K[..., 1, 1]
        cof[..., 1, 1] = K[..., 0, 0]
        cof[..., 0, 1] = -K[..., 1, 0]
        cof[..., 1, 0] = -K[..., 0, 1]
        return cof
    cof = np.empty_like(K)
    idx = np.arange(k)
    for i in range(k):
        rows = idx[idx != i]
        for j in range(k):
            cols = idx[idx != j]
            minor = K[..., rows[:, None], cols[None, :]]
            cof[..., i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return cof


def _det(K: np.ndarray) -> np.ndarray:
    if K.shape[-1] == 1:
        return K[..., 0, 0]
    if K.shape[-1] == 2:
        return K[..., 0, 0] * K[..., 1, 1] - K[..., 0, 1] * K[..., 1, 0]
    return np.linalg.det(K)


def dpp_diversity(ces: Sequence, mad) -> float:
    """``det(K)`` with ``K_ij = 1 / (1 + dist(c_i, c_j))``.

    Raises:
        NegativeDeterminantError: if round-off drives the determinant below
            ``-1e-9``.
    """
    if isinstance(mad, Mapping):
        order = list(mad)
        m = np.array([float(mad[f]) for f in order])
        C = np.array([_as_vec(c, order) for c in ces])
    else:
        m = np.asarray(mad, dtype=float)
        C = np.array([_as_vec(c, None) for c in ces])
    if len(C) < 1:
        raise ValueError("need at least one counterfactual")
    if np.any(m <= 0):
        raise ValueError("MAD values must be positive")
    _, K = _kernel(C, 1.0 / (m * len(m)))
    value = float(_det(K))
    if value < -1e-9:
        raise NegativeDeterminantError(f"diversity determinant {value} < 0")
    return max(value, 0.0)


def mad_of(dataset: Dataset) -> dict[str, float]:
    """Per-feature median absolute deviation; zero MADs become 1.0."""
    med = np.median(dataset.X, axis=0)
    mad = np.median(np.abs(dataset.X - med), axis=0)
    mad = np.where(mad > 0, mad, 1.0)
    return {f: float(v) for f, v in zip(dataset.features, mad)}


# -- objectives --------------------------------------------------------------


@dataclass(frozen=True)
class _Problem:
    """Array view of one search: weights, query point, normalisers."""

    w_raw: np.ndarray
    model: LogisticModel
    x: np.ndarray
    inv_mad_f: np.ndarray  # 1 / (F * mad)
    desired: int
    w_y: float  # weight on mean yloss
    w_dist: float  # weight on (1/k) * sum dist
    w_div: float  # weight on det(K)


def _terms(P: _Problem, C: np.ndarray):
    """Objective and its parts for CE sets ``C`` of shape (..., k, F)."""
    k = C.shape[-2]
    p = P.model.proba(C)
    yl = np.mean((p - P.desired) ** 2, axis=-1)
    dsum = np.sum(np.abs(C - P.x) * P.inv_mad_f, axis=(-1, -2)) / k
    if P.w_div and k > 1:
        _, K = _kernel(C, P.inv_mad_f)
        div = _det(K)
    elif P.w_div:
        div = np.ones(C.shape[:-2])
    else:
        div = np.zeros(C.shape[:-2])
    obj = P.w_y * yl + P.w_dist * dsum - P.w_div * div
    return obj, p, yl, dsum, div


def _obj_grad(P: _Problem, C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Objective and (sub-)gradient w.r.t. raw feature values, fused."""
    k = C.shape[-2]
    p = expit(P.model.logit(C))
    resid = p - P.desired
    to_x = C - P.x
    obj = P.w_y * np.mean(resid**2, axis=-1) + (P.w_dist / k) * np.sum(
        np.abs(to_x) * P.inv_mad_f, axis=(-1, -2)
    )
    g = (P.w_y * 2.0 / k) * (resid * p * (1.0 - p))[..., None] * P.w_raw
    g += (P.w_dist / k) * np.sign(to_x) * P.inv_mad_f
    if P.w_div:
        if k == 1:
            obj = obj - P.w_div
        elif k == 2:
            # det = 1 - K12^2, d det / d c_0 = 2 K12^3 sign(c_0 - c_1) / (F mad)
            diff = C[..., 0, :] - C[..., 1, :]
            k12 = 1.0 / (1.0 + np.sum(np.abs(diff) * P.inv_mad_f, axis=-1))
            obj = obj - P.w_div * (1.0 - k12**2)
            d0 = (2.0 * k12**3)[..., None] * np.sign(diff) * P.inv_mad_f
            g[..., 0, :] -= P.w_div * d0
            g[..., 1, :] += P.w_div * d0
        else:
            diff, K = _kernel(C, P.inv_mad_f)
            obj = obj - P.w_div * _det(K)
            cof = _cofactors(K)
            # d det / d c_i = sum_j 2 cof_ij dK_ij/dD_ij dD_ij/dc_i, cof symmetric
            coeff = -2.0 * cof * K**2
            idx = np.arange(k)
            coeff[..., idx, idx] = 0.0
            g -= P.w_div * np.sum(coeff[..., None] * np.sign(diff) * P.inv_mad_f, axis=-2)
    return obj, g


def _problem(model, x, mad, desired, w_y, w_dist, w_div) -> _Problem:
    if isinstance(mad, Mapping):
        m = np.array([mad[f] for f in model.feature_order], dtype=float)
    else:
        m = np.asarray(mad, dtype=float)
    return _Problem(
        w_raw=model.raw_weights,
        model=model,
        x=np.asarray(x, dtype=float),
        inv_mad_f=1.0 / (m * len(m)),
        desired=int(desired),
        w_y=float(w_y),
        w_dist=float(w_dist),
        w_div=float(w_div),
    )


def wachter_objective(model, x_cf, x, desired, lam, mad) -> float:
    P = _problem(model, x, mad, desired, lam, 1.0, 0.0)
    return float(_terms(P, np.asarray(x_cf, dtype=float)[None, :])[0])


def wachter_gradient(model, x_cf, x, desired, lam, mad) -> np.ndarray:
    """Gradient w.r.t. the raw counterfactual (sub-gradient at kinks)."""
    P = _problem(model, x, mad, desired, lam, 1.0, 0.0)
    return _obj_grad(P, np.asarray(x_cf, dtype=float)[None, :])[1][0]


def dice_objective(model, C, x, desired, lambda1, lambda2, mad) -> float:
    P = _problem(model, x, mad, desired, 1.0, lambda1, lambda2)
    return float(_terms(P, np.asarray(C, dtype=float))[0])


def dice_gradient(model, C, x, desired, lambda1, lambda2, mad) -> np.ndarray:
    P = _problem(model, x, mad, desired, 1.0, lambda1, lambda2)
    return _obj_grad(P, np.asarray(C, dtype=float))[1]


# -- search ------------------------------------------------------------------


def make_request(
    unit: Unit,
    dataset: Dataset,
    k: int = 1,
    *,
    desired_class: int | None = None,
    lam: float = 0.5,
    lambda1: float = 0.5,
    lambda2: float = 1.0,
    immutable_features: Sequence[str] = (),
) -> CeRequest:
    """Request with dataset-derived bounds and binary-feature detection."""
    desired = 1 - unit.cls if desired_class is None else desired_class
    if desired == unit.cls:
        raise ValueError("desired class must differ from the unit's class")
    bounds = {
        f: (float(dataset.X[:, j].min()), float(dataset.X[:, j].max()))
        for j, f in enumerate(dataset.features)
    }
    binary = frozenset(
        f for j, f in enumerate(dataset.features) if np.all(np.isin(dataset.X[:, j], (0.0, 1.0)))
    )
    return CeRequest(
        unit=unit,
        desired_class=desired,
        feature_bounds=bounds,
        k=k,
        lam=lam,
        lambda1=lambda1,
        lambda2=lambda2,
        immutable_features=frozenset(immutable_features),
        binary_features=binary,
    )


def _search(
    P: _Problem,
    request: CeRequest,
    model: LogisticModel,
    k: int,
    seed: int,
    cfg: SearchConfig,
) -> np.ndarray:
    """Run the batched optimiser; returns final iterates of shape (B, k, F)."""
    order = model.feature_order
    F = len(order)
    lo = np.array([request.feature_bounds.get(f, (-np.inf, np.inf))[0] for f in order])
    hi = np.array([request.feature_bounds.get(f, (-np.inf, np.inf))[1] for f in order])
    x = P.x
    frozen = np.array([f in request.immutable_features for f in order])
    binary = np.array([f in request.binary_features for f in order])
    cont = ~frozen & ~binary
    bin_idx = np.flatnonzero(binary & ~frozen)

    per_ce = list(itertools.product((0.0, 1.0), repeat=len(bin_idx)))
    combos = list(itertools.product(per_ce, repeat=k))

    rng = np.random.default_rng(seed)
    starts = np.repeat(x[None, None, :], cfg.restarts * k, axis=0).reshape(cfg.restarts, k, F)
    if cfg.restarts > 1:
        noise = rng.standard_normal((cfg.restarts - 1, k, F)) * cfg.init_scale * model.scales
        starts[1:] = starts[1:] + noise * cont
    starts = np.clip(starts, lo, hi)

    C = np.repeat(starts[:, None], len(combos), axis=1)  # (R, combos, k, F)
    if len(bin_idx):
        assign = np.array(combos)  # (combos, k, nbin)
        C[..., bin_idx] = assign[None]
    C = C.reshape(-1, k, F)

    mask = cont.astype(float)
    m1 = np.zeros_like(C)
    m2 = np.zeros_like(C)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_C = C.copy()
    best_obj = np.full(len(C), np.inf)
    last_score = None
    for it in range(1, cfg.max_iter + 1):
        obj, g = _obj_grad(P, C)
        better = obj < best_obj
        best_obj = np.where(better, obj, best_obj)
        best_C[better] = C[better]
        if it % cfg.patience == 0:
            # sub-gradient iterates chatter; stop once the would-be winner stalls
            score = _leader_score(P, best_C, best_obj)
            if last_score and score[0] == last_score[0] and last_score[1] - score[1] < cfg.tol:
                break
            last_score = score
        # Adam step in z-scored coordinates
        g = g * model.scales * mask
        m1 = b1 * m1 + (1 - b1) * g
        m2 = b2 * m2 + (1 - b2) * g * g
        dz = (m1 / (1 - b1**it)) / (np.sqrt(m2 / (1 - b2**it)) + eps)
        C = np.clip(C - cfg.step * dz * model.scales, lo, hi)
    else:
        obj, _ = _obj_grad(P, C)
        better = obj < best_obj
        best_obj = np.where(better, obj, best_obj)
        best_C[better] = C[better]

    # Proximal polish: Adam's sub-gradient steps leave tiny non-zero moves on
    # features the L1 term would zero out exactly.
    n_conv = np.sum((P.model.proba(best_C) >= 0.5).astype(int) == P.desired, axis=-1)
    lead = np.lexsort((np.arange(len(best_obj)), best_obj, -n_conv))[: cfg.polish_top]
    C = best_C[lead].copy()
    top_obj = best_obj[lead]
    top_C = best_C[lead]
    k_shrink = cfg.step * (P.w_dist / k) * P.inv_mad_f * model.scales**2
    x = P.x
    for _ in range(cfg.polish_iter):
        obj, g = _obj_grad(P, C)
        better = obj < top_obj
        top_obj = np.where(better, obj, top_obj)
        top_C[better] = C[better]
        g -= (P.w_dist / k) * np.sign(C - x) * P.inv_mad_f  # smooth part only
        Y = C - cfg.step * model.scales**2 * g
        delta = Y - x
        Y = x + np.sign(delta) * np.maximum(np.abs(delta) - k_shrink, 0.0)
        Y = np.clip(Y, lo, hi)
        C_new = C + mask * (Y - C)
        if np.array_equal(C_new, C):
            break
        C = C_new
    obj, _ = _obj_grad(P, C)
    better = obj <= top_obj
    top_C[better] = C[better]
    best_C[lead] = top_C
    return best_C


def _leader_score(P: _Problem, C: np.ndarray, obj: np.ndarray) -> tuple[int, float]:
    n_conv = np.sum((P.model.proba(C) >= 0.5).astype(int) == P.desired, axis=-1)
    top = n_conv.max()
    return int(top), float(obj[n_conv == top].min())


def _select(P_report: _Problem, C: np.ndarray, desired: int):
    obj, p, *_ = _terms(P_report, C)
    n_conv = np.sum((p >= 0.5).astype(int) == desired, axis=-1)
    # most converged, then lowest objective, then lowest index
    best = np.lexsort((np.arange(len(obj)), obj, -n_conv))[0]
    return best, int(n_conv[best]), obj, p


def _generate(model, request, mad, seed, cfg, w_y, w_dist, w_div, k) -> list[Counterfactual]:
    x = model.vector(request.unit.values)
    report = _problem(model, x, mad, request.desired_class, w_y, w_dist, w_div)
    best_pick = None
    if int(model.proba(x) >= 0.5) == request.desired_class:
        # nothing to explain: the factual point already has the desired label
        C = np.repeat(x[None, None, :], k, axis=1)
        idx, n_conv, obj, p = _select(report, C, request.desired_class)
        best_pick = (C[idx], n_conv, float(obj[idx]), p[idx], -1)
    for level in range(cfg.escalations + 1 if best_pick is None else 0):
        P = _problem(model, x, mad, request.desired_class, w_y * cfg.escalation_factor**level, w_dist, w_div)
        C = _search(P, request, model, k, seed, cfg)
        idx, n_conv, obj, p = _select(report, C, request.desired_class)
        if best_pick is None or n_conv > best_pick[1]:
            best_pick = (C[idx], n_conv, float(obj[idx]), p[idx], level)
        if n_conv == k or w_y == 0:
            break

    chosen, _, objective, probs, level = best_pick
    out = []
    for i in range(k):
        proba = float(probs[i])
        cls = int(proba >= 0.5)
        out.append(
            Counterfactual(
                values={f: float(v) for f, v in zip(model.feature_order, chosen[i])},
                predicted_class=cls,
                predicted_proba=proba,
                objective=objective,
                converged=cls == request.desired_class,
                meta={"escalation": level},
            )
        )
    return out


def wachter_generate(
    model: LogisticModel,
    request: CeRequest,
    mad,
    seed: int = 0,
    cfg: SearchConfig = SearchConfig(),
) -> Counterfactual:
    """Single counterfactual minimising the Wachter loss."""
    return _generate(model, request, mad, seed, cfg, request.lam, 1.0, 0.0, 1)[0]


def dice_generate(
    model: LogisticModel,
    request: CeRequest,
    mad,
    seed: int = 0,
    cfg: SearchConfig = SearchConfig(),
) -> list[Counterfactual]:
    """``request.k`` jointly optimised, mutually diverse counterfactuals.

    Every returned CE carries the joint objective of the set.
    """
    return _generate(
        model, request, mad, seed, cfg, 1.0, request.lambda1, request.lambda2, request.k
    )
