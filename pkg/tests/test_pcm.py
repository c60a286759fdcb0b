import numpy as np
import pytest

from ceaudit.pcm import (
    OutcomeInterventionError,
    abduct,
    detect_interventions,
    mutilate,
    predict_full,
    validate_ce,
)
from ceaudit.sampler import Unit, sample_dataset
from ceaudit.scm import preset

F = ["x1", "x2", "x3", "x4", "x5", "x6", "x7"]


def _unit(values, y, threshold):
    return Unit(dict(zip(F, values)), y, int(y >= threshold))


CHAIN_U1 = _unit([54.4, 20.2, 18.9, 0, 0, 77.0, 51.3], 81.7, 79.07)
COLLIDER_U5 = _unit([43.6, 20.4, 63.9, 0, 1, 77.3, 55.3], 67.4, 66.84)


def test_abduct_chain_unit1():
    u = abduct(preset("chain"), CHAIN_U1)
    assert u["x1"] == pytest.approx(54.4)
    assert u["x3"] == pytest.approx(-1.62, abs=1e-9)
    assert u["y"] == pytest.approx(-1.56, abs=1e-9)


def test_abduct_missing_value():
    with pytest.raises(KeyError, match="y"):
        abduct(preset("chain"), dict(CHAIN_U1.values))


def test_detect_interventions_examples():
    ce = {**CHAIN_U1.values, "x6": 69.2, "x7": 53.4}
    assert detect_interventions(CHAIN_U1, ce) == {"x6": 69.2, "x7": 53.4}
    assert detect_interventions(CHAIN_U1, dict(CHAIN_U1.values)) == {}
    ce = {**COLLIDER_U5.values, "x3": 54.8}
    assert detect_interventions(COLLIDER_U5, ce) == {"x3": 54.8}
    assert detect_interventions(CHAIN_U1, {**CHAIN_U1.values, "x1": 54.4 + 1e-9}) == {}
    with pytest.raises(ValueError):
        detect_interventions(CHAIN_U1, ce, eps=0)


def test_mutilate_semantics():
    chain = preset("chain")
    m = mutilate(chain, {"x7": 3.0})
    assert m.parents_of("x7") == ()
    assert m.node("x7").equation.noise_free
    assert m.parents_of("x3") == ("x7",)
    assert mutilate(chain, {}) == chain
    coll = mutilate(preset("collider"), {"x3": 1.0})
    assert coll.parents_of("x3") == ()
    assert coll.node("y") == preset("collider").node("y")
    with pytest.raises(OutcomeInterventionError, match="outcome intervention unsupported"):
        mutilate(chain, {"y": 1.0})


def test_predict_full_chain_unit1():
    chain = preset("chain")
    vals = predict_full(mutilate(chain, {"x6": 69.2, "x7": 53.4}), abduct(chain, CHAIN_U1))
    assert vals["x3"] == pytest.approx(0.4 * 53.4 - 1.62, abs=1e-9)
    assert vals["y"] == pytest.approx(79.084, abs=1e-9)


def test_predict_full_missing_noise():
    chain = preset("chain")
    noise = abduct(chain, CHAIN_U1)
    del noise["x2"]
    with pytest.raises(KeyError):
        predict_full(chain, noise)


def test_validate_chain_unit1_conflict():
    v = validate_ce(preset("chain"), CHAIN_U1, {**CHAIN_U1.values, "x6": 69.2, "x7": 53.4}, 79.07, ce_class=0)
    assert v.pcm_class == 1 and v.conflict
    assert v.factual_y == 81.7 and v.factual_class == 1


@pytest.mark.parametrize("kind", ["chain", "fork", "collider"])
def test_round_trip(kind):
    scm = preset(kind)
    ds = sample_dataset(scm, 200, 4)
    for i in range(len(ds)):
        unit = ds.unit(i)
        noise = abduct(scm, unit)
        vals = predict_full(scm, noise)
        obs = unit.as_observation()
        assert max(abs(vals[n] - obs[n]) for n in obs) < 1e-9
        again = abduct(scm, vals)
        assert max(abs(again[n] - noise[n]) for n in noise) < 1e-9


def test_do_severance():
    rng = np.random.default_rng(0)
    chain = preset("chain")
    m = mutilate(chain, {"x3": 12.5})
    for _ in range(100):
        noise = {n: rng.normal(0, 10) for n in chain.names}
        assert predict_full(m, noise)["x3"] == 12.5


def test_chain_linear_response():
    chain = preset("chain")
    noise = abduct(chain, CHAIN_U1)
    y = [predict_full(mutilate(chain, {"x7": c}), noise)["y"] for c in (40.0, 60.0)]
    assert (y[1] - y[0]) / 20.0 == pytest.approx(0.24, abs=1e-12)


def test_collider_null_effect():
    coll = preset("collider")
    rng = np.random.default_rng(1)
    ds = sample_dataset(coll, 50, 9)
    for i in range(50):
        unit = ds.unit(i)
        ce = {**unit.values, "x3": unit.values["x3"] + rng.normal(0, 5), "x7": rng.normal(50, 5)}
        v = validate_ce(coll, unit, ce, ds.threshold, ce_class=1 - unit.cls)
        assert abs(v.pcm_y - unit.y) < 1e-12
        assert v.conflict
