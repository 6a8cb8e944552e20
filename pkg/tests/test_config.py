import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eptrace.config import Tolerances, config_from_dict, parse_config, serialize_config
from eptrace.errors import SchemaError


def two_level(task=None, **extra):
    doc = {
        "model": {"two_level": {"e1": 1.0, "e2": -1.0, "omega": [0.0, 0.5]}},
        "task": task or {"eig": {}},
    }
    doc.update(extra)
    return doc


def effective(bands=None, coupling=None, task=None):
    channels = {"v": [[1.0], [0.5]]}
    if bands is not None:
        channels["bands"] = bands
    return {
        "model": {"effective": {
            "closed": {"levels": [0.0, 1.0]},
            "channels": channels,
            "coupling": coupling or {"wideband": {"alpha": 0.1}},
        }},
        "task": task or {"eig": {}},
    }


def pointer_of(doc):
    with pytest.raises(SchemaError) as info:
        config_from_dict(doc)
    return info.value.pointer


def test_minimal_config_gets_defaults():
    cfg = parse_config(json.dumps(two_level()))
    assert cfg.tolerances == Tolerances()
    assert cfg.task.name == "eig"
    assert cfg.output.format == "csv"
    assert cfg.model.gamma1 == 0.0 and cfg.model.omega == 0.5j


def test_negative_rho_pointer():
    doc = effective(bands=[{"e_min": -1, "e_max": 1, "rho": -0.5}],
                    coupling={"energy_dependent": {"energy": 0.0}})
    assert pointer_of(doc) == "/model/effective/channels/bands/0/rho"


def test_unknown_keys_rejected():
    assert pointer_of(two_level(tolerances={"tol_eigg": 1e-9})) == "/tolerances/tol_eigg"
    doc = two_level()
    doc["model"]["two_level"]["gamma3"] = 1.0
    assert pointer_of(doc) == "/model/two_level/gamma3"
    assert pointer_of(two_level(extra=1)) == "/extra"


def test_semantic_errors_carry_pointers():
    doc = effective(bands=[{"e_min": 1, "e_max": -1, "rho": 1}],
                    coupling={"energy_dependent": {"energy": 0.0}})
    assert pointer_of(doc) == "/model/effective/channels/bands/0/e_max"
    task = {"ep_find": {"x": "omega_re", "y": "omega_im", "domain": [[1, -1], [0, 2]], "seed": [0, 1]}}
    assert pointer_of(two_level(task)) == "/task/ep_find/domain/0"
    task = {"sweep": {"parameter": "alpha", "values": [0, 1]}}
    assert pointer_of(two_level(task)) == "/task/sweep/parameter"
    assert pointer_of(two_level({"trap": {"alphas": [1, 2]}})) == "/task/trap"
    task = {"sweep": {"parameter": "omega_im", "values": [0.0, 0.5, 0.2]}}
    assert pointer_of(two_level(task)) == "/task/sweep/values"


def test_invalid_json():
    with pytest.raises(SchemaError):
        parse_config("{not json")


def test_exactly_one_model_and_task():
    doc = two_level()
    doc["model"]["effective"] = effective()["model"]["effective"]
    with pytest.raises(SchemaError):
        config_from_dict(doc)
    doc = two_level({"eig": {}, "trap": {"alphas": [1, 2]}})
    with pytest.raises(SchemaError):
        config_from_dict(doc)


def test_tolerances_must_be_positive():
    with pytest.raises(SchemaError) as info:
        config_from_dict(two_level(tolerances={"tol_eig": 0}))
    assert info.value.pointer == "/tolerances/tol_eig"


finite = st.floats(-10, 10, allow_nan=False)
positive = st.floats(1e-14, 1.0, allow_nan=False)

task_strategy = st.one_of(
    st.just({"eig": {}}),
    st.builds(lambda a, b: {"encircle": {"x": "omega_re", "y": "omega_im", "center": [a, b],
                                         "radius": 0.1}}, finite, finite),
    st.builds(lambda n: {"sweep": {"parameter": "omega_im",
                                   "values": {"start": 0.0, "stop": 1.0, "num": n}}},
              st.integers(2, 50)),
    st.builds(lambda s: {"ep_find": {"x": "omega_re", "y": "omega_im",
                                     "domain": [[-1, 1], [0, 2]], "seed": [0.0, s]}},
              st.floats(0, 2)),
)


@given(finite, finite, finite, finite, finite, finite, positive, task_strategy,
       st.sampled_from(["csv", "json"]))
def test_round_trip(e1, e2, g1, g2, wr, wi, tol, task, fmt):
    doc = {
        "model": {"two_level": {"e1": e1, "e2": e2, "gamma1": g1, "gamma2": g2, "omega": [wr, wi]}},
        "task": task,
        "tolerances": {"tol_defect": tol},
        "output": {"format": fmt},
    }
    cfg = config_from_dict(doc)
    text = serialize_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize_config(again) == text


def test_round_trip_effective():
    doc = effective(bands=[{"e_min": -1, "e_max": 2, "rho": 0.5}],
                    coupling={"energy_dependent": {"energy": 0.25}}, task={"eig": {"poles": True}})
    cfg = config_from_dict(doc)
    assert parse_config(serialize_config(cfg)) == cfg
