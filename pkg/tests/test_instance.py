import json

import numpy as np
import pytest

from evrebalance.generator import illustrative_instance
from evrebalance.instance import Instance, InstanceError, Station, load_instance, save_instance


def test_json_round_trip(illustrative):
    text = illustrative.to_json()
    again = Instance.from_json(text)
    assert again == illustrative
    assert again.to_json() == text


def test_file_round_trip(tmp_path, small_generated):
    path = tmp_path / "inst.json"
    save_instance(small_generated, path)
    assert load_instance(path) == small_generated


def test_schema_conventions(illustrative):
    data = json.loads(illustrative.to_json())
    assert data["stations"] == [{"capacity": 3, "node": 1}, {"capacity": 3, "node": 5}]
    assert len(data["arrival_rate"]) == 6 and len(data["arrival_rate"][0]) == 4
    assert all(k == k.lower() for k in data)


def test_derived_quantities(illustrative):
    assert illustrative.n_vehicles == 3
    assert illustrative.node_charges == 24
    # node-charges 3, 7, 14 in level-major numbering
    assert illustrative.origins == [(0, 2), (1, 3), (2, 1)]


def _base(**kw):
    data = dict(
        node_count=2, travel_time=[[0, 1], [1, 0]], levels=1, stations=[],
        arrival_rate=[[1], [1]], idle_stock=[[1], [0]],
    )
    data.update(kw)
    return data


@pytest.mark.parametrize(
    "change, field",
    [
        ({"travel_time": [[0, -1], [1, 0]]}, "travel_time"),
        ({"travel_time": [[1, 1], [1, 0]]}, "travel_time"),
        ({"travel_time": [[0, 1]]}, "travel_time"),
        ({"stations": [{"node": 5, "capacity": 1}]}, "stations[0].node"),
        ({"stations": [{"node": 0, "capacity": -1}]}, "stations[0].capacity"),
        ({"arrival_rate": [[1], [-1]]}, "arrival_rate"),
        ({"idle_stock": [[0.5], [0]]}, "idle_stock"),
        ({"levels": 0}, "levels"),
        ({"queue_params": {"eta": 1.5, "b": 0}}, "queue_params"),
        ({"spatial_arcs": [[0, 0]]}, "spatial_arcs[0]"),
    ],
)
def test_validation_names_the_field(change, field):
    with pytest.raises(InstanceError, match=field.replace("[", r"\[").replace("]", r"\]")):
        Instance.from_dict(_base(**change))


def test_unknown_and_missing_fields():
    with pytest.raises(InstanceError, match="unknown field"):
        Instance.from_dict(_base(colour="red"))
    data = _base()
    del data["levels"]
    with pytest.raises(InstanceError, match="levels: missing"):
        Instance.from_dict(data)


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n "node_count": 2,\n "levels": ,\n}\n')
    with pytest.raises(InstanceError, match=r"bad.json: line 3, column"):
        load_instance(path)


def test_capacity_and_rate_variants(illustrative):
    assert all(s.capacity == 1 for s in illustrative.with_capacity(1).stations)
    mu = illustrative.with_service_rate(7.0).service_rate
    assert mu.shape == (6, 4) and np.all(mu == 7.0)


def test_screen_warning_for_uncoverable_levels():
    inst = Instance.from_dict(_base(levels=2, arrival_rate=[[1, 1], [1, 1]], idle_stock=[[1, 0], [0, 0]]))
    assert any("never be covered" in w for w in inst.screen_warnings())


def test_stations_accept_tuples():
    inst = Instance.from_dict(_base())
    inst2 = inst.replace(stations=[{"node": 1, "capacity": 2}])
    assert inst2.stations == (Station(1, 2),)


def test_instances_are_read_only(illustrative):
    with pytest.raises(ValueError):
        illustrative.idle_stock[0, 0] = 5
    assert illustrative_instance(3, seed=1) == illustrative
