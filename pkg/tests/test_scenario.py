import json

import pytest

from ng911sim import ConfigError, charlotte, load_scenario, parse_scenario
from ng911sim.scenario import apply_overrides, bundled_path, read_json, scenario_to_doc


@pytest.fixture
def doc():
    return read_json(bundled_path("charlotte.json"))


def test_charlotte_defaults(charlotte_sc):
    sc = charlotte_sc
    assert sc.psap_ids == [1, 2, 3]
    assert sc.replication.horizon == 8 * 3600
    assert sc.esinet.routers == 100
    assert all(p.call_takers == 3 and p.patience_min is None for p in sc.psaps)
    assert sc.region.width == 15 and sc.region.height == 10


def test_round_trip(charlotte_sc):
    doc = scenario_to_doc(charlotte_sc)
    again = parse_scenario(json.loads(json.dumps(doc)))
    assert scenario_to_doc(again) == doc
    assert again.dispatch.stations == charlotte_sc.dispatch.stations


def test_round_trip_with_threats():
    sc = load_scenario(bundled_path("charlotte.json"),
                       threat_paths=[bundled_path("threats/ddos_5min.json"),
                                     bundled_path("threats/malware_takers.json")])
    doc = scenario_to_doc(sc)
    assert scenario_to_doc(parse_scenario(doc)) == doc
    assert [t.kind for t in sc.threats] == ["ddos", "malware"]


def test_unknown_field_names_path(doc):
    doc["psaps"][1]["takers"] = 4
    with pytest.raises(ConfigError, match=r"psaps\[1\]"):
        parse_scenario(doc)


def test_duplicate_unit_variants(doc):
    doc["replication"]["horizon_s"] = 100
    with pytest.raises(ConfigError, match="horizon"):
        parse_scenario(doc)


def test_modality_mix_must_sum_to_one(doc):
    doc["modality_mix"]["voice"] = 0.5
    with pytest.raises(ConfigError, match="modality_mix"):
        parse_scenario(doc)


def test_negative_takers(doc):
    doc["psaps"][0]["call_takers"] = 0
    with pytest.raises(ConfigError, match="call_takers"):
        parse_scenario(doc)


def test_threat_unknown_psap(doc):
    doc["threats"] = [{"id": "x", "kind": "ddos", "start_s": 0, "duration_s": 10,
                       "rate_per_s": 1, "target": [9]}]
    with pytest.raises(ConfigError, match="target"):
        parse_scenario(doc)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "nope.json")


def test_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"name": }')
    with pytest.raises(ConfigError, match="line 1"):
        load_scenario(p)


def test_overrides_dotted_and_alias(doc):
    out = apply_overrides(doc, ["psaps.2.call_takers=5", "speed=30", "p_d=0.5", "name=x"])
    sc = parse_scenario(out)
    assert sc.psap(3).call_takers == 5
    assert sc.dispatch.travel.speed_mph == 30
    assert all(p.dispatch_prob == 0.5 for p in sc.psaps)
    assert sc.name == "x"
    assert doc["name"] == "charlotte"  # input untouched


def test_override_errors(doc):
    with pytest.raises(ConfigError):
        apply_overrides(doc, ["novalue"])
    with pytest.raises(ConfigError):
        apply_overrides(doc, ["psaps.7.call_takers=1"])


def test_charlotte_helper_overrides():
    assert charlotte(theta=0.8).esinet.routing.threshold == 0.8


def test_layout_deterministic_from_seed():
    assert charlotte().dispatch.stations == charlotte().dispatch.stations


def test_ddos_scenario_has_patience():
    sc = load_scenario(bundled_path("charlotte_ddos.json"))
    assert all(p.patience_min == 240 for p in sc.psaps)
    assert sc.replication.n_replications >= 100
