import pytest

from frugal5g.errors import SchemaError
from frugal5g.interworking import NetworkMode
from frugal5g.sim.scenario import bundled_names, bundled_text, load_scenario, read_scenario

MINIMAL = """\
[scenario]
name = "tiny"
duration_ms = 500
mode = "Standalone"

[[node]]
id = "enb1"
kind = "MacroEnb"
range_m = 1000
capacity_mbps = 10

[[node]]
id = "ue1"
kind = "Ue"
pos = [5, 0]
"""

VILLAGE = """\
[scenario]
name = "village"
duration_ms = 500
mode = "Standalone"

[[node]]
id = "pop"
kind = "PoP"

[[node]]
id = "mm1"
kind = "MiddleMileNode"

[[node]]
id = "wlan1"
kind = "WlanAp"
range_m = 100
capacity_mbps = 20

[[link]]
a = "pop"
b = "mm1"
capacity_mbps = 100

[[link]]
a = "mm1"
b = "wlan1"
capacity_mbps = 50
"""


def test_minimal_file_parses():
    sc = load_scenario(MINIMAL)
    assert sc.name == "tiny" and sc.mode is NetworkMode.STANDALONE
    assert [n.kind for n in sc.nodes] == ["MacroEnb", "Ue"]
    assert sc.duration_us == 500_000 and sc.seed == 0


def test_village_with_middle_mile_parses():
    sc = load_scenario(VILLAGE)
    assert len(sc.links) == 2


def test_wlan_linked_to_pop_is_rejected():
    text = VILLAGE + '\n[[link]]\na = "wlan1"\nb = "pop"\ncapacity_mbps = 10\n'
    with pytest.raises(SchemaError, match="middle mile"):
        load_scenario(text)


def test_wlan_without_middle_mile_is_rejected():
    text = VILLAGE[:VILLAGE.rindex("[[link]]")]
    with pytest.raises(SchemaError, match="middle-mile node"):
        load_scenario(text)


def test_unknown_field_names_field_and_line():
    text = MINIMAL.replace('capacity_mbps = 10', 'capacity_mbps = 10\ncolour = "red"')
    with pytest.raises(SchemaError) as info:
        load_scenario(text, "tiny.toml")
    err = info.value
    assert "colour" in str(err) and err.path == "tiny.toml"
    assert err.line == text.splitlines().index('colour = "red"') + 1


def test_missing_field():
    with pytest.raises(SchemaError, match="range_m"):
        load_scenario(MINIMAL.replace("range_m = 1000\n", ""))


def test_bad_toml_reports_line():
    with pytest.raises(SchemaError) as info:
        load_scenario(MINIMAL + "\n[[node]\n")
    assert info.value.line is not None


@pytest.mark.parametrize("edit, needle", [
    (('mode = "Standalone"', 'mode = "Dialup"'), "mode"),
    (("duration_ms = 500", "duration_ms = 0"), "positive"),
    (('kind = "Ue"', 'kind = "Toaster"'), "kind"),
    (('id = "ue1"', 'id = "enb1"'), "duplicate"),
])
def test_invalid_values(edit, needle):
    with pytest.raises(SchemaError, match=needle):
        load_scenario(MINIMAL.replace(*edit))


def test_standalone_forbids_core_node():
    text = VILLAGE + '\n[[node]]\nid = "cn"\nkind = "CnNode"\n\n[[link]]\na = "cn"\nb = "pop"\ncapacity_mbps = 10\n'
    with pytest.raises(SchemaError, match="Standalone"):
        load_scenario(text)


def test_flow_window_checked():
    text = MINIMAL + '\n[[flow]]\nid = "f"\nue = "ue1"\nrate_pps = 10\nstart_ms = 300\nstop_ms = 200\n'
    with pytest.raises(SchemaError, match="start_ms"):
        load_scenario(text)


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_scenarios_validate(name):
    sc = read_scenario(name)
    assert sc.name == name
    assert load_scenario(bundled_text(name)) == sc


def test_unknown_reference():
    with pytest.raises(SchemaError):
        read_scenario("no_such_scenario")
