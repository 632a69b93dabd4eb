import dataclasses

import pytest

from yamabe_lab.background import InvalidDimension
from yamabe_lab.config import BUILTINS, ConfigError, builtin_scenario, builtin_scenarios, load_scenario, parse_scenario

MINIMAL = """\
[scenario]
name = tiny

[background]
kind = hyperbolic
m = 3

[initial_data]
family = smooth-bump
u_lo = 1
u_hi = 3

[run]
k_list = 6
T = 1
"""


def _with(text, old, new):
    assert old in text
    return text.replace(old, new)


def test_minimal_file_and_defaults():
    s = parse_scenario(MINIMAL)
    assert s.name == "tiny" and s.seed == 0
    assert s.run.k_list == (6,) and s.run.dt == 1 / 512 and s.run.h == 1 / 64
    assert s.run.spacing == "uniform" and s.run.output_stride == 8
    assert s.diagnostics.r0 == (1.0,) and s.diagnostics.p == (2.0, 3.0)
    assert s.diagnostics.sample_times == (1.0,) and s.diagnostics.calibrate
    assert not s.exhaustion.enabled
    assert s.background.build().kind == "hyperbolic"
    assert s.echo()["run"]["T"] == 1.0


def test_fractions_and_lists():
    s = parse_scenario(_with(MINIMAL, "k_list = 6\nT = 1\n", "k_list = 6, 8\nT = 1/2\ndt = 1/256\nh = 1/32\n"))
    assert s.run.T == 0.5 and s.run.dt == 1 / 256 and s.run.h == 1 / 32
    assert s.exhaustion.enabled and s.exhaustion.r0 == 2.0


def test_k_too_small_for_r0():
    text = _with(MINIMAL, "k_list = 6", "k_list = 4") + "\n[diagnostics]\nr0 = 2\n"
    with pytest.raises(ConfigError, match="k too small for r0"):
        parse_scenario(text)
    text = _with(MINIMAL, "k_list = 6", "k_list = 6, 8") + "\n[exhaustion]\nr0 = 3\n"
    with pytest.raises(ConfigError, match="k too small for r0") as info:
        parse_scenario(text)
    assert info.value.line == text.splitlines().index("r0 = 3") + 1


def test_dimension_two_is_rejected():
    with pytest.raises(InvalidDimension):
        parse_scenario(_with(MINIMAL, "m = 3", "m = 2"))


def test_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as info:
        parse_scenario(_with(MINIMAL, "u_hi = 3", "u_hi 3"), "bad.ini")
    assert info.value.line == 11 and str(info.value).startswith("bad.ini:11")
    with pytest.raises(ConfigError) as info:
        parse_scenario(_with(MINIMAL, "T = 1", "T = one"))
    assert info.value.line == 15
    with pytest.raises(ConfigError, match="unknown key") as info:
        parse_scenario(_with(MINIMAL, "m = 3", "m = 3\ncolour = red"))
    assert info.value.line == 7


@pytest.mark.parametrize("old,new,match", [
    ("kind = hyperbolic", "kind = spherical", "unknown background kind"),
    ("name = tiny", "name = two words", "scenario name"),
    ("k_list = 6", "k_list = 8, 6", "strictly increasing"),
    ("T = 1", "T = 1\nh = 0.07", "does not divide"),
    ("T = 1", "T = 1\nh = 1/2", "fewer than 16"),
    ("T = 1", "T = 1\nh = 1/4", "calibration"),
    ("T = 1", "T = 1\ndt = 1/3", "calibration"),
    ("T = 1", "T = 1\nspacing = chebyshev", "unknown spacing"),
    ("T = 1", "T = 1\nmax_halvings = -1", "out of range"),
    ("kind = hyperbolic", "kind = hyperbolic\nr_hi = 6", "custom backgrounds only"),
    ("kind = hyperbolic", "kind = custom", "needs warp"),
    ("family = smooth-bump", "family = blob", "unknown initial-data family"),
])
def test_invalid_values(old, new, match):
    with pytest.raises(ConfigError, match=match):
        parse_scenario(_with(MINIMAL, old, new))


def test_diagnostics_validation():
    for extra, match in (("sample_times = 0.3", "not a stored time"), ("p = 1", "exceed 1"),
                         ("sobolev_samples = -1", "non-negative"), ("r0 = 0", "positive")):
        with pytest.raises(ConfigError, match=match):
            parse_scenario(MINIMAL + f"\n[diagnostics]\n{extra}\n")


def test_missing_sections_and_files(tmp_path):
    with pytest.raises(ConfigError, match=r"missing section \[run\]"):
        parse_scenario(MINIMAL.split("[run]")[0])
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "absent.ini")
    path = tmp_path / "tiny.ini"
    path.write_text(MINIMAL)
    assert load_scenario(path) == parse_scenario(MINIMAL)


def test_user_table_entry():
    text = _with(MINIMAL, "family = smooth-bump\nu_lo = 1\nu_hi = 3",
                 "family = user-table\nu_lo = 1\nu_hi = 2\ntable = 0:2, 1:1.9, 2:1.5, 3:1.1, 4:1")
    assert parse_scenario(text).initial.table[2] == (2.0, 1.5)
    with pytest.raises(ConfigError, match="r:u"):
        parse_scenario(_with(text, "0:2,", "0 2,"))


def test_all_builtins_parse():
    scenarios = builtin_scenarios()
    assert [s.name for s in scenarios] == list(BUILTINS)
    assert all(s.seed == 20240611 and s.diagnostics.calibrate for s in scenarios)
    assert builtin_scenario("exhaustion-bump").exhaustion.enabled
    with pytest.raises(KeyError):
        builtin_scenario("nope")


def test_scenarios_are_frozen():
    s = parse_scenario(MINIMAL)
    with pytest.raises(dataclasses.FrozenInstanceError):
        s.name = "other"
