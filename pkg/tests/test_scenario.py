from pathlib import Path

import pytest

from lagorbits.scenario import DISCRETIZATION_DEFAULTS, Scenario, ScenarioError, isclose_dict

SCENARIOS = sorted((Path(__file__).parent.parent / "scenarios").glob("*.toml"))


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_shipped_scenarios_round_trip(path):
    sc = Scenario.load(path)
    again = Scenario.loads(sc.dumps())
    assert isclose_dict(sc.to_dict(), again.to_dict())
    L = sc.build_lagrangian()
    assert L.manifold.dim >= 1


def test_defaults_and_overrides():
    sc = Scenario.loads('[manifold]\nkind = "plane"\n[discretization]\nN = 32\ntolerances = { el_residual = 1e-6 }\n')
    st = sc.settings()
    assert st["N"] == 32
    assert st["N_polish"] == DISCRETIZATION_DEFAULTS["N_polish"]
    assert st["tolerances"]["el_residual"] == 1e-6
    assert st["tolerances"]["energy_dev"] == DISCRETIZATION_DEFAULTS["tolerances"]["energy_dev"]
    assert DISCRETIZATION_DEFAULTS["tolerances"]["el_residual"] == 1e-3
    assert sc.region() == [[-5.0, 5.0], [-5.0, 5.0]]
    assert sc.k_bracket() == (-1.0, 10.0)


def test_torus_region_is_one_period():
    sc = Scenario.loads('[manifold]\nkind = "torus"\nperiod = 2.0\n')
    assert sc.region() == [[0.0, 2.0], [0.0, 2.0]]


@pytest.mark.parametrize(
    "text, fragment",
    [
        ('[manifold]\nkind = "klein"\n', "manifold.kind"),
        ("name = 'x'\n", "missing [manifold]"),
        ('[manifold]\nkind = "plane"\n[lagrangian]\ntheta = ["__import__(1)", "x"]\n', "lagrangian"),
        ('[manifold]\nkind = "plane"\n[search]\nregion = [[1.0, 0.0], [0.0, 1.0]]\n', "search.region"),
        ('[manifold]\nkind = "plane"\n[discretization]\nNN = 3\n', "discretization"),
        ('seed = -1\n[manifold]\nkind = "plane"\n', "seed"),
        ('bogus = 1\n[manifold]\nkind = "plane"\n', "unknown top-level"),
        ("[manifold\n", "parse error"),
    ],
)
def test_invalid_scenarios(text, fragment):
    with pytest.raises(ScenarioError) as exc:
        Scenario.loads(text)
    assert any(fragment in d for d in exc.value.diagnostics)


def test_several_diagnostics_at_once():
    with pytest.raises(ScenarioError) as exc:
        Scenario.loads('bogus = 1\nseed = "a"\n[manifold]\nkind = "plane"\n')
    assert len(exc.value.diagnostics) == 2


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        Scenario.load(tmp_path / "nope.toml")


def test_shrink_profile_key():
    sc = Scenario.loads('shrink_profile = "r/(1 + r^2/10)"\n[manifold]\nkind = "plane"\n[shrink]\nr2 = 3.0\n')
    sh = sc.build_shrink()
    assert sh is not None
    assert "shrink_profile" in sc.to_dict()


def test_isclose_dict():
    assert isclose_dict({"a": [1.0, 2]}, {"a": [1.0 + 1e-12, 2]}, rel=1e-9)
    assert not isclose_dict({"a": [1.0]}, {"a": [1.1]}, rel=1e-9)
    assert not isclose_dict({"a": 1}, {"b": 1})


def test_bad_shrink_profile_rejected():
    with pytest.raises(ScenarioError) as exc:
        Scenario.loads('shrink_profile = "1/(1 + r^2)"\n[manifold]\nkind = "plane"\n[shrink]\nr2 = 3.0\n')
    assert exc.value.diagnostics[0].startswith("shrink")
