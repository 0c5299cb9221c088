import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sprintsim.params import (
    Branching,
    ConfigError,
    MultilevelSpec,
    NumericsConfig,
    PhysicalParams,
    PulseSpec,
    load_and_validate,
    rate_per_ns,
    serialize,
    to_angular,
)


def test_defaults_validate():
    phys, pulse, num = load_and_validate({})
    assert phys == PhysicalParams()
    assert pulse == PulseSpec()
    assert num == NumericsConfig()
    assert phys.kappa == pytest.approx(46.6)


def test_rate_conversion():
    assert to_angular(1.0) == pytest.approx(2 * math.pi)
    assert rate_per_ns(1.0) == pytest.approx(2 * math.pi * 1e-3)


def test_unknown_key_named():
    with pytest.raises(ConfigError, match="kappa_x"):
        load_and_validate({"kappa_x": 3})
    with pytest.raises(ConfigError, match="pulse.widht"):
        load_and_validate({"pulse": {"widht": 3}})


def test_invariant_violation_names_value():
    with pytest.raises(ConfigError, match="p_imp"):
        load_and_validate({"p_imp": 1.5})
    with pytest.raises(ConfigError, match="branching"):
        load_and_validate({"branching": [0.5, 0.5, 0.5]})
    with pytest.raises(ConfigError, match="gamma"):
        load_and_validate({"gamma": 0.0})
    with pytest.raises(ConfigError, match="fock_a"):
        load_and_validate({"numerics": {"fock_a": 1}})


def test_same_sign_multilevel_rejected_when_enabled():
    with pytest.raises(ConfigError, match="c1_plus"):
        load_and_validate({"multilevel": {"enabled": True, "c1_plus": 0.5, "c1_minus": 0.5}})
    MultilevelSpec(enabled=True, c1_plus=0.5, c1_minus=0.5).validate(allow_same_sign=True)


def test_ideal_removes_imperfections():
    p = PhysicalParams().ideal()
    assert p.p_imp == 0.0
    assert p.branching == Branching.ideal()
    assert not p.multilevel.enabled


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_and_validate(tmp_path / "nope.json")


def test_round_trip_file(tmp_path):
    phys = PhysicalParams(g_mean=20.0, p_imp=0.01)
    pulse = PulseSpec(shape="square", width=300.0, n_bar=2.0)
    num = NumericsConfig(fock_a=3, fock_b=3, n_traj=10)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(serialize(phys, pulse, num)))
    assert load_and_validate(path) == (phys, pulse, num)


@given(st.floats(0.1, 100), st.floats(0.0, 20), st.floats(0.1, 20), st.floats(0.0, 0.2))
def test_serialize_round_trip(g, sd, gamma, p_imp):
    phys = PhysicalParams(g_mean=g, g_sd=sd, gamma=gamma, p_imp=p_imp)
    assert load_and_validate(json.loads(json.dumps(serialize(phys))))[0] == phys


@given(st.sampled_from(["gaussian", "square"]), st.floats(5.0, 500.0), st.floats(0.0, 20.0))
def test_pulse_flux_integrates_to_nbar(shape, width, n_bar):
    import numpy as np

    pulse = PulseSpec(shape=shape, width=width, n_bar=n_bar)
    t0, t1 = pulse.window
    t = np.linspace(t0, t1, 200001)
    assert np.trapezoid(pulse.flux(t), t) == pytest.approx(n_bar, rel=2e-3, abs=1e-12)


def test_gaussian_width_is_flux_fwhm():
    import numpy as np

    pulse = PulseSpec(width=85.0)
    half = pulse.flux(np.array([42.5]))[0] / pulse.flux(np.array([0.0]))[0]
    assert half == pytest.approx(0.5, rel=1e-12)
