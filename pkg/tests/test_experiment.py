import json
from dataclasses import replace

import numpy as np
import pytest

from sprintsim.experiment import (
    RunArtifacts,
    ScenarioConfig,
    Toggles,
    build_manifest,
    compare_with_reference,
    effective_params,
    figure_tables,
    load_scenario,
    make_reference,
    mixture_model,
    run_scenario,
    sample_coupling,
    write_figures,
)
from sprintsim.fockops import make_distribution, total_variation
from sprintsim.params import ConfigError, NumericsConfig, PhysicalParams, PulseSpec


def test_sample_coupling():
    assert np.all(sample_coupling(24, 0, 5, 1) == 24)
    g = sample_coupling(24, 9, 10_000, 3)
    assert g.min() >= 1.0
    assert g.mean() == pytest.approx(24, abs=0.3)
    assert g.std() == pytest.approx(9, abs=0.3)
    assert np.array_equal(g, sample_coupling(24, 9, 10_000, 3))
    with pytest.raises(ValueError):
        sample_coupling(24, -1, 3, 0)


def test_config_invariants():
    with pytest.raises(ConfigError):
        ScenarioConfig(sweep=())
    with pytest.raises(ConfigError):
        ScenarioConfig(bootstrap=1)
    sc = load_scenario({"scenario": {"sweep": [1, 2], "toggles": {"g_spread": False}}, "detector": {"N": 4}})
    assert sc.sweep == (1.0, 2.0) and not sc.toggles.g_spread and sc.detector.N == 4
    with pytest.raises(ConfigError, match="bogus"):
        load_scenario({"scenario": {"bogus": 1}})
    with pytest.raises(ConfigError, match="toggles"):
        load_scenario({"scenario": {"toggles": {"atom_present": "yes"}}})
    with pytest.raises(ConfigError, match="detector"):
        load_scenario({"detector": {"eta": 2}})


def test_toggles_are_independent():
    base = PhysicalParams()
    p = effective_params(ScenarioConfig(base=base, toggles=Toggles(p_imp=False)))
    assert p.p_imp == 0 and p.branching == base.branching
    p = effective_params(ScenarioConfig(base=base, toggles=Toggles(dark_branching=False)))
    assert p.p_imp == base.p_imp and p.branching.b_dark == 0
    p = effective_params(ScenarioConfig(base=base, toggles=Toggles(multilevel=True)))
    assert p.multilevel.enabled


def test_mixture_model_limits():
    pin = make_distribution("poisson", 3.0)
    assert total_variation(mixture_model(3.0, 0.0, 1.0), pin) < 1e-12
    m = mixture_model(3.0, 1.0, 1.0)
    assert m.mean == pytest.approx(2.0 + pin.p[0], abs=1e-9)


@pytest.fixture(scope="module")
def tiny_run():
    sc = ScenarioConfig(numerics=NumericsConfig(fock_a=2, fock_b=2, n_traj=30),
                        sweep=(0.5, 1.0), distribution_points=(1.0,), bootstrap=3,
                        toggles=Toggles(g_spread=False), truncation_check=False)
    return run_scenario(sc)


def test_run_artifacts(tiny_run):
    art = tiny_run
    assert isinstance(art, RunArtifacts)
    assert [p.n_bar for p in art.points] == [0.5, 1.0]
    p = art.point(1.0)
    assert p.reconstruction is not None and p.reconstruction_empty is not None
    assert art.point(0.5).reconstruction is None
    assert set(p.clicks) == {"T", "R"}
    assert "param_hash" in art.provenance and "master_seed" in art.provenance


def test_tables_layout(tiny_run):
    tables = figure_tables(tiny_run)
    assert tables["fig2a/fig2a.csv"].splitlines()[0].startswith(
        "n_bar,meanR_atom,meanT_atom,meanR_empty,meanT_empty")
    assert tables["fig2b/fig2b.csv"].splitlines()[0] == "n_bar,g2R,se"
    assert tables["fig2cde/fig2cde_1.csv"].splitlines()[0] == "n,p_in,p_out,lo,hi"
    assert tables["fig3a/fig3a.csv"].splitlines()[0] == "t_ns,fluxR,fluxT,fluxSum,fluxT_empty"
    assert tables["fig3b/fig3b.csv"].splitlines()[0] == "tR_bin,tT_bin,weight"
    assert "fig3a/fig3a_0.5.csv" in tables and "fig3b/fig3b_1.csv" in tables
    for text in tables.values():
        assert "\r" not in text


def test_write_and_compare(tiny_run, tmp_path):
    m = write_figures(tiny_run, tmp_path / "out")
    assert (tmp_path / "out" / "manifest.json").exists()
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["files"] == m["files"]
    with pytest.raises(FileExistsError):
        write_figures(tiny_run, tmp_path / "out")
    ref = make_reference(m)
    assert compare_with_reference(tiny_run, ref)["passed"]
    bad = json.loads(json.dumps(ref))
    bad["quantities"]["meanR_atom@1"]["value"] += 1.0
    assert not compare_with_reference(m, bad)["passed"]
    missing = json.loads(json.dumps(ref))
    missing["quantities"]["not_there"] = {"value": 1.0, "tol": 1.0}
    rep = compare_with_reference(m, missing)
    assert not rep["passed"] and rep["quantities"]["not_there"]["reason"] == "missing"
    tampered = json.loads(json.dumps(ref))
    tampered["files"]["fig2a/fig2a.csv"] = "0" * 64
    assert not compare_with_reference(m, tampered)["passed"]


def test_atom_absent_toggle():
    sc = ScenarioConfig(numerics=NumericsConfig(fock_a=2, fock_b=2, n_traj=20), sweep=(1.0,),
                        toggles=Toggles(atom_present=False, detector_model=False), truncation_check=False)
    art = run_scenario(sc)
    p = art.points[0]
    assert p.mean["T"] == p.mean_empty["T"] and p.mean["R"] == 0.0


def test_postselection_drops_dark():
    sc = ScenarioConfig(numerics=NumericsConfig(fock_a=2, fock_b=2, n_traj=40), sweep=(3.0,),
                        toggles=Toggles(g_spread=False, detector_model=False), truncation_check=False,
                        postselect_redetect=True)
    p = run_scenario(sc).points[0]
    assert p.n_kept <= 40
