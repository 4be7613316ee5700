import json

import numpy as np
import pytest

from fsilab import Config, Laboratory
from fsilab.connectors.memory import MemoryDocumentSink, MemorySink, MemorySnapshot
from fsilab.constants import DIAGNOSTIC_COLUMNS, PROBE_SCHEMA, SUMMARY_SCHEMA, VERIFY_SCHEMA, ProbeKind, Suite
from fsilab.engine.coupling import CoupledModel
from fsilab.exceptions import RegistryError

def _config(**sections):
    data = {"physics": {"nu": 1.0}, "numerics": {"dt": 0.1, "t_end": 1.0}}
    data.update(sections)
    return Config(data)

def _simulate(lab):
    table, summary, snapshot = MemorySink(), MemoryDocumentSink(), MemorySnapshot()
    lab.simulate(table_sink=table, summary_sink=summary, snapshot_sink=snapshot)
    return table.result, summary.result, snapshot

def test_rest_run_writes_table_summary_and_snapshot(tmp_path):
    lab = Laboratory(_config(), output_dir=tmp_path)
    df, summary, snapshot = _simulate(lab)
    assert df.columns == list(DIAGNOSTIC_COLUMNS)
    assert df.height == 11
    assert df["E_total"].to_list() == [0.0] * 11
    assert df["t"][-1] == pytest.approx(1.0)
    assert summary["schema"] == SUMMARY_SCHEMA
    assert summary["steps"] == 10
    assert summary["energy"]["decay_rate"] is None
    assert summary["audits"] == {"volume": True, "balance_sign": True, "energy_monotone": True}
    assert summary["passed"] is True
    assert summary["params_hash"] == lab.params.params_hash()
    assert snapshot.state is lab.last_state
    assert snapshot.state.time == pytest.approx(1.0)

def test_bent_plate_run_decays():
    lab = Laboratory(_config(
        physics={"nu": 1.0, "nonlinear": False},
        numerics={"dt": 0.02, "t_end": 0.2},
        initial={"displacement": {"w": {"name": "bump", "amplitude": 0.05}}},
    ))
    df, summary, _ = _simulate(lab)
    assert df.height == 11
    assert summary["energy"]["final"] < summary["energy"]["initial"]
    assert summary["energy"]["decay_rate"] > 0.0
    assert summary["mean_w_drift"] < 1e-10
    assert summary["higher_order"]["Lambda"]["initial"] > 0.0
    assert not np.isnan(df["E_tilde"][0])

def test_higher_order_columns_follow_snapshot_stride():
    lab = Laboratory(_config(
        numerics={"dt": 0.1, "t_end": 1.0},
        diagnostics={"snapshot_stride": 2},
        initial={"displacement": {"w": {"name": "bump", "amplitude": 0.01}}},
    ))
    df, _, _ = _simulate(lab)
    lam = df["Lambda"].to_numpy()
    assert np.all(np.isfinite(lam[::2]))
    assert np.all(np.isnan(lam[1::2]))

def test_constant_loads_become_forcing():
    lab = Laboratory(_config(forcing={"fluid": "gravity", "plate": {"g3": 0.5}}))
    forcing = lab.forcing(CoupledModel(lab.params))
    assert forcing.fluid is not None
    assert np.all(forcing.plate[2] == 0.5)
    unloaded = lab.forcing(CoupledModel(_config().params))
    assert unloaded.fluid is None

def test_initial_state_from_snapshot(tmp_path):
    source = Laboratory(_config(initial={"displacement": {"w": {"name": "bump", "amplitude": 0.02}}}), output_dir=tmp_path)
    source.simulate()
    assert (tmp_path / "diagnostics.csv").exists()
    assert json.loads((tmp_path / "summary.json").read_text())["schema"] == SUMMARY_SCHEMA

    restart = Laboratory(_config(initial={"snapshot": str(tmp_path / "final.npz")}))
    model = CoupledModel(restart.params)
    state = restart.initial_state(model)
    np.testing.assert_array_equal(state.plate.w, source.last_state.plate.w)
    halved = restart.initial_state(model, amplitude=0.5)
    np.testing.assert_allclose(halved.plate.w, 0.5 * source.last_state.plate.w)

def test_unknown_probe_kind():
    with pytest.raises(RegistryError, match="Unknown probe 'chaos'"):
        Laboratory(_config()).probe("chaos", sink=MemoryDocumentSink())

def test_stationary_probe_document():
    sink = MemoryDocumentSink()
    report = Laboratory(_config()).probe(ProbeKind.STATIONARY, sink=sink)
    assert report.passed
    assert sink.result["schema"] == PROBE_SCHEMA
    assert sink.result["kind"] == "stationary"

def test_dissipativity_probe_labels_amplitudes():
    lab = Laboratory(_config(
        numerics={"dt": 0.1, "t_end": 1.0},
        initial={"displacement": {"w": {"name": "bump", "amplitude": 0.01}}},
        probe={"amplitudes": [0.5, 1.0]},
    ))
    report = lab.probe(ProbeKind.DISSIPATIVITY, sink=MemoryDocumentSink())
    assert report.labels == ["amplitude=0.5", "amplitude=1"]
    assert report.initial_energies[0] == pytest.approx(0.25 * report.initial_energies[1], rel=1e-2)

def test_verify_records_seed():
    lab = Laboratory(_config(verify={"resolutions": [8, 16], "samples": 2, "seed": 3}))
    sink = MemoryDocumentSink()
    result = lab.verify(Suite.PLATE, sink=sink)
    assert sink.result["schema"] == VERIFY_SCHEMA
    assert sink.result["seed"] == 3
    assert sink.result["passed"] == result.passed
    assert Laboratory(lab.config, seed=9).seed == 9

def _small_step_config():
    return Config({
        "physics": {"nu": 1.0},
        "numerics": {"dt": 0.0002, "t_end": 0.02},
        "initial": {"displacement": {"w": {"name": "bump", "amplitude": 0.05}}},
        "verify": {"resolutions": [8, 16], "steps": 100},
    })

def test_energy_suite_passes_from_a_bent_plate(tmp_path):
    sink = MemoryDocumentSink()
    result = Laboratory(_small_step_config(), output_dir=tmp_path).verify(Suite.ENERGY, sink=sink)
    failed = [c.name for c in result.checks if not c.passed]
    assert failed == []
    assert result.passed
    assert sink.result["passed"] is True

def test_ball_suite_shrinks_residuals_and_finds_a_decay_rate(tmp_path):
    result = Laboratory(_small_step_config(), output_dir=tmp_path).verify(Suite.BALL, sink=MemoryDocumentSink())
    names = {c.name: c for c in result.checks}
    for omega in (0.1, 0.5):
        check = names[f"ball_refinement_ratio(omega={omega:g})"]
        assert check.passed
        assert check.value >= 1.6
    assert names["lyapunov_equivalence"].passed
    assert names["lyapunov_rate"].passed
    assert result.data["envelope"]["rate"] > 0.0
