import logging
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import polars as pl

from fsilab.config import Config
from fsilab.connectors import CsvSink, DocumentSink, JsonSink, NpzSnapshotSink, NpzSnapshotSource, SnapshotSink, TableSink
from fsilab.constants import DIAGNOSTIC_COLUMNS, PROBE_SCHEMA, SUMMARY_SCHEMA, VERIFY_SCHEMA, ProbeKind
from fsilab.engine.attractor import ProbeReport, dissipativity_probe, separation_probe, stationary_probe, stationary_solve
from fsilab.engine.coupling import CoupledModel, CoupledState, Forcing, Trajectory, make_initial_state, run
from fsilab.engine.diagnostics import (
    EnergyLedger, ball_identity_audit, decay_fit, higher_energy_audit, lyapunov_envelope, lyapunov_series,
    trajectory_terms,
)
from fsilab.engine.profiles import fluid_profile, plate_stack
from fsilab.engine.suites import SuiteContext, SuiteResult, run_suite
from fsilab.exceptions import DiagnosticsError, RegistryError

logger = logging.getLogger(__name__)

def _stamp(document: Dict[str, Any], schema: str) -> Dict[str, Any]:
    return {"schema": schema, "created": datetime.now(timezone.utc).isoformat(timespec="seconds"), **document}

class Laboratory:
    """
    Runs simulations, verification suites and long-time probes described by a `Config`.
    """
    def __init__(self, config: Config, output_dir: Optional[Path] = None, seed: Optional[int] = None):
        self.config = config
        self.run_config = config.run
        self.params = config.params
        self.output_dir = config.output_dir(output_dir)
        self.seed = seed if seed is not None else self.run_config.verify.seed
        self.last_state: Optional[CoupledState] = None

    # -- data from the configuration ------------------------------------------

    def forcing(self, model: CoupledModel) -> Forcing:
        spec = self.run_config.forcing
        fluid = fluid_profile(spec.fluid, model.fluid_grid)
        if all(not np.any(c) for c in fluid):
            fluid = None
        return Forcing(fluid=fluid, plate=plate_stack(spec.plate.ordered(), model.plate_grid))

    def initial_state(self, model: CoupledModel, amplitude: float = 1.0) -> CoupledState:
        """Initial data from the snapshot or the profiles, scaled by `amplitude`."""
        init = self.run_config.initial
        if init.snapshot is not None:
            state = NpzSnapshotSource(self.config.resolve(init.snapshot)).read(self.params)
            if amplitude == 1.0:
                return state
            v0 = tuple(amplitude * c for c in state.fluid.velocity)
            return make_initial_state(v0, amplitude * state.plate.displacement, amplitude * state.plate.velocity, model)
        v0 = fluid_profile(init.fluid, model.fluid_grid) if init.fluid is not None else None
        u0 = plate_stack(init.displacement.ordered(), model.plate_grid) if init.displacement is not None else None
        u1 = plate_stack(init.velocity.ordered(), model.plate_grid) if init.velocity is not None else None
        if amplitude != 1.0:
            v0 = tuple(amplitude * c for c in v0) if v0 is not None else None
            u0 = amplitude * u0 if u0 is not None else None
            u1 = amplitude * u1 if u1 is not None else None
        return make_initial_state(v0, u0, u1, model)

    def _unloaded(self, forcing: Forcing) -> bool:
        return forcing.fluid is None and not np.any(forcing.plate)

    # -- simulate ----------------------------------------------------------------

    def simulate(
        self,
        table_sink: Optional[TableSink] = None,
        summary_sink: Optional[DocumentSink] = None,
        snapshot_sink: Optional[SnapshotSink] = None,
    ) -> Dict[str, Any]:
        """Runs the configured trajectory with every diagnostic attached.

        Args:
            table_sink (TableSink, optional): Per-step diagnostics table. Defaults to `diagnostics.csv`.
            summary_sink (DocumentSink, optional): JSON summary. Defaults to `summary.json`.
            snapshot_sink (SnapshotSink, optional): Final state. Defaults to `final.npz`.

        Returns:
            Dict[str, Any]: The summary document.

        Raises:
            SimulationError: If a step fails; `last_state` is kept on the laboratory as well.
        """
        table_sink = table_sink or CsvSink(self.output_dir / "diagnostics.csv")
        summary_sink = summary_sink or JsonSink(self.output_dir / "summary.json")
        snapshot_sink = snapshot_sink or NpzSnapshotSink(self.output_dir / "final.npz")

        model = CoupledModel(self.params)
        forcing = self.forcing(model)
        state0 = self.initial_state(model)
        ledger = EnergyLedger(model, forcing)
        trajectory = run(state0, model, forcing, self.run_config.numerics.t_end, observers=[ledger])
        self.last_state = trajectory.final_state

        table, higher = self._diagnostics_table(ledger, trajectory, model)
        table_sink.write(table)
        summary = _stamp(self._summary(ledger, trajectory, model, forcing, higher), SUMMARY_SCHEMA)
        summary_sink.write(summary)
        snapshot_sink.write(trajectory.final_state, self.params)
        return summary

    def _diagnostics_table(self, ledger: EnergyLedger, trajectory: Trajectory, model: CoupledModel):
        rows = len(ledger.reports)
        columns: Dict[str, Any] = {
            name: np.array([getattr(r, name) for r in ledger.reports])
            for name in DIAGNOSTIC_COLUMNS if name not in ("E_tilde", "Lambda", "ball_residual")
        }
        for name in ("E_tilde", "Lambda", "ball_residual"):
            columns[name] = np.full(rows, np.nan)

        higher: Dict[str, Any] = {}
        if len(trajectory) >= 3:
            terms = trajectory_terms(trajectory, model)
            reports = lyapunov_series(trajectory, model, terms=terms)
            omega = self.params.omega[0]
            ball = ball_identity_audit(trajectory, model, omega, terms=terms)
            rows_at = np.arange(len(trajectory)) * trajectory.stride
            columns["E_tilde"][rows_at] = [r.E_tilde for r in reports]
            columns["Lambda"][rows_at] = [r.Lambda for r in reports]
            columns["ball_residual"][rows_at] = ball.residual
            higher = {
                "terms": terms,
                "lyapunov": reports,
                "higher_energy_max": higher_energy_audit(trajectory, model, terms=terms).max_abs,
                "ball_max": {
                    f"{w:g}": ball_identity_audit(trajectory, model, w, terms=terms).max_residual
                    for w in self.params.omega
                },
                "Cbar": reports[0].Cbar,
                "eta": reports[0].eta,
            }
        else:
            logger.warning("Fewer than 3 snapshots; higher-order diagnostics are skipped.")
        columns["subiterations"] = columns["subiterations"].astype(np.int64)
        return pl.DataFrame({name: columns[name] for name in DIAGNOSTIC_COLUMNS}), higher

    def _summary(self, ledger, trajectory, model, forcing, higher) -> Dict[str, Any]:
        reports = ledger.reports
        times = np.array([r.t for r in reports])
        energies = np.array([r.E_total for r in reports])
        residuals = np.array([r.balance_residual for r in reports])
        mean_w = np.array([r.mean_w for r in reports])
        unloaded = self._unloaded(forcing)

        decay_rate = None
        try:
            decay_rate = decay_fit(times, energies, offset=0.0 if unloaded else None).rate
        except DiagnosticsError as e:
            logger.warning("Energy decay rate unavailable: %s", e)

        area = self.params.geometry.area
        drift = float(np.max(np.abs(mean_w - mean_w[0])))
        slack = max(self.params.tol_couple, 1e-12) * max(energies[0], 1e-300)
        audits: Dict[str, Any] = {"volume": drift <= 1e-10 * area}
        if unloaded:
            audits["balance_sign"] = bool(residuals.min() >= -slack)
            audits["energy_monotone"] = bool(np.max(np.diff(energies), initial=0.0) <= slack)

        summary: Dict[str, Any] = {
            "params_hash": self.params.params_hash(),
            "steps": len(trajectory.reports),
            "t_end": trajectory.final_state.time,
            "energy": {"initial": energies[0], "final": energies[-1], "decay_rate": decay_rate},
            "balance_residual": {"max_abs": float(np.max(np.abs(residuals))), "min": float(residuals.min())},
            "mean_w_drift": drift,
            "interface_residual_max": max((r.interface_residual for r in trajectory.reports), default=0.0),
            "subiterations_mean": float(np.mean([r.subiterations for r in trajectory.reports])) if trajectory.reports else 0.0,
            "audits": audits,
        }
        if higher:
            lam = higher["lyapunov"]
            summary["higher_order"] = {
                "higher_energy_max": higher["higher_energy_max"],
                "ball_max": higher["ball_max"],
                "Cbar": higher["Cbar"],
                "eta": higher["eta"],
                "Lambda": {"initial": lam[0].Lambda, "final": lam[-1].Lambda},
            }
            try:
                envelope = lyapunov_envelope(trajectory.times, lam)
                summary["higher_order"]["envelope"] = {**asdict(envelope), "equivalent": envelope.equivalent, "bounded": envelope.bounded}
            except DiagnosticsError as e:
                logger.warning("Lyapunov envelope unavailable: %s", e)
        summary["passed"] = all(audits.values())
        return summary

    # -- verify ------------------------------------------------------------------

    def verify(self, suite: str, sink: Optional[DocumentSink] = None) -> SuiteResult:
        settings = self.run_config.verify
        ctx = SuiteContext(
            params=self.params,
            resolutions=tuple(settings.resolutions),
            steps=settings.steps,
            samples=settings.samples,
            seed=self.seed,
            forcing=self.forcing,
            initial=self.initial_state,
        )
        result = run_suite(suite, ctx)
        sink = sink or JsonSink(self.output_dir / f"verify_{suite}.json")
        sink.write(_stamp({"params_hash": self.params.params_hash(), "seed": self.seed, **result.to_dict()}, VERIFY_SCHEMA))
        return result

    # -- probe -------------------------------------------------------------------

    def probe(self, kind: str, sink: Optional[DocumentSink] = None) -> ProbeReport:
        """Dispatches a long-time probe.

        Raises:
            RegistryError: If `kind` is not a known probe.
        """
        handlers = {
            ProbeKind.STATIONARY: self._probe_stationary,
            ProbeKind.DISSIPATIVITY: self._probe_dissipativity,
            ProbeKind.SEPARATION: self._probe_separation,
        }
        handler = handlers.get(kind)
        if handler is None:
            raise RegistryError(f"Unknown probe '{kind}'. Known: {sorted(k.value for k in handlers)}.")
        report = handler()
        sink = sink or JsonSink(self.output_dir / f"probe_{ProbeKind(kind).value}.json")
        sink.write(_stamp({"params_hash": self.params.params_hash(), **report.to_dict()}, PROBE_SCHEMA))
        return report

    def _probe_stationary(self) -> ProbeReport:
        model = CoupledModel(self.params)
        return stationary_probe(self.forcing(model), model)

    def _probe_dissipativity(self) -> ProbeReport:
        model = CoupledModel(self.params)
        amplitudes = self.run_config.probe.amplitudes
        states = [self.initial_state(model, a) for a in amplitudes]
        return dissipativity_probe(
            states, self.params, self.forcing(model), self.run_config.numerics.t_end,
            labels=[f"amplitude={a:g}" for a in amplitudes],
        )

    def _probe_separation(self) -> ProbeReport:
        model = CoupledModel(self.params)
        forcing = self.forcing(model)
        reference = stationary_solve(forcing, model).as_state()
        return separation_probe(
            self.initial_state(model),
            self.initial_state(model, self.run_config.probe.amplitude_b),
            self.params, forcing, self.run_config.numerics.t_end,
            reference=reference,
        )
