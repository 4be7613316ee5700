import argparse
import logging
import sys
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table
from rich.theme import Theme

from fsilab.config import Config
from fsilab.connectors import NpzSnapshotSink
from fsilab.constants import ProbeKind, Suite
from fsilab.core import Laboratory
from fsilab.exceptions import (
    CompatibilityError, ConfigError, FsiLabException, GridError, OutputError, RegistryError, SimulationError, SnapshotError, SolverError,
)

custom_theme = Theme({
    "info": "cyan",
    "warning": "yellow",
    "error": "bold red",
    "success": "bold green"
})

console = Console(theme=custom_theme)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_AUDIT = 3

def configure_logging(verbose: bool) -> None:
    logger = logging.getLogger("fsilab")
    logger.handlers.clear()
    logger.addHandler(RichHandler(console=console, show_path=False, markup=False))
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    logger.propagate = False

def checks_table(title: str, rows: Iterable[Tuple[str, object, object, bool]]) -> Table:
    table = Table(title=title)
    table.add_column("check")
    table.add_column("value", justify="right")
    table.add_column("threshold", justify="right")
    table.add_column("result")
    for name, value, threshold, passed in rows:
        verdict = "[success]pass[/success]" if passed else "[error]fail[/error]"
        table.add_row(name, f"{value:.4g}" if isinstance(value, float) else str(value), str(threshold), verdict)
    return table

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fsilab",
        description="fsilab - numerical lab for a Stokes fluid coupled to a clamped von Karman plate.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-f", "--config", type=Path, required=True, help="Path to the YAML (or JSON) run configuration.")
    common.add_argument("-o", "--output-dir", type=Path, required=False, help="Directory for artifacts; overrides FSILAB_OUTPUT_DIR.")
    common.add_argument("--seed", type=int, required=False, help="Seed for randomized audits.")
    common.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("simulate", parents=[common], help="Run a trajectory and write diagnostics, summary and final snapshot.")
    verify = commands.add_parser("verify", parents=[common], help="Run a verification battery.")
    verify.add_argument(
        "--suite", required=True, help=f"Battery to run: {', '.join(s.value for s in Suite)}.",
    )
    probe = commands.add_parser("probe", parents=[common], help="Run a long-time attractor probe.")
    probe.add_argument(
        "--kind", required=True, help=f"Probe to run: {', '.join(k.value for k in ProbeKind)}.",
    )
    return parser

def cmd_simulate(lab: Laboratory) -> int:
    try:
        summary = lab.simulate()
    except SimulationError as e:
        if e.last_state is not None:
            target = lab.output_dir / "last_valid.npz"
            try:
                NpzSnapshotSink(target).write(e.last_state, lab.params)
                console.print(f"[warning]Last valid state saved to {target}.[/warning]")
            except OutputError as out:
                console.print(f"[error]Could not save last valid state:[/error] {out}")
        raise
    rows = [(name, passed, True, bool(passed)) for name, passed in summary["audits"].items()]
    console.print(checks_table("simulate audits", rows))
    rate = summary["energy"]["decay_rate"]
    if rate is not None:
        console.print(f"[info]Fitted energy decay rate:[/info] {rate:.6g}")
    console.print(f"[success]Artifacts written to {lab.output_dir}.[/success]")
    return EXIT_OK if summary["passed"] else EXIT_AUDIT

def cmd_verify(lab: Laboratory, suite: str) -> int:
    result = lab.verify(suite)
    console.print(checks_table(f"verify {suite}", [(c.name, c.value, c.threshold, c.passed) for c in result.checks]))
    return EXIT_OK if result.passed else EXIT_AUDIT

def cmd_probe(lab: Laboratory, kind: str) -> int:
    report = lab.probe(kind)
    document = report.to_dict()
    rows = [
        (name, value, "", True)
        for name, value in document.items()
        if isinstance(value, float) and not name.endswith("tolerance")
    ]
    rows.append(("passed", report.passed, True, report.passed))
    console.print(checks_table(f"probe {kind}", rows))
    return EXIT_OK if report.passed else EXIT_AUDIT

def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entrypoint for the fsilab CLI.

    Exits 0 when every audit passes, 1 on configuration or registry errors, 2 on solver or
    simulation failures (including unwritable artifacts) and 3 when an audit or probe check fails.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        config = Config(args.config)
        lab = Laboratory(config, output_dir=args.output_dir, seed=args.seed)
    except ConfigError as e:
        console.print(f"[error]Config validation errors:[/error]\n{e}")
        sys.exit(EXIT_CONFIG)

    console.print("[success]Configuration successfully validated.[/success]")

    try:
        if args.command == "simulate":
            code = cmd_simulate(lab)
        elif args.command == "verify":
            code = cmd_verify(lab, args.suite)
        else:
            code = cmd_probe(lab, args.kind)
    except (ConfigError, RegistryError, SnapshotError, CompatibilityError, GridError) as e:
        console.print(f"[error]Configuration error:[/error]\n{e}")
        sys.exit(EXIT_CONFIG)
    except (SimulationError, SolverError) as e:
        console.print(f"[error]Solver failure:[/error]\n{e}")
        sys.exit(EXIT_SOLVER)
    except OutputError as e:
        console.print(f"[error]Output error:[/error]\n{e}")
        sys.exit(EXIT_SOLVER)
    except FsiLabException as e:
        console.print(f"[error]Run failed:[/error]\n{e}")
        sys.exit(EXIT_SOLVER)

    if code == EXIT_OK:
        console.print("[success]Done! All checks passed.[/success]")
    else:
        console.print("[warning]At least one check failed.[/warning]")
    sys.exit(code)

if __name__ == "__main__":
    main()
