#!/usr/bin/env python3
"""
Command-line entry point.

    python cli.py solve --input '{"type":"atomic","atoms":[[1,1]]}'
    python cli.py verify --input '{"type":"beta23"}' --tol 1e-4
    python cli.py simulate --input '{"type":"pointmass","x":1,"w":1}' --n 1000000 --seed 7
    python cli.py curves --input spec.json --output curves.csv

Exit codes: 0 success, 1 input error, 2 verification failure.
"""
import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from equilibrium import DEFAULT_MAX_LEVEL, SCHEMES, ConstructionError, EquilibriumLaw, discretize, solve
from measures import DISCRETIZATION_TOL, Measure, MeasureError, _as_array, parse_measure
from simulate import simulate
from verify import DEFAULT_LP_GRID, verification_report

logger = logging.getLogger(__name__)

COMMANDS = ('solve', 'verify', 'simulate', 'discretize', 'curves')
FORMATS = ('json', 'csv', 'text')
CURVE_POINTS = 512
# Rows shown in text tables before eliding the middle
TABLE_ROWS = 20
SIM_COLUMNS = ('estimate', 'std_error', 'n_trials', 'wins', 'ties', 'losses', 'theta', 'seed')


class InputError(ValueError):
    """Raised for unusable command-line input."""
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


@dataclass
class RunConfig:
    command: str
    input_path: str
    tol: float = DISCRETIZATION_TOL
    solve_tol: float = DISCRETIZATION_TOL
    max_level: int = DEFAULT_MAX_LEVEL
    theta: float = 0.0
    n_trials: int = 100000
    seed: int = 0
    output: Optional[str] = None
    format: Optional[str] = None
    workers: int = 1
    grid_size: int = DEFAULT_LP_GRID
    scheme: str = 'dyadic'
    challenger: Optional[str] = None
    verbose: int = 0

    def validate(self):
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if not 0 <= self.theta < 1:
            raise InputError(f"theta must lie in [0, 1), got {self.theta}")
        if not self.tol > 0 or not self.solve_tol > 0:
            raise InputError("tolerances must be > 0")
        if self.n_trials < 1:
            raise InputError("number of trials must be >= 1")
        if self.max_level < 1:
            raise InputError("max level must be >= 1")
        if self.format is not None and self.format not in FORMATS:
            raise InputError(f"unknown format {self.format!r}")

    @property
    def output_format(self) -> str:
        if self.format:
            return self.format
        return 'csv' if self.command == 'curves' else 'text'


def _env_float(name: str, default: float) -> float:
    return float(os.environ.get(name, default))


def _env_int(name: str, default: int) -> int:
    return int(os.environ.get(name, default))


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(description='Symmetric equilibrium of the gambling contest with a random start')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--input', '-i', dest='input_path', required=True,
                        help='measure spec as inline JSON or a path to a JSON file')
    parser.add_argument('--tol', type=float, default=_env_float('CONTEST_TOL', DISCRETIZATION_TOL),
                        help='solver tolerance (solve, curves) or check tolerance (verify)')
    parser.add_argument('--solve-tol', type=float, default=DISCRETIZATION_TOL,
                        help='solver tolerance used by verify')
    parser.add_argument('--max-level', type=int, default=_env_int('CONTEST_MAX_LEVEL', DEFAULT_MAX_LEVEL))
    parser.add_argument('--theta', type=float, default=_env_float('CONTEST_THETA', 0.0),
                        help='payoff on a tie, in [0, 1)')
    parser.add_argument('--n', dest='n_trials', type=int, default=100000, help='Monte Carlo trials')
    parser.add_argument('--seed', type=int, default=_env_int('CONTEST_SEED', 0))
    parser.add_argument('--output', '-o', help='output file (default stdout)')
    parser.add_argument('--format', '-f', choices=FORMATS)
    parser.add_argument('--workers', type=int, default=_env_int('CONTEST_WORKERS', 1))
    parser.add_argument('--grid-size', type=int, default=DEFAULT_LP_GRID, help='best-response LP grid')
    parser.add_argument('--scheme', choices=SCHEMES, default='dyadic', help='discretization scheme')
    parser.add_argument('--challenger', help='target law spec played against the equilibrium in simulate')
    parser.add_argument('--verbose', '-v', action='count', default=0)
    return parser


def read_measure(source: str) -> Measure:
    """Inline JSON when the argument starts with '{', otherwise a file path."""
    text = source.strip()
    if not text.startswith('{'):
        try:
            with open(source) as handle:
                text = handle.read()
        except OSError as e:
            raise InputError(f"cannot read input {source!r}: {e.strerror}") from e
    return parse_measure(text)


# --- commands ------------------------------------------------------------------

def _solve(config: RunConfig, mu: Measure, tol: float):
    return solve(mu, tol=tol, max_level=config.max_level, scheme=config.scheme, workers=config.workers)


def run_solve(config: RunConfig, mu: Measure) -> Dict[str, Any]:
    law, report = _solve(config, mu, config.tol)
    return {'law': law.to_dict(), 'convergence': report.to_dict()}


def run_verify(config: RunConfig, mu: Measure) -> Dict[str, Any]:
    law, report = _solve(config, mu, config.solve_tol)
    result = verification_report(law, mu, report, config.theta, config.tol, config.grid_size)
    result['law'] = law.to_dict()
    result['convergence'] = report.to_dict()
    return result


def run_simulate(config: RunConfig, mu: Measure) -> Dict[str, Any]:
    law, _ = _solve(config, mu, config.solve_tol)
    challenger = law if config.challenger is None else read_measure(config.challenger)
    result = simulate(challenger, law, config.theta, config.n_trials, config.seed, config.workers)
    return result.to_dict()


def run_discretize(config: RunConfig, mu: Measure) -> Dict[str, Any]:
    chi = discretize(mu, 2 ** config.max_level, config.scheme)
    return chi.to_dict()


def curve_grid(law: EquilibriumLaw, mu: Measure) -> np.ndarray:
    top = 1.1 * (law.terminal_knot if law.terminal_knot > 0 else 1.0)
    points = mu.breakpoints()
    grid = np.concatenate([law.density_knots, points[points <= top], np.linspace(0.0, top, CURVE_POINTS)])
    return np.unique(grid)


def run_curves(config: RunConfig, mu: Measure) -> Dict[str, Any]:
    law, _ = _solve(config, mu, config.tol)
    x = curve_grid(law, mu)
    columns = {
        'x': x,
        'F_mu': _as_array(mu.cdf(x)),
        'F_nu': _as_array(law.cdf(x)),
        'C_mu': _as_array(mu.call(x)),
        'C_nu': _as_array(law.call(x)),
        'P_mu': _as_array(mu.put(x)),
        'P_nu': _as_array(law.put(x)),
        'density_nu': _as_array(law.density(x)),
    }
    return {name: values.tolist() for name, values in columns.items()}


RUNNERS = {
    'solve': run_solve,
    'verify': run_verify,
    'simulate': run_simulate,
    'discretize': run_discretize,
    'curves': run_curves,
}


# --- rendering ------------------------------------------------------------------

def _csv_rows(command: str, result: Dict[str, Any]) -> List[List[Any]]:
    if command == 'curves':
        names = list(result)
        return [names] + [list(row) for row in zip(*(result[n] for n in names))]
    if command == 'solve':
        law = result['law']
        return [['knot', 'curvature']] + [[k, c] for k, c in zip(law['knots'], law['curvatures'] + [0.0])]
    if command == 'discretize':
        return [['location', 'weight']] + result['atoms']
    if command == 'simulate':
        return [list(result), list(result.values())]
    astar = result['astar']
    return [['condition', 'passed']] + [[k, v] for k, v in astar.items() if k.endswith('_ok')]


def render_csv(command: str, result: Dict[str, Any]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    for row in _csv_rows(command, result):
        writer.writerow(['%.17g' % v if isinstance(v, float) else v for v in row])
    return buffer.getvalue()


def _elided(rows: List[List[Any]]) -> List[List[Any]]:
    if len(rows) <= TABLE_ROWS:
        return rows
    half = TABLE_ROWS // 2
    return rows[:half] + [['...'] * len(rows[0])] + rows[-half:]


def render_text(command: str, result: Dict[str, Any], console: Console):
    if command == 'solve':
        law = result['law']
        table = Table(show_header=True, header_style="bold magenta", title="Equilibrium law")
        table.add_column("Piece", justify="right")
        table.add_column("From", justify="right")
        table.add_column("To", justify="right")
        table.add_column("Density", justify="right", style="green")
        knots = law['knots']
        rows = [[str(i + 1), f"{knots[i]:.6f}", f"{knots[i + 1]:.6f}", f"{c:.6f}"]
                for i, c in enumerate(law['curvatures'])]
        for row in _elided(rows):
            table.add_row(*row)
        console.print(table)
        console.print(f"Atom at zero: [cyan]{law['atom_at_zero']:.6f}[/cyan]  "
                      f"mass {law['mass']:.6f}  mean {law['mean']:.6f}")
        conv = result['convergence']
        status = "[green]converged[/green]" if conv['converged'] else "[yellow]not converged[/yellow]"
        console.print(Panel(f"{status} after {len(conv['levels'])} level(s), scheme {conv['scheme']}",
                            title="Convergence"))

    elif command == 'verify':
        table = Table(show_header=True, header_style="bold magenta", title="Characterization checks")
        table.add_column("Condition")
        table.add_column("Result", justify="center")
        for name, ok in result['astar'].items():
            if name.endswith('_ok'):
                table.add_row(name[:-3], "[green]pass[/green]" if ok else "[red]fail[/red]")
        console.print(table)
        worst = result['astar']['worst_violation']
        if worst:
            console.print(f"[red]Worst violation: {worst['condition']} at x={worst['x']:.6f} "
                          f"by {worst['magnitude']:.3e}[/red]")
        cert = result['certificate']
        if 'violations' in cert:
            console.print(f"[red]Certificate failed: {'; '.join(cert['violations'])}[/red]")
        else:
            console.print(f"Certificate: gamma gap [cyan]{cert['gap_sup']:.3e}[/cyan], "
                          f"dual value [cyan]{cert['dual_value']:.6f}[/cyan]")
        best = result['best_response']
        if 'error' not in best:
            console.print(f"Best response on grid {best['grid_size']}: {best['value']:.6f} "
                          f"(equilibrium {best['equilibrium_value']:.6f})")
        verdict = "[bold green]PASSED[/bold green]" if result['passed'] else "[bold red]FAILED[/bold red]"
        console.print(f"Equilibrium value {result['value']:.6f}  {verdict}")

    elif command == 'simulate':
        table = Table(show_header=True, header_style="bold magenta", title="Monte Carlo payoff")
        for name in SIM_COLUMNS:
            table.add_column(name, justify="right")
        table.add_row(*(f"{result[k]:.6f}" if isinstance(result[k], float) else str(result[k])
                        for k in SIM_COLUMNS))
        console.print(table)

    else:
        rows = _csv_rows(command, result)
        table = Table(show_header=True, header_style="bold magenta")
        for name in rows[0]:
            table.add_column(str(name), justify="right")
        for row in _elided(rows[1:]):
            table.add_row(*(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))
        console.print(table)


def emit(config: RunConfig, result: Dict[str, Any]):
    fmt = config.output_format
    handle = open(config.output, 'w') if config.output else sys.stdout
    try:
        if fmt == 'json':
            handle.write(json.dumps(result, indent=2) + '\n')
        elif fmt == 'csv':
            handle.write(render_csv(config.command, result))
        else:
            render_text(config.command, result, Console(file=handle))
    finally:
        if config.output:
            handle.close()


def run(config: RunConfig) -> int:
    """Run one command; returns the process exit code."""
    try:
        config.validate()
        mu = read_measure(config.input_path)
        result = RUNNERS[config.command](config, mu)
        emit(config, result)
    except (MeasureError, ValueError) as e:
        logger.error(f"Input error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ConstructionError as e:
        logger.error(f"Construction failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        logger.error(f"Cannot write output: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1

    if config.command == 'verify' and not result['passed']:
        return 2
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    config = RunConfig(**vars(args))

    level = os.environ.get('LOG_LEVEL', 'WARNING').upper()
    if config.verbose:
        level = 'DEBUG' if config.verbose > 1 else 'INFO'
    logging.basicConfig(level=level, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    return run(config)


if __name__ == '__main__':
    sys.exit(main())
