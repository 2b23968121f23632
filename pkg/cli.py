import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import click
import numpy as np

from circuit_ir import dump_schedule, validate_schedule
from config import ENUMERATION_LIMIT, configure_logging, load_settings
from errors import ParseError, PlacementError, SimulationCapError, UnsupportedError
from instances import (
    ProblemKind,
    SET_KINDS,
    complement,
    enumerate_solutions,
    evaluate_batch,
    lower,
    parse_dimacs_cnf,
    parse_edge_list,
    parse_set_system,
    random_instance,
    regularize,
)
from layout import geometry_dump, transpile
from metrics import REGIMES, l_scaling_experiment, merge_depth_table, resource_report, sc_compare
from sim import amplitude_dump, closed_form_probability, grover_success_probability, optimal_iterations, simulate

logger = logging.getLogger(__name__)

# Exit codes
EXIT_PARSE = 2
EXIT_UNSUPPORTED = 3
EXIT_CAP = 4

KIND_CHOICE = click.Choice([kind.value for kind in ProblemKind], case_sensitive=False)


def _fail(message: str, code: int) -> None:
    click.echo(f"❌ {message}", err=True)
    sys.exit(code)


def parse_values(text: str) -> List[int]:
    """'2,3,4' lists values; 'a..b' doubles from a up to b."""
    try:
        if ".." in text:
            low, _, high = text.partition("..")
            low, high = int(low), int(high)
            if low < 1 or high < low:
                raise ValueError
            values = []
            while low <= high:
                values.append(low)
                low *= 2
            return values
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UnsupportedError(f"invalid range {text!r}")
    if not values or min(values) < 1:
        raise UnsupportedError(f"invalid range {text!r}")
    return values


def _check_width(free: int, cap: int) -> None:
    # solution counting enumerates every free assignment, so it shares the cap
    cap = min(cap, ENUMERATION_LIMIT)
    if free > cap:
        raise SimulationCapError(free, cap)


def load_instance(path: str, kind: str, k1: Optional[int], k2: Optional[int], do_complement: bool):
    kind = ProblemKind(kind.upper())
    text = Path(path).read_text()
    if kind == ProblemKind.SAT:
        instance = parse_dimacs_cnf(text)
    elif kind in SET_KINDS:
        instance = parse_set_system(text, kind)
    else:
        instance = parse_edge_list(text, kind)
    instance = instance.with_thresholds(k1, k2)
    if do_complement:
        instance = complement(instance)
    return regularize(instance)


def _pipeline_options(fn):
    options = [
        click.option("--kind", required=True, type=KIND_CHOICE, help="Problem kind"),
        click.option("--k1", type=int, default=None, help="First threshold"),
        click.option("--k2", type=int, default=None, help="Second threshold (KSP value bound)"),
        click.option("--complement", "do_complement", is_flag=True, help="Use the complement graph"),
        click.option("--variant-threshold", type=float, default=None, help="Pack-wise oracle when N/n exceeds this"),
        click.option("--heaviside", type=click.Choice(["inclusive", "strict"]), default=None),
        click.option("--seed", type=int, default=None),
        click.option("--max-sim-qubits", type=int, default=None),
        click.option("--out", type=click.Path(file_okay=False), default=".", help="Directory for output files"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
def main():
    """Grover solver compiler and simulator for Rydberg tensor-grid arrays."""
    configure_logging(load_settings().log_level)


@main.command("compile")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@_pipeline_options
@click.option("--geometry", is_flag=True, help="Also write atom positions after every step")
def cmd_compile(path, kind, k1, k2, do_complement, variant_threshold, heaviside, seed, max_sim_qubits, out,
                geometry):
    """Transpile an instance and write its schedule and resource report."""
    settings = load_settings(heaviside=heaviside, seed=seed, max_sim_qubits=max_sim_qubits,
                             variant_threshold=variant_threshold)
    try:
        instance = load_instance(path, kind, k1, k2, do_complement)
        system = lower(instance, settings.strict)
        schedule = transpile(system, 1, settings.variant_threshold)
    except ParseError as e:
        _fail(f"parse error: {e}", EXIT_PARSE)
    except (UnsupportedError, PlacementError) as e:
        _fail(str(e), EXIT_UNSUPPORTED)

    report = resource_report(schedule, system)
    validation = validate_schedule(schedule)
    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    stem = Path(path).stem
    (target / f"{stem}.schedule.json").write_text(dump_schedule(schedule))
    (target / f"{stem}.report.json").write_text(json.dumps(
        {"report": report.model_dump(mode="json"), "validation": validation.model_dump()}, indent=2))
    if geometry:
        (target / f"{stem}.geometry.json").write_text(json.dumps(geometry_dump(schedule)))

    click.echo(f"{'✅' if validation.ok else '❌'} {system.kind.value}: n={system.n} N={system.N} t={system.t}")
    click.echo(f"qubits {report.measured.qubits} (predicted {report.predicted_qubits}), "
               f"depth {report.measured.depth}, transports {report.measured.transports}")
    click.echo(f"checking pass moves {report.check_data_transports} data qubits (bound {report.transport_bound})")


@main.command("solve")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@_pipeline_options
@click.option("--top", type=int, default=5, help="Assignments to print")
@click.option("--amplitudes", is_flag=True, help="Also write the final state as index real imag lines")
def cmd_solve(path, kind, k1, k2, do_complement, variant_threshold, heaviside, seed, max_sim_qubits, out, top,
              amplitudes):
    """Run Grover at the optimal iteration count on the transpiled schedule."""
    settings = load_settings(heaviside=heaviside, seed=seed, max_sim_qubits=max_sim_qubits,
                             variant_threshold=variant_threshold)
    try:
        instance = load_instance(path, kind, k1, k2, do_complement)
        system = lower(instance, settings.strict)
        free = len(system.free_variables)
        _check_width(free, settings.max_sim_qubits)
        solutions = len(enumerate_solutions(system))
        rounds = optimal_iterations(free, solutions)
        schedule = transpile(system, rounds, settings.variant_threshold)
        state = simulate(schedule, cap=settings.max_sim_qubits)
    except ParseError as e:
        _fail(f"parse error: {e}", EXIT_PARSE)
    except (UnsupportedError, PlacementError) as e:
        _fail(str(e), EXIT_UNSUPPORTED)
    except SimulationCapError as e:
        _fail(f"{e}; use `compile` for a schedule without simulation", EXIT_CAP)

    n = system.n
    mask = (1 << n) - 1
    weights = {}
    for index, amplitude in state.nonzero():
        if index >> n:
            continue
        weights[index & mask] = weights.get(index & mask, 0.0) + abs(amplitude) ** 2
    ranked = sorted(weights.items(), key=lambda item: (-item[1], item[0]))
    z = np.array([[(index >> v) & 1 for v in range(n)] for index, _ in ranked], dtype=np.int8).reshape(-1, n)
    satisfied = evaluate_batch(system, z) if len(ranked) else np.zeros(0, dtype=bool)
    probability = float(sum(p for (_, p), ok in zip(ranked, satisfied) if ok))

    click.echo(f"{system.kind.value}: {free} free variables, M={solutions}, r*={rounds}")
    click.echo(f"success probability {probability:.6f} (closed form {closed_form_probability(free, solutions, rounds):.6f})")
    if not solutions:
        click.echo("❌ no solution found")
    best = []
    for (index, p), ok in list(zip(ranked, satisfied))[:top]:
        bits = "".join(str((index >> v) & 1) for v in range(n))
        best.append({"assignment": bits, "probability": p, "satisfies": bool(ok)})
        click.echo(f"{'✅' if ok else '❌'} {bits}  p={p:.6f}")

    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    (target / f"{Path(path).stem}.solution.json").write_text(json.dumps({
        "kind": system.kind.value,
        "free_variables": free,
        "solutions": solutions,
        "iterations": rounds,
        "success_probability": probability,
        "closed_form": closed_form_probability(free, solutions, rounds),
        "top": best,
    }, indent=2))
    if amplitudes:
        (target / f"{Path(path).stem}.amplitudes.txt").write_text(amplitude_dump(state) + "\n")


@main.group("experiment")
def cmd_experiment():
    """Seeded data tables for external plotting."""


def _write_table(rows: List[dict], columns: List[str], out: Optional[str]) -> None:
    lines = [" ".join(columns)]
    for row in rows:
        lines.append(" ".join(f"{row[c]:.6f}" if isinstance(row[c], float) else str(row[c]) for c in columns))
    click.echo("\n".join(lines))
    if out:
        Path(out).write_text(json.dumps(rows, indent=2))


@cmd_experiment.command("l_scaling")
@click.option("--t", "t_values", default="2,3,4")
@click.option("--n", "n_values", default="32..512")
@click.option("--regime", type=click.Choice(sorted(REGIMES)), default="4n")
@click.option("--trials", type=int, default=20)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_l_scaling(t_values, n_values, regime, trials, seed, out):
    """Greedy matching count L against tN/n."""
    seed = load_settings(seed=seed).seed
    try:
        ts, ns = parse_values(t_values), parse_values(n_values)
        if trials < 1:
            raise UnsupportedError("trials must be positive")
        rows = [row.model_dump() for t in ts
                for row in l_scaling_experiment(t, ns, REGIMES[regime], trials, seed)]
    except (UnsupportedError, ValueError) as e:
        _fail(str(e), EXIT_UNSUPPORTED)
    _write_table(rows, ["n", "N", "t", "L_mean", "L_std", "L_norm"], out)


@cmd_experiment.command("grover_sweep")
@click.option("--kind", type=KIND_CHOICE, default="SAT")
@click.option("--n", "n_values", default="4..8")
@click.option("--seed", type=int, default=None)
@click.option("--max-sim-qubits", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_grover_sweep(kind, n_values, seed, max_sim_qubits, out):
    """Simulated success probability at r* against the closed form."""
    settings = load_settings(seed=seed, max_sim_qubits=max_sim_qubits)
    rows = []
    try:
        for n in parse_values(n_values):
            rng = np.random.default_rng([settings.seed, n])
            system = lower(regularize(random_instance(ProblemKind(kind.upper()), n, rng)), settings.strict)
            free = len(system.free_variables)
            _check_width(free, settings.max_sim_qubits)
            solutions = len(enumerate_solutions(system))
            rounds = optimal_iterations(free, solutions)
            rows.append({
                "n": system.n,
                "M": solutions,
                "r": rounds,
                "p_sim": grover_success_probability(system, rounds, cap=settings.max_sim_qubits),
                "p_closed": closed_form_probability(free, solutions, rounds),
            })
    except UnsupportedError as e:
        _fail(str(e), EXIT_UNSUPPORTED)
    except SimulationCapError as e:
        _fail(str(e), EXIT_CAP)
    _write_table(rows, ["n", "M", "r", "p_sim", "p_closed"], out)


@cmd_experiment.command("merge_depth")
@click.option("--n", "n_values", default="2..1024")
@click.option("--width", type=int, default=1, help="Register width of the adder inputs")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_merge_depth(n_values, width, out):
    """Placed tree and adder merge depth against the log N and log^2 N predictions."""
    try:
        ns = parse_values(n_values)
        if width < 1:
            raise UnsupportedError("width must be positive")
        rows = [row.model_dump() for row in merge_depth_table(ns, width)]
    except (UnsupportedError, PlacementError) as e:
        _fail(str(e), EXIT_UNSUPPORTED)
    _write_table(rows, ["N", "qbt_layers", "qbt_predicted", "qra_layers", "qra_predicted"], out)


@cmd_experiment.command("sc_compare")
@click.option("--kind", type=click.Choice(["MIS", "mis"]), default="MIS")
@click.option("--n", "n_values", default="16..64")
@click.option("--density", type=int, default=4)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def cmd_sc_compare(kind, n_values, density, seed, out):
    """Square-lattice swap and merge-depth model next to the tree depth."""
    seed = load_settings(seed=seed).seed
    try:
        ns = parse_values(n_values)
        if density < 1 or any(density * n > n * (n - 1) // 2 for n in ns):
            raise UnsupportedError(f"density {density} does not fit every graph size")
    except UnsupportedError as e:
        _fail(str(e), EXIT_UNSUPPORTED)
    rows = [e.model_dump() for e in sc_compare(ns, density, seed)]
    _write_table(rows, ["n", "N", "swaps", "merge_depth", "rydberg_merge_depth"], out)


if __name__ == "__main__":
    main()
