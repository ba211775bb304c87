"""Experiment orchestration: build, run, persist, verify.

Every run writes CSV data files plus two JSON sidecars: the fully resolved
configuration (byte-stable, reruns produce identical data files for the
same config and seed) and a metadata record with engine version, wall time,
and seeds.  CSV numbers are full-precision scientific notation with LF line
endings; headers name the columns and units (times in inverse coupling
units, frequencies angular).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .analysis import (
    contrast_ratio,
    correlator_order_expansion,
    entanglement_entropy,
    entropy_expansion,
    pca_slope,
    PointCloud2D,
    pump_probe_correlator,
    third_order_2dos,
)
from .config import ExperimentConfig, build_observable, to_json_dict
from .evolution import PulseSchedule, apply_kick, driven_signal, evolve
from .models import ModelSpec, build_model, build_pump, ground_state
from .pauli import DimensionCapError, OperatorSum
from .reference import finite_difference_derivative, nested_commutator_series
from .response import (
    MultiIndex,
    reconstruct_response,
    response_decomposition,
    rules_for_schedule,
)
from .sampling import allocate_shots, noisy_response, variance_bound_for_rules
from .shift_rules import rule_for_generator
from .spectra import response_spectrum, spectrum_2d, diagonal_offdiagonal_weight


def format_float(x: float) -> str:
    return f"{float(x):.17e}"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[float]]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", newline="\n")


@dataclass
class RunResult:
    output_dir: Path
    files: list[str]
    metadata: dict


def _materialize(config: ExperimentConfig):
    h = build_model(config.model)
    n = h.n_sites
    pumps = [(build_pump(c.pump, n), c.times) for c in config.pumps]
    schedule = PulseSchedule(pumps)
    observables = [(o.label(), build_observable(o, n)) for o in config.observables]
    psi0 = ground_state(h)
    return h, schedule, observables, psi0


def _emit_series_and_spectrum(out: Path, name: str, times, values, files: list[str], dt: float):
    write_csv(out / f"{name}.csv", ["t[1/J]", "value"], zip(times, values))
    files.append(f"{name}.csv")
    if times.size > 1 and dt > 0:
        spec = response_spectrum(values, dt=dt)
        write_csv(
            out / f"{name}_spectrum.csv",
            ["omega[J]", "magnitude", "real", "imag"],
            zip(spec.frequencies, spec.magnitudes, spec.amplitudes.real, spec.amplitudes.imag),
        )
        files.append(f"{name}_spectrum.csv")


def _run_response(config: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    h, schedule, observables, psi0 = _materialize(config)
    grid = config.time_grid.values()
    if sum(config.orders) == 0:
        # order zero: the unperturbed signal itself
        files = []
        for label, observable in observables:
            values = driven_signal(
                h, schedule, [0.0] * schedule.n_channels, observable, grid,
                config.evolver, psi0,
            )
            _emit_series_and_spectrum(
                out, f"response_m0_{label}", grid, values, files, config.time_grid.dt
            )
        return files, {"orders": list(config.orders)}
    beta = MultiIndex(config.orders)
    rules = rules_for_schedule(
        schedule, beta, n_shifts=config.shifts.n_shifts, mode=config.shifts.mode
    )
    files: list[str] = []
    meta: dict = {"orders": list(beta.beta), "n_configurations": None}
    tag = "m" + "-".join(str(b) for b in beta.beta)
    for label, observable in observables:
        series = reconstruct_response(
            h, schedule, observable, grid, beta, config.evolver, psi0, rules=rules
        )
        meta["n_configurations"] = series.metadata["n_configurations"]
        name = f"response_{tag}_{label}"
        _emit_series_and_spectrum(out, name, grid, series.values, files, config.time_grid.dt)
        if config.sampling is not None:
            plan_weights = np.ones(series.metadata["n_configurations"])
            plan = allocate_shots(
                plan_weights, config.sampling.total_shots, "uniform", seed=config.seed
            )
            if config.sampling.mode == "optimal":
                from .response import shift_configurations

                _, weights = shift_configurations(rules, beta)
                plan = allocate_shots(
                    weights, config.sampling.total_shots, "optimal", seed=config.seed
                )
            noisy, errors = noisy_response(
                h, schedule, observable, grid, beta, plan, config.evolver, psi0, rules
            )
            write_csv(
                out / f"{name}_sampled.csv",
                ["t[1/J]", "estimate", "std_error"],
                zip(grid, noisy.values, errors),
            )
            files.append(f"{name}_sampled.csv")
            meta["variance_bound"] = variance_bound_for_rules(
                rules, beta, config.sampling.total_shots, config.sampling.mode
            )
    return files, meta


def _run_decomposition(config: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    h, schedule, observables, psi0 = _materialize(config)
    label, observable = observables[0]
    grid = config.time_grid.values()
    files: list[str] = []
    per_eta_terms = {}
    per_eta_diff = {}
    basis = None
    for eta in config.eta_eval:
        terms, diff = response_decomposition(
            h,
            schedule,
            observable,
            grid,
            eta,
            config.max_order,
            config.evolver,
            psi0,
            n_shifts=config.shifts.n_shifts,
        )
        per_eta_terms[eta] = terms
        per_eta_diff[eta] = diff
        basis = terms[0].metadata["basis"]
    etas = list(config.eta_eval)
    for n in range(config.max_order + 1):
        header = ["t[1/J]"] + [f"A{n}[eta={e:g}]" for e in etas]
        rows = zip(grid, *(per_eta_terms[e][n].values for e in etas))
        write_csv(out / f"A{n}.csv", header, rows)
        files.append(f"A{n}.csv")
    header = ["t[1/J]"] + [f"diff[eta={e:g}]" for e in etas]
    write_csv(out / "diff.csv", header, zip(grid, *(per_eta_diff[e].values for e in etas)))
    files.append("diff.csv")
    meta = {
        "observable": label,
        "basis": basis,
        "max_abs_diff": {f"{e:g}": float(np.max(np.abs(per_eta_diff[e].values))) for e in etas},
    }
    return files, meta


def _sweep_correlator_orders(
    h: OperatorSum,
    pump: OperatorSum,
    probe_1: OperatorSum,
    probe_2: OperatorSum,
    t1s: np.ndarray,
    t2s: np.ndarray,
    orders: Sequence[int],
    eta_ref: float,
    kappa: float,
    psi0,
    evolver,
):
    """C^(n) and the contrast ratio over a (t1, t2) grid."""
    rule = rule_for_generator(pump, sorted(set(int(o) for o in orders)))
    order_values = {int(n): np.empty((t1s.size, t2s.size), dtype=complex) for n in orders}
    contrast = np.full((t1s.size, t2s.size), np.nan + 1j * np.nan, dtype=complex)
    excluded = 0
    for i, t1 in enumerate(t1s):
        for j, t2 in enumerate(t2s):
            sampler = lambda eta: pump_probe_correlator(
                h, pump, probe_1, probe_2, float(t1), float(t2), eta, psi0, evolver
            )
            expansion = correlator_order_expansion(sampler, rule, orders, eta_ref)
            for n, v in expansion.items():
                order_values[n][i, j] = v
            c0 = sampler(0.0)
            ck = sampler(kappa)
            try:
                contrast[i, j] = contrast_ratio(ck, c0)
            except Exception:
                excluded += 1
    return order_values, contrast, excluded


def _run_pump_probe(config: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    h = build_model(config.model)
    n = h.n_sites
    pump = build_pump(config.pumps[0].pump, n)
    probe_1 = OperatorSum((_string_term(config.probe_1),), n)
    probe_2 = OperatorSum((_string_term(config.probe_2),), n)
    psi0 = ground_state(h)
    t1s = (config.t1_grid or config.time_grid).values()
    t2s = (config.t3_grid or config.time_grid).values()
    orders = sorted(set(int(o) for o in config.orders)) or [1, 3, 5]
    order_values, contrast, excluded = _sweep_correlator_orders(
        h, pump, probe_1, probe_2, t1s, t2s, orders, config.eta_ref, config.kappa,
        psi0, config.evolver,
    )
    files: list[str] = []
    rows = []
    for i, t1 in enumerate(t1s):
        for j, t2 in enumerate(t2s):
            row = [t1, t2]
            for m in orders:
                row.extend([order_values[m][i, j].real, order_values[m][i, j].imag])
            rows.append(row)
    header = ["t1[1/J]", "t2[1/J]"]
    for m in orders:
        header.extend([f"reC{m}", f"imC{m}"])
    write_csv(out / "correlator_orders.csv", header, rows)
    files.append("correlator_orders.csv")
    write_csv(
        out / "contrast.csv",
        ["t1[1/J]", "t2[1/J]", "reR", "imR"],
        (
            [t1, t2, contrast[i, j].real, contrast[i, j].imag]
            for i, t1 in enumerate(t1s)
            for j, t2 in enumerate(t2s)
        ),
    )
    files.append("contrast.csv")
    finite = contrast[np.isfinite(contrast.real)]
    if finite.size:
        lo, hi = float(finite.real.min()), float(finite.real.max())
        if hi - lo < 1e-12:  # constant contrast: center one unit-width bin
            lo, hi = lo - 0.5, hi + 0.5
        counts, edges = np.histogram(finite.real, bins=41, range=(lo, hi))
        write_csv(
            out / "contrast_hist.csv",
            ["bin_left", "bin_right", "count"],
            zip(edges[:-1], edges[1:], counts.astype(float)),
        )
        files.append("contrast_hist.csv")
    slopes = {}
    quadratures = {}
    pairs = [(a, b) for a, b in zip(orders, orders[1:])]
    for a, b in pairs:
        slope, quadrature = _order_pair_slope(order_values[a], order_values[b], a, b)
        slopes[f"s{a}{b}"] = slope
        quadratures[f"s{a}{b}"] = quadrature
        write_csv(
            out / f"cloud_c{a}_c{b}.csv",
            [f"reC{a}", f"reC{b}"],
            zip(order_values[a].real.ravel(), order_values[b].real.ravel()),
        )
        files.append(f"cloud_c{a}_c{b}.csv")
    meta = {
        "excluded_contrast_points": excluded,
        "pca_slopes": slopes,
        "pca_quadratures": quadratures,
        "mean_contrast": [float(np.nanmean(finite.real)), float(np.nanmean(finite.imag))]
        if finite.size
        else None,
    }
    return files, meta


def _string_term(factors):
    from .pauli import PauliTerm

    return PauliTerm(1.0, dict(factors))


def _order_pair_slope(values_a, values_b, a, b) -> tuple[float, str]:
    """Principal-axis slope of an order pair, real quadrature preferred.

    Probe products carrying an overall factor i put the signal entirely in
    the imaginary parts; fall back to that quadrature when the real parts
    are degenerate.
    """
    for quadrature, xs, ys in (
        ("real", values_a.real, values_b.real),
        ("imag", values_a.imag, values_b.imag),
    ):
        try:
            cloud = PointCloud2D(
                np.column_stack([xs.ravel(), ys.ravel()]), (f"C{a}", f"C{b}")
            )
            return pca_slope(cloud), quadrature
        except Exception:
            continue
    return float("nan"), "none"


def _sweep_point(args):
    (model_dict, boundary, g, pump_spec, p1, p2, t1_list, t2_list,
     orders, eta_ref, kappa, evolver) = args
    params = dict(model_dict)
    params["j_plaquette"] = g
    model = ModelSpec("toric_code", params, boundary)
    h = build_model(model)
    n = h.n_sites
    pump = build_pump(pump_spec, n)
    probe_1 = OperatorSum((_string_term(p1),), n)
    probe_2 = OperatorSum((_string_term(p2),), n)
    psi0 = ground_state(h)
    t1s = np.asarray(t1_list)
    t2s = np.asarray(t2_list)
    order_values, _, _ = _sweep_correlator_orders(
        h, pump, probe_1, probe_2, t1s, t2s, orders, eta_ref, kappa, psi0, evolver
    )
    slopes = []
    for a, b in zip(orders, orders[1:]):
        slope, _ = _order_pair_slope(order_values[a], order_values[b], a, b)
        slopes.append(slope)
    return g, slopes


def _run_sweep(config: ExperimentConfig, out: Path, threads: int) -> tuple[list[str], dict]:
    if config.model.kind != "toric_code":
        raise ValueError("the coupling sweep protocol targets the toric-code model")
    g_values = config.sweep_values or tuple(np.linspace(-1.0, 1.0, 21))
    t1s = (config.t1_grid or config.time_grid).values()
    t2s = (config.t3_grid or config.time_grid).values()
    orders = sorted(set(int(o) for o in config.orders)) or [1, 3, 5]
    jobs = [
        (
            dict(config.model.parameters),
            config.model.boundary,
            float(g),
            config.pumps[0].pump,
            config.probe_1,
            config.probe_2,
            list(t1s),
            list(t2s),
            orders,
            config.eta_ref,
            config.kappa,
            config.evolver,
        )
        for g in g_values
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    pair_names = [f"s{a}{b}" for a, b in zip(orders, orders[1:])]
    write_csv(
        out / "s35_vs_g.csv",
        ["g"] + pair_names,
        ([g] + slopes for g, slopes in results),
    )
    return ["s35_vs_g.csv"], {"orders": orders, "n_g": len(results)}


def _run_2dos(config: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    h = build_model(config.model)
    n = h.n_sites
    pump = build_pump(config.pumps[0].pump, n)
    if config.observables:
        observable = build_observable(config.observables[0], n)
    else:
        from .pauli import PauliTerm

        observable = OperatorSum(
            tuple(PauliTerm(1.0, {i: "X"}) for i in range(min(2, n))), n
        )
    psi0 = ground_state(h)
    t1_grid = config.t1_grid or config.time_grid
    t3_grid = config.t3_grid or config.time_grid
    t1s = t1_grid.values()
    t3s = t3_grid.values()
    s3 = third_order_2dos(
        h, observable, pump, config.t2, t1s, t3s, psi0, config.evolver, config.method
    )
    files = []
    write_csv(
        out / "s3_time.csv",
        ["t1[1/J]", "t3[1/J]", "S3"],
        ([t1, t3, s3[i, j]] for i, t1 in enumerate(t1s) for j, t3 in enumerate(t3s)),
    )
    files.append("s3_time.csv")
    spec = spectrum_2d(s3, t1_grid.dt, t3_grid.dt)
    write_csv(
        out / "s3_spectrum.csv",
        ["omega1[J]", "omega3[J]", "magnitude"],
        (
            [w1, w3, spec.magnitudes[i, j]]
            for i, w1 in enumerate(spec.frequencies_1)
            for j, w3 in enumerate(spec.frequencies_2)
        ),
    )
    files.append("s3_spectrum.csv")
    p_diag, p_off = diagonal_offdiagonal_weight(spec)
    write_csv(out / "spectral_weights.csv", ["p_diag", "p_off"], [[p_diag, p_off]])
    files.append("spectral_weights.csv")
    meta = {
        "p_diag": p_diag,
        "p_off": p_off,
        "off_fraction": p_off / (p_diag + p_off) if p_diag + p_off > 0 else 0.0,
        "method": config.method,
    }
    return files, meta


def _run_entropy(config: ExperimentConfig, out: Path) -> tuple[list[str], dict]:
    h, schedule, _, psi0 = _materialize(config)
    n = h.n_sites
    pump, _ = schedule.channels[0]
    block = config.block_size or n // 2
    eta_grid = np.asarray(config.eta_grid or np.linspace(-0.03, 0.03, 7))
    files: list[str] = []

    entropies = []
    for eta in eta_grid:
        state = apply_kick(pump, float(eta), psi0)
        if config.entropy_time:
            state = evolve(h, state, config.entropy_time, config.evolver)
        entropies.append(entanglement_entropy(state, block))
    write_csv(out / "entropy_vs_eta.csv", ["eta", f"S_{block}"], zip(eta_grid, entropies))
    files.append("entropy_vs_eta.csv")

    expansion = entropy_expansion(
        h, pump, psi0, eta_grid, config.entropy_time, block, config.max_order, config.evolver
    )
    write_csv(
        out / "entropy_coefficients.csv",
        ["order", "coefficient"],
        enumerate(expansion.coefficients),
    )
    files.append("entropy_coefficients.csv")

    eta_ref = config.eta_eval[0]
    profile = []
    state = apply_kick(pump, eta_ref, psi0)
    if config.entropy_time:
        state = evolve(h, state, config.entropy_time, config.evolver)
    for d in range(1, n):
        profile.append([d, entanglement_entropy(state, d)])
    write_csv(out / "entropy_profile.csv", ["block_size", "S_d"], profile)
    files.append("entropy_profile.csv")

    meta = {
        "block_size": block,
        "fit_condition_number": expansion.condition_number,
        "fit_residual": expansion.residual,
    }
    if config.delta_values and config.model.kind == "xxz":
        rows = []
        half_rows = []
        for delta in config.delta_values:
            params = dict(config.model.parameters)
            params["delta"] = float(delta)
            h_d = build_model(ModelSpec("xxz", params, config.model.boundary))
            psi_d = ground_state(h_d)
            exp_d = entropy_expansion(
                h_d, pump, psi_d, eta_grid, config.entropy_time, block,
                config.max_order, config.evolver,
            )
            rows.append([delta] + list(exp_d.coefficients))
            state = apply_kick(pump, eta_ref, psi_d)
            if config.entropy_time:
                state = evolve(h_d, state, config.entropy_time, config.evolver)
            half_rows.append([delta, entanglement_entropy(state, block)])
        write_csv(
            out / "entropy_coeffs_vs_delta.csv",
            ["delta"] + [f"S{k}" for k in range(config.max_order + 1)],
            rows,
        )
        files.append("entropy_coeffs_vs_delta.csv")
        write_csv(out / "entropy_half_vs_delta.csv", ["delta", f"S_{block}"], half_rows)
        files.append("entropy_half_vs_delta.csv")
    return files, meta


def run_experiment(
    config: ExperimentConfig,
    output_dir: str | Path | None = None,
    threads: int = 1,
    seed: int | None = None,
) -> RunResult:
    """Execute a validated config and persist all artifacts."""
    if seed is not None:
        config = _replace_seed(config, seed)
    out = Path(output_dir if output_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    _write_json(out / "resolved_config.json", to_json_dict(config))
    runners: dict[str, Callable] = {
        "response": lambda: _run_response(config, out),
        "decomposition": lambda: _run_decomposition(config, out),
        "pump_probe": lambda: _run_pump_probe(config, out),
        "sweep": lambda: _run_sweep(config, out, threads),
        "2dos": lambda: _run_2dos(config, out),
        "entropy": lambda: _run_entropy(config, out),
    }
    files, meta = runners[config.protocol]()
    metadata = {
        "engine_version": __version__,
        "protocol": config.protocol,
        "seed": config.seed,
        "threads": threads,
        "wall_time_s": time.perf_counter() - start,
        "files": files,
        **meta,
    }
    _write_json(out / "run_metadata.json", metadata)
    return RunResult(out, files + ["resolved_config.json", "run_metadata.json"], metadata)


def _replace_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    from dataclasses import replace

    return replace(config, seed=seed)


def verify_experiment(
    config: ExperimentConfig,
    tolerance: float = 1e-8,
    max_order: int = 5,
    n_times: int = 11,
    coefficient_perturbation: float = 0.0,
) -> dict:
    """Cross-check the shift-rule reconstruction against the commutator route.

    Returns a report with per-order maximum deviations (plus the
    finite-difference baseline at low orders) and a pass flag; used by the
    CLI `verify` subcommand.  ``coefficient_perturbation`` deliberately
    corrupts the reconstruction weights (test hook for the failure path).
    """
    h, schedule, observables, psi0 = _materialize(config)
    if h.n_sites > 10:
        raise DimensionCapError(
            f"oracle unavailable: verification needs <= 10 sites, model has {h.n_sites}"
        )
    if schedule.n_channels != 1:
        raise ValueError("verification uses a single-channel pulse schedule")
    label, observable = observables[0]
    generator, times = schedule.channels[0]
    if len(times) != 1:
        raise ValueError("verification uses a single pulse")
    grid = np.linspace(config.time_grid.start, config.time_grid.stop, n_times)
    grid = grid[grid >= times[0]]
    rows = []
    worst = 0.0
    for m in range(1, max_order + 1):
        rule = rule_for_generator(generator, [m])
        if coefficient_perturbation:
            from .shift_rules import ShiftRule

            corrupted = rule.coefficients[m].copy()
            corrupted[0] += coefficient_perturbation
            coeffs = {m: corrupted}
            rule = ShiftRule(
                rule.shifts, coeffs, rule.gap_set, rule.residuals,
                rule.condition_number, rule.basis,
            )
        series = reconstruct_response(
            h, schedule, observable, grid, MultiIndex([m]), config.evolver, psi0,
            rules={0: rule},
        )
        oracle = nested_commutator_series(
            h, observable, [(generator, times[0])] * m, grid, psi0, config.evolver
        )
        dev = float(np.max(np.abs(series.values - oracle)))
        worst = max(worst, dev)
        fd_dev = None
        if m <= 2:
            fd_devs = []
            for t in grid[:: max(1, len(grid) // 4)]:
                sampler = lambda eta: driven_signal(
                    h, schedule, [eta], observable, [t], config.evolver, psi0
                )[0]
                fd = finite_difference_derivative(sampler, m, 1e-3)
                import math

                target = nested_commutator_series(
                    h, observable, [(generator, times[0])] * m, [t], psi0, config.evolver
                )[0]
                fd_devs.append(abs(fd.refined / math.factorial(m) - target))
            fd_dev = float(max(fd_devs))
        rows.append(
            {
                "order": m,
                "max_abs_shift_rule_minus_commutator": dev,
                "max_abs_fd_minus_commutator": fd_dev,
                "oracle_scale": float(np.max(np.abs(oracle))),
            }
        )
    return {
        "observable": label,
        "tolerance": tolerance,
        "orders": rows,
        "max_deviation": worst,
        "passed": bool(worst < tolerance),
    }
