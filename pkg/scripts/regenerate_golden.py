#!/usr/bin/env python3
"""Regenerate the exact-propagator reference curves for the hardware-demo
configurations (fourth-order two-site magnetization, fourth-order spin
current, two-pulse fifth-order transverse spin on the 12-site chain).

The committed CSVs under tests/golden/ are byte-stable regression anchors;
rerun this script only when the engine's conventions deliberately change.
"""

from pathlib import Path

import numpy as np

from nlspec.config import build_observable, ObservableSpec
from nlspec.evolution import EXACT, PulseSchedule
from nlspec.models import build_xxz, ground_state
from nlspec.pauli import OperatorSum, PauliTerm
from nlspec.response import MultiIndex, reconstruct_response
from nlspec.runner import write_csv

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "tests" / "golden"


def golden_cases():
    h = build_xxz(12, 0.0, 0.75)
    psi = ground_state(h)
    pump = OperatorSum((PauliTerm(1.0, {3: "X"}),), 12)
    grid = np.linspace(0.0, 5.0, 51)
    two_site = build_observable(ObservableSpec("two_site_magnetization", sites=(3, 4)), 12)
    current = build_observable(ObservableSpec("spin_current", sites=(3, 4), axis="Z"), 12)
    x3 = build_observable(ObservableSpec("single_site_pauli", sites=(3,), axis="X"), 12)
    single = PulseSchedule([(pump, [0.0])])
    double = PulseSchedule([(pump, [0.0]), (pump, [1.0])])
    yield "fig3a_chi4_two_site_magnetization_exact", h, single, two_site, MultiIndex([4]), psi, grid
    yield "fig3b_chi4_spin_current_exact", h, single, current, MultiIndex([4]), psi, grid
    yield "fig3c_chi5_transverse_exact", h, double, x3, MultiIndex([3, 2]), psi, grid


def main() -> None:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    for name, h, schedule, observable, beta, psi, grid in golden_cases():
        series = reconstruct_response(h, schedule, observable, grid, beta, EXACT, psi)
        path = GOLDEN_DIR / f"{name}.csv"
        write_csv(path, ["t[1/J]", "chi"], zip(grid, series.values))
        print(f"wrote {path} (max |chi| = {np.max(np.abs(series.values)):.6g})")


if __name__ == "__main__":
    main()
