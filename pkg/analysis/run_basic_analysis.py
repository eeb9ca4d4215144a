"""
run_basic_analysis.py

Quick script to try our analysis functions on a small fault-free sweep.

It prints:
- the per-height volume of each run next to the closed form 5(n-1)
- the log-log exponents of LinBFT and of the all-to-all baseline
- the amortized epoch setup cost per block
- leader prefix statistics for Modular mode

"""

import sys
from pathlib import Path

# Make the project root importable when the script runs from analysis/.
PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from complexity import (  # noqa: E402
    build_complexity_report,
    leader_prefix_frequencies,
    setup_table,
)
from linbft import ScenarioConfig, run_scenario  # noqa: E402
from linbft.errors import DegenerateSweep  # noqa: E402

N_VALUES = [4, 7, 10, 16]


def main():
    """Run a small sweep and print the summary tables.

    This function demonstrates how to:
    - build scenario configs in code
    - run the simulator
    - feed the reports into the complexity helpers
    """

    # 1) One short fault-free run per n.
    reports = []
    for n in N_VALUES:
        config = ScenarioConfig(name=f"quick-n{n}", n=n, num_heights=3, seed=1)
        reports.append(run_scenario(config))

    # 2) Per-run verdicts.
    print("=== Runs ===")
    for report in reports:
        print(f"n={report.n}: safety={report.safety_ok} liveness={report.liveness_ok} "
              f"per-height={report.per_height_volume()}")
    print()

    # 3) Exponents across the sweep.
    try:
        complexity = build_complexity_report(reports)
        print("=== Volume per height ===")
        print(complexity.frame())
        print()
        print(f"LinBFT exponent: {complexity.slope_fit:.3f}")
        print(f"PBFT baseline exponent: {complexity.baseline_slope:.3f}")
        print()
    except DegenerateSweep as exc:
        print("[WARN] Could not fit the sweep:", exc)
        print()

    # 4) Setup cost spread over an epoch of 4n blocks.
    print("=== Amortized setup (E = 4n) ===")
    print(setup_table([4, 16, 64, 256]))
    print()

    # 5) How often does a run of malicious leaders open a height?
    print("=== Malicious leader prefixes, Modular mode, n=9, 3 corrupted ===")
    print(leader_prefix_frequencies(9, {0, 1, 2}, heights=5000))
    print()


if __name__ == "__main__":
    # When we run this file directly with:
    #     python run_basic_analysis.py
    # the main() function will be executed.
    main()
