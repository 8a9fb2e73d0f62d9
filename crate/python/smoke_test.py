#!/usr/bin/env python3
"""End-to-end smoke test of the noum_py extension module.

Builds the extension with cargo if needed, loads it, and checks a couple of
solver invariants on a small two-user instance: the 1-layer RS weighted sum
rate dominates MU-LP, the enumeration helpers return the expected counts, and
the EE solver produces a self-consistent report.

Run from the repository root:  python3 python/smoke_test.py
"""

import math
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def build_extension() -> Path:
    subprocess.run(
        ["cargo", "build", "-p", "noum-py"],
        cwd=REPO,
        check=True,
    )
    lib = REPO / "target" / "debug" / "libnoum_py.so"
    if not lib.exists():  # macOS
        lib = REPO / "target" / "debug" / "libnoum_py.dylib"
    if not lib.exists():
        sys.exit("extension library not found under target/debug")
    stage = Path(tempfile.mkdtemp(prefix="noum-py-"))
    shutil.copy(lib, stage / "noum_py.so")
    return stage


def main() -> None:
    sys.path.insert(0, str(build_extension()))
    import noum_py as noum

    system = noum.System(nt=4, users=2, snr_db=20.0)
    assert system.power_budget == 100.0 and system.users == 2

    channels = noum.specific_two_user(gamma=1.0, theta=2 * math.pi / 9, nt=4)
    assert channels.users == 2 and channels.nt == 4
    row = channels.estimate()[0]
    assert len(row) == 4 and abs(row[0][0] - 1.0) < 1e-12

    mulp = noum.solve_wsr("mu_lp", channels, system, qos_multicast=0.1)
    rs = noum.solve_wsr("rs_1layer", channels, system, qos_multicast=0.1)
    print(f"MU-LP wsr = {mulp.wsr:.4f} ({mulp.iterations} iterations)")
    print(f"1-layer RS wsr = {rs.wsr:.4f} ({rs.iterations} iterations)")
    assert mulp.converged and rs.converged
    assert rs.wsr >= mulp.wsr - 1e-6, "RS must dominate MU-LP"
    assert rs.multicast_rate >= 0.1 - 1e-6
    assert all(b >= a - 1e-8 for a, b in zip(rs.trace, rs.trace[1:])), "trace must be nondecreasing"
    assert abs(sum(rs.user_rates) - rs.wsr) < 1e-9  # unit weights

    ee = noum.solve_ee("mu_lp", channels, system, qos_unicast=[0.5, 0.5], qos_multicast=0.5)
    print(f"MU-LP ee = {ee.ee:.4f} bit/s/Hz per watt at {ee.total_power:.3f} W")
    assert ee.converged and ee.ee > 0.0
    numerator = ee.multicast_rate + sum(ee.user_rates)
    assert abs(ee.ee - numerator / ee.total_power) < 1e-9

    assert len(noum.enumerate_orders("sc_sic", 3)) == 6
    assert noum.socp_variable_count("rs_1layer", 3, 4) == 20
    assert noum.stream_count("rs_generalized", 3, 4) == 7

    csit = noum.with_csit_samples(channels, tau=0.6, power_budget=100.0, samples=10, seed=3)
    assert csit.samples == 10

    print("smoke test OK")


if __name__ == "__main__":
    main()
