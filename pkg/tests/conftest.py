"""Shared fixtures and the acceptance-criteria summary hook."""

import numpy as np
import pytest

CRITERIA = {
    1: "order conditions hold for all registry methods; two-stage third order infeasible",
    2: "LEM values for ruth, aks3, os437-minlem to two significant figures",
    3: "three-stage family reproduces aks3 and rejects excluded parameters",
    4: "one FSRK step matches the stability function on the scalar linear pair",
    5: "adjoint/ordering identity R_DR(method) = R_RD(adjoint) on a complex window",
    6: "xhat ordering rankings at eigenvalue ratio 1.92/1260, including +negfe",
    7: "xhat ratio minx-DR over ruth-RD predicts the reported stable-step ratio",
    8: "convergence slopes on the noncommuting linear problem",
    9: "benchmark largest-stable-dt rankings match xhat; +negfe never costlier per step",
    10: "optimizer recovers the minimum-LEM and minimum-xhat designs",
}

ACCEPTANCE = {}


def record_acceptance(num, ok, detail=""):
    ACCEPTANCE[num] = (bool(ok), str(detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        if num in ACCEPTANCE:
            ok, detail = ACCEPTANCE[num]
            status = "PASS" if ok else "FAIL"
        else:
            status, detail = "NOT RUN", ""
        line = f"criterion {num:2d}: {status} - {CRITERIA[num]}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def ref_cache_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("refcache")
