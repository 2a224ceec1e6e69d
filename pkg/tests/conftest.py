import time

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=25)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled by test_acceptance.record()
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")


CYLINDER_DT = 0.5
CYLINDER_M = (1.0, 0.7, 0.4)


@pytest.fixture(scope="session")
def cylinder_reports():
    """SRP_im marched to steady state plus the SS-Mix reference, for each power index."""
    from srpflow.bench import BenchConfig, run_cylinder
    from srpflow.mesh import load_cylinder_mesh
    from srpflow.scheme import SchemeConfig

    mesh = load_cylinder_mesh()
    cfg = SchemeConfig.preset("SRP_im", dt=CYLINDER_DT, final_time=CYLINDER_DT)
    out = {}
    for m in CYLINDER_M:
        t0 = time.perf_counter()
        out[m] = run_cylinder(BenchConfig.carreau(m), cfg, mesh)
        print(f"cylinder m={m}: {time.perf_counter() - t0:.0f}s")
    return out
