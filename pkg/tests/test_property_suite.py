import pytest

from nltraffic.property_suite import (
    characteristic_errors,
    fixed_point_idempotence,
    fv_transport_errors,
    run_suite,
    write_report,
)
from nltraffic.scenario import build_problem, preset


def test_oracles_converge_at_expected_orders():
    fe = fv_transport_errors()
    assert all(a / b >= 1.8 for a, b in zip(fe, fe[1:]))
    ce = characteristic_errors()
    assert all(a / b >= 12 for a, b in zip(ce, ce[1:]))


def test_idempotence_helper():
    diff, tol = fixed_point_idempotence(build_problem(preset("bottleneck", cells=300)), t_end=0.3)
    assert diff <= 2 * tol


@pytest.mark.slow
def test_quick_suite_passes(tmp_path):
    checks = run_suite(quick=True)
    failed = [c.name for c in checks if not c.passed]
    assert not failed, failed
    names = {c.name for c in checks}
    assert {"comb-time-lipschitz", "characteristics-order", "fv-transport-order", "engine-agreement",
            "fixed-point-idempotent"} <= names
    assert sum(n.startswith("mass-balance/") for n in names) == 6
    text = write_report(checks, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == text
    assert len(text.splitlines()) == len(checks) + 1
