import pytest

from carnot_tangent.fixtures import abelian, engel, heisenberg, heisenberg_polarized, perturbed
from carnot_tangent.verify import CHECKS, run_verification

CASES = {
    "heisenberg": heisenberg,
    "heisenberg_polarized": heisenberg_polarized,
    "engel": engel,
    "abelian": abelian,
    "heisenberg_perturbed": lambda: perturbed(heisenberg(), seed=100),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_all_checks_pass(name):
    report = run_verification(CASES[name](), name)
    failed = [(c.name, c.detail) for c in report.checks if c.status == "fail"]
    assert not failed
    assert report.ok
    assert len(report.checks) == len(CHECKS)


def test_report_layout():
    report = run_verification(heisenberg(), "heisenberg")
    data = report.to_json()
    assert data["structure"] == "heisenberg"
    names = [c["name"] for c in data["checks"]]
    assert len(set(names)) == len(names)
    assert all(c["citation"] for c in data["checks"])
    assert all(c["status"] in ("pass", "fail", "skipped") for c in data["checks"])
    table = report.table()
    assert table.splitlines()[0].startswith("check")
    assert table.splitlines()[-1] == f"{len(names)} passed, 0 failed, 0 skipped"


def test_report_is_deterministic():
    a = run_verification(engel(), "engel").to_json()
    b = run_verification(engel(), "engel").to_json()
    assert a == b


def test_parallel_matches_serial():
    a = run_verification(heisenberg(), "h", jobs=1).to_json()
    b = run_verification(heisenberg(), "h", jobs=3).to_json()
    assert a == b


def test_failing_structure_reports_failure():
    # order too low for the exponential chart: the pipeline itself fails
    report = run_verification(heisenberg(order=2), "low order")
    assert not report.ok
    failed = [c for c in report.checks if c.status == "fail"]
    assert failed and all(c.detail for c in failed)
