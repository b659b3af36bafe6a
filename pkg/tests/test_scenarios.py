import dataclasses

import pytest

from diracflow.config import parse_config
from diracflow.scenarios import Scenario, get_scenario, list_scenarios, run_all

REQUIRED = {"free-plane-wave", "rest-superposition-zitterbewegung", "gaussian-free", "constant-E-1d",
            "constant-B-2d-pauli", "pauli-limit-sweep", "classical-hyperbolic", "classical-gyro",
            "csymmetric-charge-check"}

# residual names that witness each acceptance criterion
COVERAGE = {
    1: {"norm_drift", "continuity_iota"}, 2: {"gordon", "spin_divergence"}, 3: {"flux_sum"},
    4: {"imag_upper", "imag_lower", "imag_sum"}, 5: {"phi_dominant", "phi_minority_oracle", "phi_constant_V"},
    6: {"normalization", "uncorrected_ratio", "v0_violations"}, 7: {"conservation_mismatch", "charge_residual"},
    8: {"zitter_frequency_error"}, 9: {"pauli_ratio"}, 10: {"precession_error"},
    11: {"hyperbolic_error", "gyro_error", "fundamental_order", "hj_relativistic", "hj_nonrelativistic"},
}


def test_catalog_contents():
    names = {s.name for s in list_scenarios()}
    assert len(names) >= 9 and REQUIRED <= names


def test_every_scenario_is_documented_and_budgeted():
    for s in list_scenarios():
        assert s.description and s.budget > 0 and s.expected


def test_catalog_covers_acceptance():
    gated = set().union(*(s.expected for s in list_scenarios()))
    for crit, names in COVERAGE.items():
        assert names <= gated, f"criterion {crit} not gated: {names - gated}"


def test_unknown_scenario():
    with pytest.raises(KeyError):
        get_scenario("nope")
    with pytest.raises(KeyError):
        run_all("/tmp/unused", names=["nope"])


def _tampered(name: str) -> Scenario:
    sc = get_scenario(name)
    text = sc.text.replace("hyperbolic_error = ", "hyperbolic_error = 1e-40\n# was ")
    return dataclasses.replace(sc, text=text, spec=parse_config(text))


def test_tampered_table_fails_naming_scenario(tmp_path):
    scs = [get_scenario("classical-gyro"), _tampered("classical-hyperbolic")]
    ok, outcomes = run_all(tmp_path, scenarios=scs)
    assert not ok
    bad = [o for o in outcomes if not o.passed]
    assert [o.name for o in bad] == ["classical-hyperbolic"]
    assert bad[0].status == "fail" and bad[0].worst_offender == "hyperbolic_error"


def test_budget_overrun_flagged(tmp_path):
    sc = get_scenario("classical-gyro")
    text = sc.text.replace(f"budget_seconds = {sc.text.split('budget_seconds = ')[1].split()[0]}",
                           "budget_seconds = 1e-6")
    ok, (outcome,) = run_all(tmp_path, scenarios=[dataclasses.replace(sc, text=text, spec=parse_config(text))])
    assert not ok and outcome.status == "over-budget"


def test_run_all_clean_checkout(tmp_path):
    ok, outcomes = run_all(tmp_path)
    failed = [(o.name, o.status, o.worst_offender) for o in outcomes if not o.passed]
    assert ok, failed
