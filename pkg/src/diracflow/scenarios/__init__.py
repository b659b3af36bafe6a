"""Shipped scenario catalog and the aggregate gate over it."""
from __future__ import annotations

import time
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..config import RunSpec, parse_config
from ..pipeline import EXIT_OK, report, run_scenario


@dataclass
class Scenario:
    name: str
    text: str
    spec: RunSpec

    @property
    def budget(self) -> float:
        return self.spec["run"]["budget_seconds"]

    @property
    def expected(self) -> dict:
        return self.spec.thresholds

    @property
    def description(self) -> str:
        return self.spec["run"]["description"]


def list_scenarios() -> list[Scenario]:
    out = []
    for entry in sorted(resources.files(__name__).iterdir(), key=lambda e: e.name):
        if entry.name.endswith(".cfg"):
            text = entry.read_text(encoding="utf-8")
            spec = parse_config(text)
            if spec.name != entry.name[:-4]:
                raise ValueError(f"{entry.name}: [run].name is {spec.name!r}, expected the file stem")
            out.append(Scenario(spec.name, text, spec))
    return out


def get_scenario(name: str) -> Scenario:
    for s in list_scenarios():
        if s.name == name:
            return s
    raise KeyError(f"no scenario named {name!r}")


@dataclass
class ScenarioOutcome:
    name: str
    status: str  # pass | fail | error | over-budget
    exit_code: int
    worst_offender: str | None
    seconds: float
    directory: Path

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def run_all(out_root, scenarios: list[Scenario] | None = None, names=None, force: bool = True,
            enforce_budget: bool = True) -> tuple[bool, list[ScenarioOutcome]]:
    """Run scenarios into ``out_root/<name>`` and gate on their thresholds and budgets."""
    out_root = Path(out_root)
    scenarios = list_scenarios() if scenarios is None else scenarios
    if names:
        wanted = set(names)
        unknown = wanted - {s.name for s in scenarios}
        if unknown:
            raise KeyError(f"unknown scenarios: {', '.join(sorted(unknown))}")
        scenarios = [s for s in scenarios if s.name in wanted]
    outcomes = []
    for sc in scenarios:
        start = time.perf_counter()
        rd = run_scenario(sc.spec, out_root / sc.name, sc.text, force=force)
        code, summary = report(rd.path)
        elapsed = time.perf_counter() - start
        errors = summary["stage_errors"]
        if errors:
            status = "error"
        elif code != EXIT_OK:
            status = "fail"
        elif enforce_budget and elapsed > sc.budget:
            status = "over-budget"
        else:
            status = "pass"
        worst = summary["worst_offender"] or (next(iter(errors)) if errors else None)
        outcomes.append(ScenarioOutcome(sc.name, status, code, worst, elapsed, rd.path))
    return all(o.passed for o in outcomes), outcomes
