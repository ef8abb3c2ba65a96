import os

import pytest
from hypothesis import settings

from ng911sim.scenario import bundled_path, charlotte, load_scenario

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def charlotte_sc():
    return charlotte()


@pytest.fixture(scope="session")
def ddos_paths():
    return {k: bundled_path(f"threats/ddos_{k}.json") for k in ("5min", "30min")}


@pytest.fixture(scope="session")
def ddos_runs():
    """Paired no-attack, 5-min and 30-min flood batches on the shipped DDoS scenario."""
    from ng911sim.simulator import run_batch, without_threats

    base = bundled_path("charlotte_ddos.json")
    arms = {k: load_scenario(base, threat_paths=[bundled_path(f"threats/ddos_{k}.json")])
            for k in ("5min", "30min")}
    runs = {"none": run_batch(without_threats(arms["5min"]))}
    runs.update({k: run_batch(sc) for k, sc in arms.items()})
    return runs


def with_threat(name: str, base: str = "charlotte.json", **sets):
    return load_scenario(
        bundled_path(base),
        sets=[f"{k}={v}" for k, v in sets.items()],
        threat_paths=[bundled_path(f"threats/{name}.json")],
    )


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one pass/fail line per acceptance criterion."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
