"""One-call entry point: scenario in, trace and metrics out."""

from __future__ import annotations

from .metrics import dumps
from .network import Network
from .scenario import Scenario
from .trace import Trace


def run(scenario: Scenario, seed: int | None = None) -> tuple[Trace, dict]:
    net = Network(scenario, seed)
    report = net.run()
    return net.trace, report


def run_to_text(scenario: Scenario, seed: int | None = None) -> tuple[str, str]:
    trace, report = run(scenario, seed)
    return trace.dumps(), dumps(report)
