"""Multi-RAT rural access network: LTE cells that look like Wi-Fi APs, native WLAN,
a fog SDN controller, and a deterministic discrete-event harness to run them.

Typical use goes through :func:`frugal5g.sim.runner.run` with a scenario from
:func:`frugal5g.sim.scenario.read_scenario`, or through the ``frugal5g`` CLI.
"""

__version__ = "0.1.0"
