"""Exit criteria of the build, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting. Run ``python3 tests/test_acceptance.py`` to get just the
ten lines without pytest.
"""

import difflib
import random
import re
import statistics
import struct
import sys
import time
from functools import lru_cache
from importlib import resources

import pytest

import oracles
from frugal5g import controller
from frugal5g.errors import FrameError, InvariantViolation
from frugal5g.frames import BROADCAST, MAX_BODY, FrameType, MacAddress, MacFrame, decode_frame, encode_frame
from frugal5g.lte import SCHEDULING_QUANTUM_US
from frugal5g.sim import projections
from frugal5g.sim.metrics import dumps
from frugal5g.sim.runner import run
from frugal5g.sim.scenario import bundled_names, read_scenario
from frugal5g.sim.trace import KINDS, POP_EXTERNAL

pytestmark = pytest.mark.acceptance

SCENARIOS = bundled_names()


def report(n: int, ok: bool, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}", flush=True)


@lru_cache(maxsize=None)
def outcome(name):
    return run(read_scenario(name))


# -- 1 ----------------------------------------------------------------------------

def criterion_1():
    golden = resources.files("frugal5g.scenarios").joinpath("attach_single_ue.callflow").read_text().splitlines()
    start = time.perf_counter()
    trace, _ = run(read_scenario("attach_single_ue"))
    got = projections.callflow(trace, "ue1")
    elapsed = time.perf_counter() - start
    diff = list(difflib.unified_diff(golden, got, "golden", "run", lineterm=""))
    ok = not diff and elapsed < 1.0
    return ok, f"call flow diff {len(diff)} lines, {len(got)} messages, run {elapsed * 1000:.0f} ms"


# -- 2 ----------------------------------------------------------------------------

# EMM/ESM and 5GMM procedure messages, and S1AP/X2AP message names
NAS_S1_X2 = re.compile(
    r"^(Attach|Detach|Authentication(Request|Response|Reject|Failure)|SecurityMode|TrackingArea|ServiceRequest"
    r"|Identity(Request|Response)|PdnConnectivity|Esm|Emm|Registration|NasTransport|(Ul|Dl)NasTransport"
    r"|DownlinkNasTransport|UplinkNasTransport|S1|X2|InitialUe|InitialContext|UeContext|Handover(Request|Required"
    r"|Command|Notify|Preparation)|SnStatusTransfer|PathSwitch|Paging|EnbConfiguration|MmeConfiguration)",
    re.IGNORECASE,
)


def criterion_2():
    bad = []
    total = 0
    for name in SCENARIOS:
        trace, _ = outcome(name)
        for rec in trace:
            total += 1
            names = [rec.get("msg"), rec.get("pdu")]
            if rec.kind not in KINDS or any(n and NAS_S1_X2.match(n) for n in names) \
                    or (rec.get("via") or "").upper().startswith(("S1", "X2")):
                bad.append(f"{name}: {rec.line()}")
    return not bad, f"{len(bad)} NAS/S1/X2 records in {total} across {len(SCENARIOS)} scenarios"


# -- 3 ----------------------------------------------------------------------------

def criterion_3():
    with_mrb = read_scenario("mode_detect_beacons")
    trace, rep = outcome("mode_detect_beacons")
    ues = [n.id for n in with_mrb.of_kind("Ue")]
    emulating = [u for u in ues if rep["ue_modes"].get(u) == "Emulation"]

    no_mrb = read_scenario("mode_detect_no_mrb")
    trace, rep = outcome("mode_detect_no_mrb")
    bound = 3 * no_mrb.radio.beacon_period_us + SCHEDULING_QUANTUM_US
    powered = {r.node: r.t_us for r in trace.select(kind="ctrl", msg="PowerOn")}
    fell_back = {r.node: r.t_us for r in trace.select(kind="ctrl", msg="Mode", mode="StandardNas")}
    ues_b = [n.id for n in no_mrb.of_kind("Ue")]
    in_time = [u for u in ues_b if u in fell_back and fell_back[u] - powered[u] <= bound]
    worst = max((fell_back[u] - powered[u] for u in fell_back), default=0)
    ok = (not no_mrb.radio.mrb and with_mrb.radio.mrb
          and len(emulating) == len(ues) > 0 and len(in_time) == len(ues_b) > 0)
    return ok, (f"beacons: {len(emulating)}/{len(ues)} Emulation; no MRB: {len(in_time)}/{len(ues_b)} "
                f"NasFallback, slowest {worst} us <= {bound} us")


# -- 4 ----------------------------------------------------------------------------

def criterion_4():
    violations, checked = [], 0
    for name in SCENARIOS:
        trace, _ = outcome(name)
        first_mcch: dict[str, int] = {}
        seen_beacon: set[str] = set()
        for rec in trace:
            if rec.kind == "mrb" and rec.get("msg") == "Mcch":
                first_mcch.setdefault(rec.node, rec.t_us)
            elif rec.kind == "mgmt" and rec.get("msg") == "Beacon" and rec.get("via") == "MRB1":
                if rec.node in seen_beacon:
                    continue
                seen_beacon.add(rec.node)
                checked += 1
                delivered = int(rec["dlv"])
                if rec.node not in first_mcch or not delivered > first_mcch[rec.node]:
                    violations.append(f"{name}/{rec.node}")
    return not violations and checked > 0, f"{len(violations)} violations over {checked} eNB runs"


# -- 5 ----------------------------------------------------------------------------

ROUND_TRIPS = 1_000_000
FUZZ = 100_000


def _frames(rng, n):
    addrs = [MacAddress.local(i) for i in range(1, 129)]
    types = list(FrameType)
    broadcast_only = (FrameType.BEACON, FrameType.PROBE_REQUEST)
    bits = rng.getrandbits
    for i in range(n):
        ft = types[bits(8) % len(types)]
        dst = BROADCAST if ft in broadcast_only else addrs[bits(7)]
        if ft not in broadcast_only and ft is not FrameType.DATA and bits(3) == 0:
            dst = BROADCAST
        size = bits(6) if i % 64 else rng.randrange(MAX_BODY + 1)
        yield MacFrame(ft, dst, addrs[bits(7)], addrs[bits(7)], bits(12), rng.randbytes(size),
                       ft is FrameType.DATA and bits(1) == 1)


def _fuzz(rng, n):
    for _ in range(n):
        size = rng.choice([0, 1, 23, 24, 25, 40, rng.randrange(0, 2400)])
        buf = rng.randbytes(size)
        if size >= 24 and rng.random() < 0.5:
            # plausible header so the decoder gets past the first checks
            fc = rng.choice([0x00, 0x08, 0x10, 0x40, 0x50, 0x80, 0xC0, 0xFF])
            body = size - 24 + rng.choice([-1, 0, 0, 0, 1])
            buf = bytes([fc, rng.choice([0, 0x10, 0x01])]) + buf[2:20] \
                + struct.pack("<HH", rng.getrandbits(12) << 4, max(0, body)) + buf[24:]
        yield buf


def criterion_5():
    rng = random.Random(5)
    start = time.perf_counter()
    mismatches = sum(1 for f in _frames(rng, ROUND_TRIPS) if decode_frame(encode_frame(f)) != f)
    outcomes: dict[str, int] = {}
    for buf in _fuzz(rng, FUZZ):
        try:
            decode_frame(buf)
            key = "ok"
        except (FrameError, InvariantViolation) as exc:
            key = type(exc).__name__
        outcomes[key] = outcomes.get(key, 0) + 1
    elapsed = time.perf_counter() - start
    undefined = set(outcomes) - {"ok", "Truncated", "UnknownType", "InvariantViolation"}
    ok = mismatches == 0 and not undefined and elapsed < 30
    return ok, (f"{ROUND_TRIPS - mismatches}/{ROUND_TRIPS} round trips, fuzz {FUZZ} -> "
                f"{dict(sorted(outcomes.items()))}, {elapsed:.1f} s")


# -- 6 ----------------------------------------------------------------------------

INSTANCES = 500


def criterion_6():
    sel_ok = sel_n = 0
    for seed in range(INSTANCES):
        view = oracles.random_view(random.Random(seed), asleep_p=0.2)
        for flow in view.flows.values():
            sel_n += 1
            expect = oracles.argmin_ap(view, flow)
            try:
                got = controller.select_rat(view, flow)
            except Exception:
                got = None
            sel_ok += got == expect

    path_ok = 0
    for seed in range(INSTANCES):
        rng = random.Random(10_000 + seed)
        g = oracles.random_graph(rng, rng.randint(2, 10))
        a, b = rng.sample(sorted(g.nodes), 2)
        expect = oracles.tie_broken_path(oracles.adjacency(g.links), a, b)
        try:
            got = controller.compute_path(g, a, b)
        except Exception:
            got = None
        path_ok += got == expect

    safe = 0
    ratios, sizes, optima = [], 0, 0
    for seed in range(INSTANCES):
        view = oracles.feasible_view(random.Random(20_000 + seed))
        plan = controller.energy_plan(view)
        safe += oracles.sleep_set_ok(view, plan)
        cands = [n for n, k in view.topology.nodes.items() if k in ("WlanAp", "MiddleMileNode")]
        if len(cands) <= 8:
            best = oracles.best_sleep_size(view)
            sizes += len(plan)
            optima += best
            ratios.append(len(plan) / best if best else 1.0)
    ratio = sizes / optima if optima else 1.0
    ok = sel_ok == sel_n and path_ok == INSTANCES and safe == INSTANCES and ratio >= 0.8
    return ok, (f"select_rat {sel_ok}/{sel_n}, compute_path {path_ok}/{INSTANCES}, "
                f"energy verifier {safe}/{INSTANCES}, size ratio {ratio:.3f} "
                f"(per-instance mean {statistics.fmean(ratios):.3f}, n={len(ratios)})")


# -- 7 ----------------------------------------------------------------------------

def criterion_7():
    trace, rep = outcome("walk_wlan_to_macro")
    flow = rep["flows"]["f1"]
    serving = []
    for rec in trace.select(kind="ctrl"):
        if rec.get("msg") == "Decision" and rec.get("op") == "select_rat" and rec.get("subject") == "f1":
            serving.append(rec["out"])
        elif rec.get("msg") == "Reroute" and rec.get("flow") == "f1":
            serving.append(rec["ap"])
    changes = sum(1 for a, b in zip(serving, serving[1:]) if a != b)
    ok = flow["sent"] > 0 and flow["delivered"] == flow["sent"] and changes == 1
    return ok, f"delivered {flow['delivered']}/{flow['sent']}, serving AP {' -> '.join(serving)} ({changes} change)"


# -- 8 ----------------------------------------------------------------------------

def criterion_8():
    external, local_ok, local_n = 0, 0, 0
    names = [n for n in SCENARIOS if read_scenario(n).mode.value == "Standalone"]
    for name in names:
        sc = read_scenario(name)
        trace, rep = outcome(name)
        external += sum(1 for r in trace if r.get("boundary") == POP_EXTERNAL)
        for spec in sc.flows:
            if spec.local:
                local_n += 1
                f = rep["flows"][spec.id]
                local_ok += f["sent"] > 0 and f["delivered"] == f["sent"]
    ok = external == 0 and local_n > 0 and local_ok == local_n
    return ok, f"{external} pop-external records in {names}; local flows delivered = sent {local_ok}/{local_n}"


# -- 9 ----------------------------------------------------------------------------

def criterion_9():
    wifi = projections.northbound(outcome("unified_wifi")[0])
    lte = projections.northbound(outcome("unified_lte")[0])
    diff = list(difflib.unified_diff(wifi, lte, "native", "emulated", lineterm=""))
    return bool(wifi) and not diff, f"{len(wifi)} northbound records, diff {len(diff)} lines"


# -- 10 ---------------------------------------------------------------------------

def criterion_10():
    differing = []
    for name in SCENARIOS:
        sc = read_scenario(name)
        a_trace, a_rep = run(sc)
        b_trace, b_rep = run(sc)
        if a_trace.dumps() != b_trace.dumps() or dumps(a_rep) != dumps(b_rep):
            differing.append(name)
    return not differing, f"{len(SCENARIOS) - len(differing)}/{len(SCENARIOS)} scenarios byte-identical"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


@pytest.mark.parametrize("n", range(1, len(CRITERIA) + 1))
def test_criterion(n, capsys):
    ok, detail = CRITERIA[n - 1]()
    with capsys.disabled():
        print()
        report(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    results = []
    for i, check in enumerate(CRITERIA, 1):
        ok, detail = check()
        report(i, ok, detail)
        results.append(ok)
    sys.exit(0 if all(results) else 1)
