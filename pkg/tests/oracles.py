"""Brute-force reference implementations for the controller.

Nothing here imports controller internals: graphs are plain adjacency
dicts, and every answer comes from exhaustive enumeration.
"""

from __future__ import annotations

import random
from collections import deque
from itertools import product

from frugal5g.controller import FlowSpec, RanView, Topology
from frugal5g.frames import MacAddress
from frugal5g.wlan import ApDescriptor, ApKind, PowerState

NATIVE_FIRST = {ApKind.NATIVE_WIFI: 0, ApKind.LTE_EMULATED: 1}


# -- select_rat -----------------------------------------------------------------

def argmin_ap(view: RanView, flow: FlowSpec) -> str | None:
    """Scan every feasible AP and keep the best under the published order."""
    best = None
    for ap_id in view.reachability.get(flow.ue_id, ()):
        ap = view.aps.get(ap_id)
        if ap is None or ap.power_state is not PowerState.AWAKE:
            continue
        if ap.current_load + flow.demand > ap.capacity:
            continue
        if best is None:
            best = ap
            continue
        # compare (load + d) / cap exactly by cross-multiplying
        lhs = (ap.current_load + flow.demand) * best.capacity
        rhs = (best.current_load + flow.demand) * ap.capacity
        if lhs < rhs:
            best = ap
        elif lhs == rhs:
            if (NATIVE_FIRST[ap.kind], ap.ap_id) < (NATIVE_FIRST[best.kind], best.ap_id):
                best = ap
    return None if best is None else best.ap_id


# -- paths ---------------------------------------------------------------------------

def adjacency(links) -> dict[str, set[str]]:
    adj: dict[str, set[str]] = {}
    for a, b in links:
        adj.setdefault(a, set()).add(b)
        adj.setdefault(b, set()).add(a)
    return adj


def all_shortest_paths(adj: dict[str, set[str]], src: str, dst: str) -> list[list[str]]:
    """Every minimum-hop simple path, found by depth-bounded DFS."""
    if src == dst:
        return [[src]]
    found: list[list[str]] = []
    limit = len(adj) + 1
    stack = [[src]]
    while stack:
        path = stack.pop()
        if len(path) > limit:
            continue
        for n in adj.get(path[-1], ()):
            if n in path:
                continue
            if n == dst:
                if len(path) + 1 < limit:
                    limit, found = len(path) + 1, []
                if len(path) + 1 == limit:
                    found.append(path + [n])
            elif len(path) + 1 < limit:
                stack.append(path + [n])
    return sorted(found)


def tie_broken_path(adj, src, dst) -> list[str] | None:
    paths = all_shortest_paths(adj, src, dst)
    return paths[0] if paths else None


def reachable_from(adj, start) -> set[str]:
    seen = {start}
    queue = deque([start])
    while queue:
        for m in adj.get(queue.popleft(), ()):
            if m not in seen:
                seen.add(m)
                queue.append(m)
    return seen


# -- energy plan -----------------------------------------------------------------

def sleep_set_ok(view: RanView, sleeping, demand=None) -> bool:
    """Coverage plus routability with capacity, decided by exhaustive assignment."""
    sleeping = set(sleeping)
    nodes = {n: k for n, k in view.topology.nodes.items() if n not in sleeping}
    links = {l: c for l, c in view.topology.links.items() if l[0] in nodes and l[1] in nodes}
    adj = adjacency(links)
    for n in nodes:
        adj.setdefault(n, set())
    pop = next((n for n, k in sorted(nodes.items()) if k == "PoP"), None)
    if pop is None:
        return not any(view.associations.values())
    live = reachable_from(adj, pop)

    def usable(ap_id):
        ap = view.aps.get(ap_id)
        return ap is not None and ap_id in live

    for ue, assoc in view.associations.items():
        if assoc and not any(usable(a) for a in view.reachability.get(ue, ())):
            return False

    demand = demand or {f.flow_id: f.demand for f in view.flows.values()}
    flows = [f for f in sorted(view.flows.values(), key=lambda f: f.flow_id) if demand.get(f.flow_id, 0) > 0]
    if not flows:
        return True
    options = []
    for f in flows:
        if f.local:
            raise NotImplementedError("the oracle covers flows towards the PoP only")
        opts = []
        for ap_id in sorted(view.reachability.get(f.ue_id, ())):
            if not usable(ap_id):
                continue
            route = tie_broken_path(adj, ap_id, pop)
            hops = [tuple(sorted(h)) for h in zip(route, route[1:])]
            opts.append((ap_id, hops))
        if not opts:
            return False
        options.append(opts)
    for choice in product(*options):
        ap_used: dict[str, int] = {}
        link_used: dict[tuple, int] = {}
        ok = True
        for f, (ap_id, hops) in zip(flows, choice):
            need = demand[f.flow_id]
            ap_used[ap_id] = ap_used.get(ap_id, 0) + need
            if ap_used[ap_id] > view.aps[ap_id].capacity:
                ok = False
                break
            for h in hops:
                link_used[h] = link_used.get(h, 0) + need
                if link_used[h] > links[h]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return True
    return False


def best_sleep_size(view: RanView) -> int:
    """Size of the largest valid sleep set, by trying every subset largest first."""
    cands = sorted(n for n, k in view.topology.nodes.items() if k in ("WlanAp", "MiddleMileNode"))
    best = 0
    for mask in sorted(range(1 << len(cands)), key=lambda m: -bin(m).count("1")):
        size = bin(mask).count("1")
        if size <= best:
            break
        subset = {c for i, c in enumerate(cands) if mask >> i & 1}
        if sleep_set_ok(view, subset):
            best = size
    return best


# -- random instances -------------------------------------------------------------

def _ap(ap_id, kind, rng, asleep=False) -> ApDescriptor:
    bssid = MacAddress.local(rng.randrange(1 << 16))
    cap = rng.choice([5_000_000, 10_000_000, 20_000_000, 54_000_000])
    load = 0 if asleep else rng.randrange(0, cap + 1, 250_000)
    return ApDescriptor(ap_id, bssid, "net", kind, cap, load, 0,
                        PowerState.ASLEEP if asleep else PowerState.AWAKE)


def random_view(rng: random.Random, *, max_aps=6, max_ues=10, max_flows=5, asleep_p=0.0,
                with_flows=True) -> RanView:
    """A small network: PoP, optional macro, a middle mile, WLAN APs and UEs."""
    has_macro = rng.random() < 0.7
    n_wlan = rng.randint(0 if has_macro else 1, max_aps - (1 if has_macro else 0))
    n_mm = rng.randint(1, 3)
    nodes = {"pop": "PoP"}
    links: dict[tuple[str, str], int] = {}

    def link(a, b):
        links[tuple(sorted((a, b)))] = rng.choice([2_000_000, 10_000_000, 50_000_000, 100_000_000])

    mms = [f"mm{i}" for i in range(n_mm)]
    for i, m in enumerate(mms):
        nodes[m] = "MiddleMileNode"
        link(m, "pop" if i == 0 or rng.random() < 0.5 else rng.choice(mms[:i]))
    for a in mms:
        for b in mms:
            if a < b and rng.random() < 0.25:
                link(a, b)
    aps = {}
    if has_macro:
        nodes["macro"] = "MacroEnb"
        link("macro", "pop")
        aps["macro"] = _ap("macro", ApKind.LTE_EMULATED, rng)
    for i in range(n_wlan):
        w = f"w{i}"
        nodes[w] = "WlanAp"
        link(w, rng.choice(mms))
        if rng.random() < 0.3:
            link(w, rng.choice(mms))
        aps[w] = _ap(w, ApKind.NATIVE_WIFI, rng, asleep=rng.random() < asleep_p)
    ap_ids = sorted(aps)
    reach, assoc = {}, {}
    for u in range(rng.randint(1, max_ues)):
        ue = f"ue{u}"
        r = set(rng.sample(ap_ids, rng.randint(1, min(3, len(ap_ids)))))
        if has_macro and rng.random() < 0.5:
            r.add("macro")
        reach[ue] = frozenset(r)
        awake = [a for a in sorted(r) if aps[a].power_state is PowerState.AWAKE]
        assoc[ue] = frozenset(rng.sample(awake, 1)) if awake and rng.random() < 0.8 else frozenset()
    flows = {}
    if with_flows:
        for i in range(rng.randint(0, max_flows)):
            ue = rng.choice(sorted(reach))
            demand = rng.choice([250_000, 1_000_000, 4_000_000, 12_000_000])
            flows[f"f{i}"] = FlowSpec(f"f{i}", ue, rng.choice(["voice", "interactive", "background"]), demand)
    return RanView(aps, reach, flows, Topology(nodes, links), assoc)


def random_graph(rng: random.Random, n: int, extra: float = 0.3) -> Topology:
    names = rng.sample([f"{c}{d}" for c in "abcdefgh" for d in "01"], n)
    nodes = {x: "MiddleMileNode" for x in names}
    links = {}
    for i in range(1, n):
        if rng.random() < 0.9:  # occasionally leave a node cut off
            links[tuple(sorted((names[i], rng.choice(names[:i]))))] = 1
    for a in names:
        for b in names:
            if a < b and rng.random() < extra / 2:
                links[(a, b)] = 1
    return Topology(nodes, links)


def feasible_view(rng: random.Random, **kw) -> RanView:
    """Like :func:`random_view`, redrawn until the all-awake network carries every flow."""
    while True:
        view = random_view(rng, **kw)
        if sleep_set_ok(view, ()):
            return view
