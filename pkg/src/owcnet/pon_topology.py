"""Backhaul fabrics for the AP layer: an AWGR-based PON, a point-to-point PON and
an electronic-switch baseline, as wavelength-aware capacitated graphs.

Node kinds and their forwarding behaviour:

* ``ap``, ``switch`` - active; terminate light and may relay traffic.
* ``olt`` - active endpoint; never relays AP-to-AP traffic.
* ``coupler``, ``splitter`` - passive shared media; broadcast a wavelength to
  every attached fibre, throughput capped at (wavelengths x rate).
* ``awg`` - passive wavelength mux/demux, non-blocking.
* ``awgr`` - passive N x N router; light entering port ``i`` on wavelength
  ``w`` leaves port ``(i + w) mod N`` (reciprocal in the reverse direction).

Along a purely passive stretch the wavelength cannot change; it may only
change at an active node.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np
from scipy.optimize import LinearConstraint, milp

ACTIVE = {"ap", "olt", "switch"}
PASSIVE = {"coupler", "splitter", "awg", "awgr", "link"}
SHARED = {"coupler", "splitter"}


def awgr_output_port(input_port: int, wavelength: int, size: int) -> int:
    if size <= 0:
        raise ValueError("AWGR size must be positive")
    if not (0 <= input_port < size and 0 <= wavelength < size):
        raise ValueError(f"port {input_port} / wavelength {wavelength} out of range for a {size}x{size} AWGR")
    return (input_port + wavelength) % size


def _awgr_passes(entry: int, exit_: int, wavelength: int, size: int) -> bool:
    if entry == exit_ or wavelength >= size:
        return False
    return (awgr_output_port(entry, wavelength, size) == exit_
            or awgr_output_port(exit_, wavelength, size) == entry)


@dataclass
class Topology:
    name: str
    graph: nx.Graph
    rate_gbps: float
    n_wavelengths: int
    params: dict = field(default_factory=dict)

    @property
    def ap_ids(self) -> list:
        return sorted((n for n, d in self.graph.nodes(data=True) if d["kind"] == "ap"), key=_natural)

    @property
    def olt_id(self) -> str:
        olts = [n for n, d in self.graph.nodes(data=True) if d["kind"] == "olt"]
        if len(olts) != 1:
            raise ValueError("topology must have exactly one OLT")
        return olts[0]

    @property
    def awgr_routing(self) -> dict:
        """AWGR id -> size N of its cyclic (i + w) mod N rule."""
        return {n: d["ports"] for n, d in self.graph.nodes(data=True) if d["kind"] == "awgr"}

    def kind(self, node) -> str:
        return self.graph.nodes[node]["kind"]

    def nodes_of(self, kind) -> list:
        return sorted((n for n, d in self.graph.nodes(data=True) if d["kind"] == kind), key=_natural)

    def census(self) -> dict:
        out = {}
        for _, d in self.graph.nodes(data=True):
            out[d["kind"]] = out.get(d["kind"], 0) + 1
        return out

    def edge_capacity(self, u, v) -> float:
        return len(self.graph.edges[u, v]["wavelengths"]) * self.rate_gbps

    def node_capacity(self, node):
        d = self.graph.nodes[node]
        if d["kind"] in SHARED:
            return d.get("n_wavelengths", self.n_wavelengths) * self.rate_gbps
        return None


def _natural(name):
    import re
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", str(name))]


def _add_node(g, node, kind, **attrs):
    attrs.setdefault("transit", kind in ("ap", "switch"))
    g.add_node(node, kind=kind, **attrs)


def _link(g, u, v, wavelengths, ports=None):
    wavelengths = frozenset(wavelengths)
    if not wavelengths:
        raise ValueError(f"fibre {u}-{v} carries no wavelength")
    g.add_edge(u, v, wavelengths=wavelengths, ports=dict(ports or {}))


def _finalize(g):
    for n, d in g.nodes(data=True):
        if d["kind"] in ("coupler", "splitter", "awg"):
            d["ports"] = g.degree(n)
    return g


def build_awgr_pon(n_aps=8, n_sets=4, awgr_size=4, rate=10.0, n_wavelengths=4,
                   mesh_wavelengths=1) -> Topology:
    """AWGR-based PON.

    APs are clustered into sets of equal size, each set sharing a coupler.
    Couplers are spread over two AWGRs, which both connect to the OLT. Each
    AWGR's last port feeds a splitter; the two splitters meet at an AWG,
    giving the multi-hop path between elements on different AWGRs. A passive
    all-to-all mesh with ``mesh_wavelengths`` channels per AP pair links every
    AP directly.
    """
    if n_sets <= 0 or n_aps % n_sets:
        raise ValueError("n_aps must be divisible by n_sets")
    if n_sets % 2:
        raise ValueError("sets are split over two AWGRs, so n_sets must be even")
    per_awgr = n_sets // 2
    if per_awgr + 2 > awgr_size:
        raise ValueError(f"{per_awgr} sets + OLT + glue do not fit a {awgr_size}-port AWGR")
    if n_wavelengths > awgr_size:
        raise ValueError("an N x N AWGR routes at most N wavelengths")
    wl = range(n_wavelengths)
    g = nx.Graph()
    _add_node(g, "olt", "olt")
    aps_per_set = n_aps // n_sets
    for k in range(2):
        _add_node(g, f"awgr{k}", "awgr", ports=awgr_size)
        _add_node(g, f"splitter{k}", "splitter", ports=2)
        _link(g, "olt", f"awgr{k}", wl, {f"awgr{k}": per_awgr})
        _link(g, f"awgr{k}", f"splitter{k}", wl, {f"awgr{k}": awgr_size - 1})
    _add_node(g, "awg0", "awg", ports=2)
    for k in range(2):
        _link(g, f"splitter{k}", "awg0", wl)
    for s in range(n_sets):
        c = f"coupler{s}"
        _add_node(g, c, "coupler", ports=aps_per_set + 1, set=s)
        home = s // per_awgr
        _link(g, c, f"awgr{home}", wl, {f"awgr{home}": s % per_awgr})
        for i in range(aps_per_set):
            ap = f"ap{s * aps_per_set + i}"
            _add_node(g, ap, "ap", set=s)
            _link(g, ap, c, wl)
    aps = [f"ap{i}" for i in range(n_aps)]
    for k, (x, y) in enumerate(itertools.combinations(aps, 2)):
        _link(g, x, y, [(k + j) % n_wavelengths for j in range(mesh_wavelengths)])
    params = dict(n_aps=n_aps, n_sets=n_sets, awgr_size=awgr_size, rate=rate,
                  n_wavelengths=n_wavelengths, mesh_wavelengths=mesh_wavelengths,
                  glue="awgr[last port] - splitter - awg0 - splitter - awgr[last port]")
    return Topology("awgr_pon", _finalize(g), rate, n_wavelengths, params)


def build_p2p_pon(n_aps=8, n_groups=2, n_subgroups=2, rate=10.0, n_wavelengths=4) -> Topology:
    """Point-to-point PON with forwarding APs.

    Subgroup ``s`` of every group links to subgroup ``s`` of every other
    group; subgroup 0 of each group attaches to the OLT; APs within a group
    are passively meshed.
    """
    if n_groups <= 0 or n_subgroups <= 0 or n_aps % (n_groups * n_subgroups):
        raise ValueError("n_aps must be divisible by n_groups * n_subgroups")
    size = n_aps // (n_groups * n_subgroups)
    wl = range(n_wavelengths)
    g = nx.Graph()
    _add_node(g, "olt", "olt")
    idx = 0
    for grp in range(n_groups):
        members = []
        for sub in range(n_subgroups):
            c = f"coupler{grp}_{sub}"
            _add_node(g, c, "coupler", ports=size + n_groups, group=grp, subgroup=sub)
            for _ in range(size):
                ap = f"ap{idx}"
                idx += 1
                _add_node(g, ap, "ap", group=grp, subgroup=sub)
                _link(g, ap, c, wl)
                members.append(ap)
        for x, y in itertools.combinations(members, 2):
            _link(g, x, y, wl)
        _link(g, f"coupler{grp}_0", "olt", wl)
    for sub in range(n_subgroups):
        for g1, g2 in itertools.combinations(range(n_groups), 2):
            _link(g, f"coupler{g1}_{sub}", f"coupler{g2}_{sub}", wl)
    params = dict(n_aps=n_aps, n_groups=n_groups, n_subgroups=n_subgroups, rate=rate,
                  n_wavelengths=n_wavelengths)
    return Topology("p2p_pon", _finalize(g), rate, n_wavelengths, params)


def build_switch_baseline(n_aps=8, aps_per_switch=4, rate=10.0) -> Topology:
    if aps_per_switch <= 0 or n_aps % aps_per_switch:
        raise ValueError("n_aps must be divisible by aps_per_switch")
    g = nx.Graph()
    _add_node(g, "olt", "olt")
    n_sw = n_aps // aps_per_switch
    for s in range(n_sw):
        sw = f"switch{s}"
        _add_node(g, sw, "switch")
        _link(g, sw, "olt", [0])
        for i in range(aps_per_switch):
            ap = f"ap{s * aps_per_switch + i}"
            # baseline APs hang off a single switch port and do not relay
            _add_node(g, ap, "ap", transit=False)
            _link(g, ap, sw, [0])
    for s1, s2 in itertools.combinations(range(n_sw), 2):
        _link(g, f"switch{s1}", f"switch{s2}", [0])
    params = dict(n_aps=n_aps, aps_per_switch=aps_per_switch, rate=rate)
    return Topology("switch_baseline", _finalize(g), rate, 1, params)


def split_edge(topo: Topology, u, v) -> tuple[Topology, str]:
    """Copy of ``topo`` with fibre u-v replaced by a 2-port ``link`` node.

    Failing that node models a cut fibre.
    """
    g = topo.graph.copy()
    e = g.edges[u, v]
    node = f"link_{u}_{v}"
    g.remove_edge(u, v)
    _add_node(g, node, "link", ports=2)
    _link(g, u, node, e["wavelengths"], {k: p for k, p in e["ports"].items() if k == u})
    _link(g, node, v, e["wavelengths"], {k: p for k, p in e["ports"].items() if k == v})
    return Topology(topo.name, g, topo.rate_gbps, topo.n_wavelengths, dict(topo.params)), node


def _check_ids(topo, *nodes):
    for n in nodes:
        if n not in topo.graph:
            raise KeyError(f"unknown node {n!r}")


def reachable(topo: Topology, src, dst, failed=frozenset()) -> bool:
    """True iff a wavelength-continuous path joins src and dst avoiding failed nodes."""
    _check_ids(topo, src, dst, *failed)
    if src in failed or dst in failed:
        raise ValueError("src and dst must be alive")
    if src == dst:
        return True
    g = topo.graph
    # state: (node, wavelength or None at an active node, entry port at an AWGR)
    start = (src, None, None)
    seen = {start}
    frontier = [start]
    while frontier:
        nxt = []
        for node, wl, entry in frontier:
            for nb in g.neighbors(node):
                if nb in failed:
                    continue
                e = g.edges[node, nb]
                if wl is None:
                    wls = sorted(e["wavelengths"])
                elif wl in e["wavelengths"]:
                    wls = [wl]
                else:
                    continue
                kind = g.nodes[node]["kind"]
                for w in wls:
                    if kind == "awgr" and wl is not None:
                        if not _awgr_passes(entry, e["ports"][node], w, g.nodes[node]["ports"]):
                            continue
                    nb_kind = g.nodes[nb]["kind"]
                    if nb_kind in ACTIVE:
                        if nb == dst:
                            return True
                        if not g.nodes[nb]["transit"]:
                            continue
                        state = (nb, None, None)
                    else:
                        state = (nb, w, e["ports"].get(nb))
                    if state not in seen:
                        seen.add(state)
                        nxt.append(state)
        frontier = nxt
    return False


def disjoint_paths(topo: Topology, src, dst, failed=frozenset()) -> int:
    """Maximum number of node-disjoint, wavelength-continuous src-dst paths.

    Solved as a 0/1 flow on a wavelength-layered copy of the graph (one copy of
    each passive node per wavelength, one per AWGR port and wavelength) with
    a unit throughput cap on every original node.
    """
    _check_ids(topo, src, dst, *failed)
    if src == dst:
        raise ValueError("src and dst must differ")
    g = topo.graph
    for n in (src, dst):
        if g.nodes[n]["kind"] not in ACTIVE:
            raise ValueError("path endpoints must be active nodes")

    def copy_of(node, w, port):
        kind = g.nodes[node]["kind"]
        if kind in ACTIVE:
            return (node,)
        if kind == "awgr":
            return (node, port, w)
        return (node, w)

    def usable(node):
        if node in failed:
            return False
        d = g.nodes[node]
        return node in (src, dst) or d["kind"] in PASSIVE or d["transit"]

    arcs = set()
    for u, v, e in g.edges(data=True):
        if not (usable(u) and usable(v)):
            continue
        for w in e["wavelengths"]:
            cu = copy_of(u, w, e["ports"].get(u))
            cv = copy_of(v, w, e["ports"].get(v))
            arcs.add((cu, cv))
            arcs.add((cv, cu))
    for node, d in g.nodes(data=True):
        if d["kind"] != "awgr" or not usable(node):
            continue
        n_ports = d["ports"]
        for i, j in itertools.permutations(range(n_ports), 2):
            for w in range(topo.n_wavelengths):
                if _awgr_passes(i, j, w, n_ports):
                    arcs.add(((node, i, w), (node, j, w)))
    arcs = sorted(arcs, key=repr)
    if not arcs:
        return 0
    verts = sorted({x for a in arcs for x in a}, key=repr)
    vid = {v: i for i, v in enumerate(verts)}
    n_arc = len(arcs)
    src_v, dst_v = vid.get((src,)), vid.get((dst,))
    if src_v is None or dst_v is None:
        return 0

    rows, lb, ub = [], [], []
    # conservation everywhere except the endpoints
    for v in verts:
        if v in ((src,), (dst,)):
            continue
        row = np.zeros(n_arc)
        for k, (a, b) in enumerate(arcs):
            if b == v:
                row[k] += 1
            if a == v:
                row[k] -= 1
        rows.append(row)
        lb.append(0.0)
        ub.append(0.0)
    # unit throughput per original node, counting arcs that enter it from elsewhere
    for node in g.nodes:
        if node in (src, dst) or not usable(node):
            continue
        row = np.array([1.0 if (b[0] == node and a[0] != node) else 0.0 for a, b in arcs])
        if row.any():
            rows.append(row)
            lb.append(0.0)
            ub.append(1.0)
    # nothing flows back into src or out of dst
    into_src = np.array([1.0 if b == (src,) else 0.0 for a, b in arcs])
    out_dst = np.array([1.0 if a == (dst,) else 0.0 for a, b in arcs])
    rows += [into_src, out_dst]
    lb += [0.0, 0.0]
    ub += [0.0, 0.0]
    c = -np.array([1.0 if a == (src,) else 0.0 for a, b in arcs])
    res = milp(c, constraints=LinearConstraint(np.array(rows), lb, ub),
               integrality=np.ones(n_arc), bounds=(0, 1))
    if not res.success:
        raise RuntimeError(f"disjoint-path program failed: {res.message}")
    return int(round(-res.fun))


def _flow_network(topo: Topology, side_a, side_b) -> nx.DiGraph:
    g = topo.graph
    dg = nx.DiGraph()

    def head(n):
        return (n, "in") if topo.node_capacity(n) is not None else n

    def tail(n):
        return (n, "out") if topo.node_capacity(n) is not None else n

    for n in g.nodes:
        cap = topo.node_capacity(n)
        if cap is not None:
            dg.add_edge((n, "in"), (n, "out"), capacity=cap)
    aps = set(side_a) | set(side_b)
    for u, v in g.edges:
        if any(g.nodes[x]["kind"] == "olt" for x in (u, v)):
            continue
        cap = topo.edge_capacity(u, v)
        if cap <= 0:
            continue
        for x, y in ((u, v), (v, u)):
            if g.nodes[x]["kind"] in ACTIVE and x not in aps and not g.nodes[x]["transit"]:
                continue
            dg.add_edge(tail(x), head(y), capacity=cap)
    for a in side_a:
        dg.add_edge("_source", head(a))
    for b in side_b:
        dg.add_edge(tail(b), "_sink")
    return dg


def balanced_bipartitions(ap_ids):
    ap_ids = list(ap_ids)
    if len(ap_ids) % 2:
        raise ValueError("bisection needs an even number of APs")
    first, rest = ap_ids[0], ap_ids[1:]
    half = len(ap_ids) // 2
    for combo in itertools.combinations(rest, half - 1):
        side_a = (first,) + combo
        side_b = tuple(x for x in rest if x not in combo)
        yield side_a, side_b


def cut_capacity(topo: Topology, side_a, side_b) -> float:
    dg = _flow_network(topo, side_a, side_b)
    return float(nx.maximum_flow_value(dg, "_source", "_sink"))


def bisection_bandwidth(topo: Topology) -> float:
    """Fabric bisection bandwidth in Gbps.

    Minimum over balanced AP bipartitions of the max-flow between the two
    halves. APs act as uncapped terminals, edge capacity is (wavelengths on
    the fibre) x rate, shared couplers/splitters cap their throughput at
    (wavelengths x rate), and the OLT does not relay AP-to-AP traffic.
    """
    return min(cut_capacity(topo, a, b) for a, b in balanced_bipartitions(topo.ap_ids))


@dataclass
class FailureOutcome:
    failed: str
    kind: str
    affected_aps: list
    disconnected_aps: list
    ap_to_olt_survival: float
    ap_pair_survival: float


@dataclass
class ResilienceReport:
    topology: str
    kinds: tuple
    outcomes: list

    @property
    def max_disconnected(self) -> int:
        return max((len(o.disconnected_aps) for o in self.outcomes), default=0)

    @property
    def ap_to_olt_survival_fraction(self) -> float:
        return float(np.mean([o.ap_to_olt_survival for o in self.outcomes])) if self.outcomes else 1.0

    @property
    def ap_pair_survival_fraction(self) -> float:
        return float(np.mean([o.ap_pair_survival for o in self.outcomes])) if self.outcomes else 1.0

    def disconnected_sets(self) -> dict:
        return {o.failed: o.disconnected_aps for o in self.outcomes}


def _affected(topo, node):
    g = topo.graph
    if g.nodes[node]["kind"] == "ap":
        return [node]
    return sorted((n for n in g.neighbors(node) if g.nodes[n]["kind"] == "ap"), key=_natural)


def failure_sweep(topo: Topology, failure_kinds=("ap",)) -> ResilienceReport:
    """Fail each component of the given kinds in turn and record who loses the OLT."""
    olt = topo.olt_id
    outcomes = []
    for kind in failure_kinds:
        for node in topo.nodes_of(kind):
            failed = frozenset({node})
            alive = [a for a in topo.ap_ids if a not in failed]
            to_olt = {a: reachable(topo, a, olt, failed) for a in alive}
            pairs = list(itertools.combinations(alive, 2))
            pair_ok = sum(reachable(topo, x, y, failed) for x, y in pairs)
            outcomes.append(FailureOutcome(
                failed=node, kind=kind,
                affected_aps=_affected(topo, node),
                disconnected_aps=[a for a in alive if not to_olt[a]],
                ap_to_olt_survival=sum(to_olt.values()) / len(alive) if alive else 1.0,
                ap_pair_survival=pair_ok / len(pairs) if pairs else 1.0,
            ))
    return ResilienceReport(topo.name, tuple(failure_kinds), outcomes)


DEFAULT_SWEEPS = {
    "awgr_pon": ("ap", "coupler", "awgr", "splitter", "awg"),
    "p2p_pon": ("ap", "coupler"),
    "switch_baseline": ("ap", "switch"),
}


# Manifest: JSON object with keys
#   name, rate_gbps, n_wavelengths, params,
#   nodes: [{id, kind, ...attrs}] sorted by id,
#   edges: [{u, v, wavelengths: [..], capacity_gbps, ports: {node: port}}] sorted by (u, v)
def topology_manifest(topo: Topology) -> dict:
    g = topo.graph
    nodes = [dict(id=n, **{k: v for k, v in d.items()}) for n, d in sorted(g.nodes(data=True), key=lambda x: _natural(x[0]))]
    edges = []
    for u, v, d in g.edges(data=True):
        u, v = sorted((u, v), key=_natural)
        edges.append(dict(u=u, v=v, wavelengths=sorted(d["wavelengths"]),
                          capacity_gbps=topo.edge_capacity(u, v), ports=dict(sorted(d["ports"].items()))))
    edges.sort(key=lambda e: (_natural(e["u"]), _natural(e["v"])))
    return dict(name=topo.name, rate_gbps=topo.rate_gbps, n_wavelengths=topo.n_wavelengths,
                params=topo.params, nodes=nodes, edges=edges)


def topology_from_manifest(data: dict) -> Topology:
    g = nx.Graph()
    for nd in data["nodes"]:
        attrs = {k: v for k, v in nd.items() if k != "id"}
        g.add_node(nd["id"], **attrs)
    for e in data["edges"]:
        _link(g, e["u"], e["v"], e["wavelengths"], e.get("ports"))
    return Topology(data["name"], g, data["rate_gbps"], data["n_wavelengths"], data.get("params", {}))


def save_manifest(topo: Topology, path, fingerprint: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = topology_manifest(topo)
    data["fingerprint"] = fingerprint
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def load_manifest(path) -> Topology:
    return topology_from_manifest(json.loads(Path(path).read_text()))


REPORT_COLUMNS = ["topology", "failed", "kind", "affected_aps", "disconnected_aps",
                  "n_disconnected", "ap_to_olt_survival", "ap_pair_survival"]


def write_report_csv(reports, path, header_lines=()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            for o in rep.outcomes:
                w.writerow([rep.topology, o.failed, o.kind, " ".join(o.affected_aps),
                            " ".join(o.disconnected_aps), len(o.disconnected_aps),
                            f"{o.ap_to_olt_survival:.6f}", f"{o.ap_pair_survival:.6f}"])
    return path
