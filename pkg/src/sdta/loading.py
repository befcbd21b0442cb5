"""Network loading: path-based and chronological policy-based variants.

Both loaders share one node-model engine that advances all cumulative
curves a step at a time; they differ in what a commodity is (a path versus
a policy) and in how vehicles are routed at diverges (static successor
versus the policy decision under the event matched to realized history).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NonTerminatingTranslation, ValidationError
from .events import (
    TravelTimeDistribution,
    free_flow_distribution,
    links_of,
    pick_nearest,
    prefix_distances,
)
from .choice import SplitSchedule
from .kernels import (
    LinkState,
    XI,
    disaggregate,
    interp,
    link_travel_time,
    receiving_flow,
    sending_flow,
    transition_destination,
    transition_diverge,
    transition_inhomogeneous,
    transition_merge,
    transition_origin,
)
from .network import Network, NodeKind, classify_node
from .policy import Policy
from .scenario import Scenario


@dataclass
class LoaderStats:
    """Instrumentation counters for runtime assertions and benchmarks."""

    time_loops: int = 0
    translations: int = 0
    node_updates: int = 0


@dataclass(frozen=True)
class PathSet:
    """Origin-destination paths with per-step usage fractions.

    ``mu`` has shape (P, T+1); rows follow ``paths`` order and columns sum
    to one at every step (column 0 mirrors column 1).
    """

    paths: tuple[tuple[str, ...], ...]
    mu: np.ndarray

    def __post_init__(self):
        if self.mu.ndim != 2 or self.mu.shape[0] != len(self.paths):
            raise ValidationError("one usage row per path required")
        if len(set(self.paths)) != len(self.paths):
            raise ValidationError("paths must be unique")
        sums = self.mu[:, 1:].sum(axis=0)
        if np.any(self.mu < -1e-12) or np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValidationError("path usage must be a distribution at every step")

    def validate_against(self, network: Network) -> None:
        for path in self.paths:
            node = network.origin
            for link_id in path:
                link = network.link(link_id)
                if link.from_node != node:
                    raise ValidationError(f"path {path} breaks at link {link_id}")
                node = link.to_node
            if node != network.destination:
                raise ValidationError(f"path {path} does not end at the destination")


@dataclass(frozen=True)
class LoadResult:
    """Loader output: link travel times plus conservation diagnostics."""

    travel_times: np.ndarray          # (L, T+1) seconds
    origin_backlog: np.ndarray        # (T+1,) vehicles waiting to enter
    vehicles_in_network: np.ndarray   # (T+1,)
    released: float
    exited: float
    demand_total: float


def _prefix_demand(demand: np.ndarray, shares: np.ndarray) -> np.ndarray:
    """Cumulative per-commodity demand: rows (K,), columns (T+1,)."""
    out = np.zeros((shares.shape[0], demand.size))
    np.cumsum(demand[np.newaxis, 1:] * shares[:, 1:], axis=1, out=out[:, 1:])
    return out


class _Engine:
    """Single-realization step engine over the five node archetypes."""

    def __init__(
        self,
        network: Network,
        capacity: dict[str, np.ndarray],
        dt: float,
        horizon_steps: int,
        commodities: Sequence,
        links_by_commodity: dict | None,
        strict_origin: bool,
    ):
        self.network = network
        self.dt = dt
        self.T = horizon_steps
        self.strict_origin = strict_origin
        self.commodities = list(commodities)
        self.states: dict[str, LinkState] = {}
        for link in network.links:
            state = LinkState(link, capacity[link.id], dt)
            for key in self.commodities:
                if links_by_commodity is None or link.id in links_by_commodity[key]:
                    state.add_commodity(key)
            self.states[link.id] = state
        self.kinds = {n: classify_node(network, n) for n in network.nodes}
        self.released_total = 0.0
        self.released_by = {key: 0.0 for key in self.commodities}
        self.backlog = np.zeros(horizon_steps + 1)
        self.vehicles = np.zeros(horizon_steps + 1)
        self.dest_in = network.in_links[network.destination][0].id

    def commodity_gaps(self, state: LinkState, t: int) -> dict:
        """Per-commodity upstream-downstream gap at the sending horizon."""
        query = (t + 1) * self.dt - state.spec.free_flow_time
        gaps = {}
        for key, up in state.up_by.items():
            gap = interp(up, query) - state.down_by[key].value_at(t - 1)
            if gap > 0.0:
                gaps[key] = gap
        return gaps

    def step(
        self,
        t: int,
        cum_demand: np.ndarray,      # (K, T+1) aligned with self.commodities
        route: Callable,             # (key, node, in_link_id) -> out link id or None
        stats: LoaderStats | None = None,
    ) -> None:
        inc_up: dict[str, float] = {}
        inc_down: dict[str, float] = {}
        inc_up_by: dict[str, dict] = {l: {} for l in self.states}
        inc_down_by: dict[str, dict] = {l: {} for l in self.states}

        for node in self.network.nodes:
            kind = self.kinds[node]
            if stats is not None:
                stats.node_updates += 1
            if kind is NodeKind.ORIGIN:
                out_id = self.network.out_links[node][0].id
                out_state = self.states[out_id]
                receiving = receiving_flow(out_state, t)
                avail = []
                for k_idx, key in enumerate(self.commodities):
                    if self.strict_origin:
                        a = cum_demand[k_idx, t] - cum_demand[k_idx, t - 1]
                    else:
                        a = cum_demand[k_idx, t] - self.released_by[key]
                    avail.append(max(0.0, a))
                total = sum(avail)
                g = transition_origin(total, receiving)
                flows = disaggregate(g, avail)
                inc_up[out_id] = inc_up.get(out_id, 0.0) + g
                self.released_total += g
                for key, f in zip(self.commodities, flows):
                    if f > 0.0 and key in out_state.up_by:
                        inc_up_by[out_id][key] = inc_up_by[out_id].get(key, 0.0) + f
                    self.released_by[key] += f
            elif kind is NodeKind.DESTINATION:
                in_id = self.network.in_links[node][0].id
                in_state = self.states[in_id]
                g = transition_destination(sending_flow(in_state, t))
                gaps = self.commodity_gaps(in_state, t)
                flows = disaggregate(g, list(gaps.values()))
                inc_down[in_id] = inc_down.get(in_id, 0.0) + g
                for key, f in zip(gaps, flows):
                    inc_down_by[in_id][key] = inc_down_by[in_id].get(key, 0.0) + f
            elif kind is NodeKind.INHOMOGENEOUS:
                in_id = self.network.in_links[node][0].id
                out_id = self.network.out_links[node][0].id
                in_state, out_state = self.states[in_id], self.states[out_id]
                g = transition_inhomogeneous(
                    sending_flow(in_state, t), receiving_flow(out_state, t)
                )
                gaps = self.commodity_gaps(in_state, t)
                flows = disaggregate(g, list(gaps.values()))
                inc_down[in_id] = inc_down.get(in_id, 0.0) + g
                inc_up[out_id] = inc_up.get(out_id, 0.0) + g
                for key, f in zip(gaps, flows):
                    inc_down_by[in_id][key] = inc_down_by[in_id].get(key, 0.0) + f
                    if key in out_state.up_by:
                        inc_up_by[out_id][key] = inc_up_by[out_id].get(key, 0.0) + f
            elif kind is NodeKind.MERGE:
                in_a, in_b = self.network.in_links[node]
                out_id = self.network.out_links[node][0].id
                out_state = self.states[out_id]
                receiving = receiving_flow(out_state, t)
                p_a = in_a.merge_priority if in_a.merge_priority is not None else 0.5
                g_a, g_b = transition_merge(
                    sending_flow(self.states[in_a.id], t),
                    sending_flow(self.states[in_b.id], t),
                    receiving,
                    p_a,
                )
                for in_link, g in ((in_a, g_a), (in_b, g_b)):
                    in_state = self.states[in_link.id]
                    gaps = self.commodity_gaps(in_state, t)
                    flows = disaggregate(g, list(gaps.values()))
                    inc_down[in_link.id] = inc_down.get(in_link.id, 0.0) + g
                    inc_up[out_id] = inc_up.get(out_id, 0.0) + g
                    for key, f in zip(gaps, flows):
                        inc_down_by[in_link.id][key] = (
                            inc_down_by[in_link.id].get(key, 0.0) + f
                        )
                        if key in out_state.up_by:
                            inc_up_by[out_id][key] = inc_up_by[out_id].get(key, 0.0) + f
            elif kind is NodeKind.DIVERGE:
                in_id = self.network.in_links[node][0].id
                in_state = self.states[in_id]
                out_a, out_b = self.network.out_links[node]
                gaps = self.commodity_gaps(in_state, t)
                routed: dict[str, dict] = {out_a.id: {}, out_b.id: {}}
                for key, gap in gaps.items():
                    target = route(key, node, in_id)
                    if target in routed:
                        routed[target][key] = gap
                s_a = sum(routed[out_a.id].values())
                s_b = sum(routed[out_b.id].values())
                g_a, g_b = transition_diverge(
                    s_a,
                    s_b,
                    receiving_flow(self.states[out_a.id], t),
                    receiving_flow(self.states[out_b.id], t),
                )
                inc_down[in_id] = inc_down.get(in_id, 0.0) + g_a + g_b
                for out_link, g, side in ((out_a, g_a, out_a.id), (out_b, g_b, out_b.id)):
                    inc_up[out_link.id] = inc_up.get(out_link.id, 0.0) + g
                    out_state = self.states[out_link.id]
                    side_gaps = routed[side]
                    denom = sum(side_gaps.values()) + XI
                    for key, gap in side_gaps.items():
                        f = g * gap / denom
                        inc_down_by[in_id][key] = inc_down_by[in_id].get(key, 0.0) + f
                        if key in out_state.up_by:
                            inc_up_by[out_link.id][key] = (
                                inc_up_by[out_link.id].get(key, 0.0) + f
                            )

        # apply the step: one new sample per curve
        for link_id, state in self.states.items():
            state.up.append(state.up.last + inc_up.get(link_id, 0.0))
            state.down.append(state.down.last + inc_down.get(link_id, 0.0))
            for key in state.up_by:
                state.up_by[key].append(
                    state.up_by[key].last + inc_up_by[link_id].get(key, 0.0)
                )
                state.down_by[key].append(
                    state.down_by[key].last + inc_down_by[link_id].get(key, 0.0)
                )
        total_demand = float(cum_demand[:, t].sum())
        self.backlog[t] = max(0.0, total_demand - self.released_total)
        self.vehicles[t] = sum(s.up.last - s.down.last for s in self.states.values())

    def travel_time_column(self, t: int) -> list[float]:
        return [link_travel_time(self.states[l.id], t) for l in self.network.links]

    def result(self, travel_times: np.ndarray, demand_total: float) -> LoadResult:
        return LoadResult(
            travel_times=travel_times,
            origin_backlog=self.backlog.copy(),
            vehicles_in_network=self.vehicles.copy(),
            released=self.released_total,
            exited=self.states[self.dest_in].down.last,
            demand_total=demand_total,
        )


def path_ltm(
    network: Network,
    pathset: PathSet,
    demand: np.ndarray,
    capacity: dict[str, np.ndarray],
    dt: float,
    *,
    strict_origin: bool = False,
    stats: LoaderStats | None = None,
) -> LoadResult:
    """Load fixed paths through one realization's demand and capacity."""
    pathset.validate_against(network)
    T = demand.size - 1
    commodities = list(range(len(pathset.paths)))
    links_by_commodity = {p: set(path) for p, path in enumerate(pathset.paths)}
    successors: list[dict[str, str]] = []
    for path in pathset.paths:
        table = {}
        for a, b in zip(path, path[1:]):
            table[a] = b
        successors.append(table)

    engine = _Engine(network, capacity, dt, T,
                     commodities, links_by_commodity, strict_origin)
    cum = _prefix_demand(demand, pathset.mu)

    def route(key, node, in_link_id):
        return successors[key].get(in_link_id)

    if stats is not None:
        stats.time_loops += 1
    for t in range(1, T + 1):
        engine.step(t, cum, route, stats)

    travel = np.empty((len(network.links), T + 1))
    for t in range(1, T + 1):
        travel[:, t] = engine.travel_time_column(t)
    travel[:, 0] = travel[:, 1]
    return engine.result(travel, float(cum[:, T].sum()))


def translate(
    policies: Sequence[Policy],
    splits: SplitSchedule,
    current_ttd: TravelTimeDistribution,
    realization: int = 0,
    stats: LoaderStats | None = None,
) -> PathSet:
    """Realize each policy as one path per departure step.

    The walk starts at the origin at the departure time; at every node the
    event nearest to the realized history (absolute-difference metric
    against the policy's defining distribution) selects the decision, and
    the clock advances by the in-event expected traversal time rounded to
    the grid.  Policies collapsing onto one path pool their fractions.
    """
    info = current_ttd.values[realization]
    return _translate_info(policies, splits, info, current_ttd.dt, stats)


def _translate_info(
    policies: Sequence[Policy],
    splits: SplitSchedule,
    info: np.ndarray,
    dt: float,
    stats: LoaderStats | None = None,
) -> PathSet:
    first = policies[0]
    ttd0 = first.defining_ttd
    T = ttd0.horizon_steps
    origin, dest = ttd0.origin, ttd0.destination
    links = ttd0.links
    dist_by_policy = [
        prefix_distances(p.defining_ttd.values, info) for p in policies
    ]
    accumulators: dict[tuple[str, ...], np.ndarray] = {}
    for w, policy in enumerate(policies):
        tree = policy.tree
        node_index = policy.node_index
        probs = policy.defining_ttd.probabilities
        vals = policy.defining_ttd.values
        eta = splits.row(policy.label)
        for t in range(1, T + 1):
            clock = t * dt
            node = origin
            path: list[str] = []
            hops = 0
            while node != dest:
                s = min(int(clock / dt + 0.5), T)
                s = max(s, 1)
                level = tree.events_at(s)
                event = level[0] if len(level) == 1 else pick_nearest(
                    level, dist_by_policy[w][:, s]
                )
                li = int(policy.choice_levels[s][node_index[node], tree.member[s, event.support[0]]])
                if li < 0:
                    raise NonTerminatingTranslation(
                        f"policy {policy.label} has no route from node {node}"
                    )
                support = list(event.support)
                weights = probs[support]
                expected = float(weights @ vals[support, li, s] / weights.sum())
                expected = max(dt, int(expected / dt + 0.5) * dt)
                path.append(links[li].id)
                node = links[li].to_node
                clock += expected
                hops += 1
                if hops > 2 * T:
                    raise NonTerminatingTranslation(
                        f"walk from step {t} exceeded {2 * T} hops"
                    )
            key = tuple(path)
            if key not in accumulators:
                accumulators[key] = np.zeros(T + 1)
            accumulators[key][t] += eta[t]
    if stats is not None:
        stats.translations += 1
    paths = tuple(sorted(accumulators))
    mu = np.vstack([accumulators[p] for p in paths])
    mu[:, 0] = mu[:, 1]
    return PathSet(paths, mu)


def iterative_loading(
    network: Network,
    policies: Sequence[Policy],
    splits: SplitSchedule,
    scenario: Scenario,
    k_inner: int = 5,
    *,
    strict_origin: bool = False,
    stats: LoaderStats | None = None,
) -> TravelTimeDistribution:
    """Policy loading by alternating translation and path loading.

    Per realization: translate against the current iterate, load the paths,
    average travel times with step size 1/l, and repeat ``k_inner`` times
    (one more translation closes each realization).
    """
    if k_inner < 1:
        raise ValidationError("need at least one inner iteration")
    T = scenario.horizon_steps
    free = free_flow_distribution(network, scenario)
    out = np.empty((scenario.n_realizations, len(network.links), T + 1))
    for r, real in enumerate(scenario.realizations):
        current = free.values[0].copy()
        pathset = _translate_info(policies, splits, current, scenario.dt, stats)
        for l in range(1, k_inner + 1):
            result = path_ltm(
                network, pathset, real.demand, real.capacity, scenario.dt,
                strict_origin=strict_origin, stats=stats,
            )
            alpha = 1.0 / l
            current = (1.0 - alpha) * current + alpha * result.travel_times
            pathset = _translate_info(policies, splits, current, scenario.dt, stats)
        out[r] = current
    return TravelTimeDistribution(
        out, scenario.dt, scenario.probabilities, links_of(network),
        network.origin, network.destination,
    )


def link_policy_incidence(
    policies: Sequence[Policy],
    current_info: np.ndarray,
    t: int,
) -> dict[str, dict]:
    """Per-policy decision map (node -> outgoing link id) at step t.

    The event is matched against each policy's defining distribution using
    realized history before t; single-outgoing-link nodes are included for
    completeness since their decision is forced.
    """
    out: dict[str, dict] = {}
    for policy in policies:
        dists = prefix_distances(policy.defining_ttd.values, current_info)
        T = policy.defining_ttd.horizon_steps
        s = max(1, min(int(t), T))
        level = policy.tree.events_at(s)
        event = level[0] if len(level) == 1 else pick_nearest(level, dists[:, s])
        e_idx = policy.tree.member[s, event.support[0]]
        table = {}
        for node, j in policy.node_index.items():
            li = int(policy.choice_levels[s][j, e_idx])
            if li >= 0:
                table[node] = policy.defining_ttd.links[li].id
        out[policy.label] = table
    return out


def po_ltm(
    network: Network,
    policies: Sequence[Policy],
    splits: SplitSchedule,
    scenario: Scenario,
    *,
    strict_origin: bool = False,
    stats: LoaderStats | None = None,
    diagnostics: list | None = None,
) -> TravelTimeDistribution:
    """Chronological policy loading: one pass over time per realization.

    Policies are the commodities.  At every step the realized travel times
    written so far pick each policy's event (incrementally accumulated
    absolute-difference metric), which fixes the diverge decisions for that
    step; after moving flows the step's travel times are appended to the
    realized history.  ``diagnostics`` (a list, if given) receives one
    LoadResult per realization for conservation checks.
    """
    T = scenario.horizon_steps
    commodities = list(range(len(policies)))
    out = np.empty((scenario.n_realizations, len(network.links), T + 1))
    n_def = policies[0].defining_ttd.n_realizations
    link_count = len(network.links)

    for r, real in enumerate(scenario.realizations):
        engine = _Engine(
            network, real.capacity, scenario.dt, T, commodities, None, strict_origin
        )
        shares = np.vstack([splits.row(p.label) for p in policies])
        cum = _prefix_demand(real.demand, shares)
        info = np.zeros((link_count, T + 1))
        running = [np.zeros(n_def) for _ in policies]
        choice_maps: list[dict] = [{} for _ in policies]

        if stats is not None:
            stats.time_loops += 1
        for t in range(1, T + 1):
            if t >= 2:
                col = info[:, t - 1]
                for w, policy in enumerate(policies):
                    diff = np.abs(
                        policy.defining_ttd.values[:, :, t - 1] - col[np.newaxis, :]
                    ).sum(axis=1)
                    running[w] += diff
            for w, policy in enumerate(policies):
                tree = policy.tree
                level = tree.events_at(t)
                event = level[0] if len(level) == 1 else pick_nearest(level, running[w])
                e_idx = tree.member[t, event.support[0]]
                table = {}
                for node, j in policy.node_index.items():
                    li = int(policy.choice_levels[t][j, e_idx])
                    if li >= 0:
                        table[node] = policy.defining_ttd.links[li].id
                choice_maps[w] = table

            def route(key, node, in_link_id):
                return choice_maps[key].get(node)

            engine.step(t, cum, route, stats)
            info[:, t] = engine.travel_time_column(t)
        info[:, 0] = info[:, 1]
        out[r] = info
        if diagnostics is not None:
            diagnostics.append(engine.result(info, float(cum[:, T].sum())))
    return TravelTimeDistribution(
        out, scenario.dt, scenario.probabilities, links_of(network),
        network.origin, network.destination,
    )


def single_route_pathset(network: Network, horizon_steps: int) -> PathSet:
    """The unique origin-destination path on a diverge-free network."""
    node = network.origin
    path: list[str] = []
    seen = set()
    while node != network.destination:
        outs = network.out_links[node]
        if len(outs) != 1 or node in seen:
            raise ValidationError("network does not have a unique route")
        seen.add(node)
        path.append(outs[0].id)
        node = outs[0].to_node
    mu = np.ones((1, horizon_steps + 1))
    return PathSet((tuple(path),), mu)
