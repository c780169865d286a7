"""Simulated message fabric and the round-robin scheduler driving MAMS-A*.

The simulator is single threaded and deterministic: the same agents, bus
policy and seed always give the same trace.
"""
from __future__ import annotations

import heapq
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .abstraction import MultiResGraph
from .merge import Path
from .search import AgentState, VertexMessage, extract_path
from .world import Node, region

TOPOLOGIES = ("broadcast", "chain")
POLICIES = ("immediate", "delayed-k", "random")


class StepBudgetExceeded(RuntimeError):
    pass


class Bus:
    """Per-receiver inboxes ordered by (due round, send sequence).

    Opening announcements (impassable vertices, then the start) always go to
    every other agent.  Expansion results follow the topology: everyone for
    ``broadcast``, only the next agent in roster order for ``chain``.
    Per-sender FIFO order holds at every receiver under every policy.
    """

    def __init__(self, n: int, topology: str = "broadcast", policy: str = "immediate", *,
                 k: int = 1, max_delay: int = 3, seed: int = 0):
        if topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {topology!r}")
        if policy not in POLICIES:
            raise ValueError(f"unknown delivery policy {policy!r}")
        self.n = n
        self.topology = topology
        self.policy = policy
        self.k = k
        self.max_delay = max_delay
        self.rng = random.Random(seed)
        # constant delays keep due rounds monotone, so plain FIFO queues suffice
        self._fifo = policy != "random"
        self.inboxes = [deque() if self._fifo else [] for _ in range(n)]
        self._seq = 0
        self._last_due: dict = {}
        self.sent = 0
        self.delivered = 0

    def _delay(self) -> int:
        if self.policy == "immediate":
            return 0
        if self.policy == "delayed-k":
            return self.k
        return self.rng.randint(0, self.max_delay)

    def _enqueue(self, sender: int, receiver: int, msg: VertexMessage, now: int) -> None:
        if self._fifo:
            self.inboxes[receiver].append((now + self._delay(), msg))
            self.sent += 1
            return
        due = now + self._delay()
        key = (sender, receiver)
        due = max(due, self._last_due.get(key, due))
        self._last_due[key] = due
        self._seq += 1
        heapq.heappush(self.inboxes[receiver], (due, self._seq, msg))
        self.sent += 1

    def receivers(self, sender: int) -> range:
        if self.topology == "chain":
            return range(sender + 1, min(sender + 2, self.n))
        return range(self.n)

    def announce(self, sender: int, msg: VertexMessage, now: int) -> None:
        for r in range(self.n):
            if r != sender:
                self._enqueue(sender, r, msg, now)

    def publish(self, sender: int, msg: VertexMessage, now: int) -> None:
        if self._fifo:
            item = (now + self._delay(), msg)
            boxes = self.inboxes
            for r in self.receivers(sender):
                if r != sender:
                    boxes[r].append(item)
                    self.sent += 1
            return
        for r in self.receivers(sender):
            if r != sender:
                self._enqueue(sender, r, msg, now)

    def take(self, receiver: int, now: int) -> list:
        box = self.inboxes[receiver]
        out = []
        if self._fifo:
            while box and box[0][0] <= now:
                out.append(box.popleft()[1])
        else:
            while box and box[0][0] <= now:
                out.append(heapq.heappop(box)[2])
        self.delivered += len(out)
        return out

    def pending(self) -> bool:
        return any(self.inboxes)

    def pending_messages(self, receiver: int) -> list:
        if self._fifo:
            return [m for _, m in self.inboxes[receiver]]
        return [m for _, _, m in sorted(self.inboxes[receiver])]


@dataclass
class Scheduler:
    """Round-robin roster; the random policy reshuffles the order every round."""

    n: int
    seed: int = 0
    shuffle: bool = False
    max_rounds: int | None = None
    round: int = 0
    terminated: bool = False

    def __post_init__(self):
        self._rng = random.Random(self.seed)

    def order(self) -> list:
        order = list(range(self.n))
        if self.shuffle:
            self._rng.shuffle(order)
        return order


@dataclass
class RunResult:
    agents: list
    trace: list
    rounds: int
    published: list
    messages: int
    deliveries: int
    cost: float
    goal_vertex: Node | None
    path: Path | None
    topology: str = "broadcast"
    meta: dict = field(default_factory=dict)

    @property
    def solved(self) -> bool:
        return self.goal_vertex is not None and self.cost < math.inf

    @property
    def expansions(self) -> list:
        return [a.expansions for a in self.agents]

    @property
    def total_expansions(self) -> int:
        return sum(self.expansions)


def round_budget(agents: Sequence[AgentState]) -> int:
    """Generous ceiling on rounds; hitting it means a bug, not a hard instance."""
    vertices = sum(len(a.graph) for a in agents)
    return 1000 + 50 * len(agents) * vertices


def make_agents(graphs: Sequence[MultiResGraph], start_cell: Node, goal_cell: Node,
                heuristic_factory: Callable | None = None, **kwargs) -> list:
    """Fresh agents over private copies of ``graphs``."""
    n = len(graphs)
    agents = []
    for i, g in enumerate(graphs):
        h = heuristic_factory(goal_cell, g.lambda2) if heuristic_factory else None
        agents.append(AgentState(i, g.copy(), start_cell, goal_cell, h, peers=n - 1, **kwargs))
    return agents


def run(agents: list, bus: Bus, scheduler: Scheduler | None = None,
        on_round: Callable | None = None) -> RunResult:
    """Drive agents until all are inactive and no message is in flight."""
    n = len(agents)
    scheduler = scheduler or Scheduler(n)
    budget = scheduler.max_rounds or round_budget(agents)
    trace = []
    published = []
    for a in agents:
        opening = (a.lethal_announcements() if n > 1 else []) + [a.announce()]
        for msg in opening:
            published.append(msg)
            if n > 1:
                bus.announce(a.id, msg, 0)
    while True:
        if not bus.pending() and not any(a.active for a in agents):
            break
        if scheduler.round >= budget:
            raise StepBudgetExceeded(f"no termination after {budget} rounds")
        now = scheduler.round
        for i in scheduler.order():
            agent = agents[i]
            out = agent.step(bus.take(i, now))
            for msg in out:
                published.append(msg)
                bus.publish(i, msg, now)
            if agent.events:
                for ev in agent.events:
                    trace.append((now, i) + ev)
                agent.events.clear()
        if on_round is not None:
            on_round(now, agents, bus)
        scheduler.round += 1
    scheduler.terminated = True
    return _finish(agents, bus, scheduler, trace, published)


def run_chain(agents: list, bus: Bus, scheduler: Scheduler | None = None,
              on_round: Callable | None = None) -> RunResult:
    if bus.topology != "chain":
        raise ValueError("run_chain needs a chain-topology bus")
    return run(agents, bus, scheduler, on_round)


def _finish(agents, bus, scheduler, trace, published) -> RunResult:
    results = [a.result() for a in agents]
    if bus.topology == "chain":
        goal, cost = results[-1]
    else:
        goal, cost = None, math.inf
        found = [(v, c) for v, c in results if v is not None]
        if found:
            finest = min(v.depth for v, _ in found)
            goal, cost = min(((v, c) for v, c in found if v.depth == finest), key=lambda t: t[1])
    path = None
    if goal is not None:
        path = extract_path(published, goal, cost, agents[0].graph.node_cost)
    return RunResult(
        agents=agents,
        trace=trace,
        rounds=scheduler.round,
        published=published,
        messages=sum(1 for m in published if m.kind == "expand"),
        deliveries=bus.delivered,
        cost=cost,
        goal_vertex=goal,
        path=path,
        topology=bus.topology,
    )


def solve(graphs: Sequence[MultiResGraph], start_cell: Node, goal_cell: Node, *,
          topology: str = "broadcast", policy: str = "immediate", k: int = 1,
          max_delay: int = 3, seed: int = 0, heuristic_factory: Callable | None = None,
          on_round: Callable | None = None, **agent_kwargs) -> RunResult:
    """Build agents over copies of ``graphs`` and run them to termination."""
    agents = make_agents(graphs, start_cell, goal_cell, heuristic_factory, **agent_kwargs)
    bus = Bus(len(agents), topology, policy, k=k, max_delay=max_delay, seed=seed)
    scheduler = Scheduler(len(agents), seed=seed, shuffle=(policy == "random"))
    return run(agents, bus, scheduler, on_round)


def trace_records(result: RunResult) -> list:
    records = []
    for rnd, agent, event, v, g, h, f, extra in result.trace:
        rec = {"round": rnd, "agent": agent, "event": event}
        if v is not None:
            box = region(v)
            rec.update(vertex=str(v), lo=list(box.lo), side=box.side,
                       g=_num(g), h=_num(h), f=_num(f))
        else:
            rec.update(vertex=None)
        rec.update(extra)
        records.append(rec)
    return records


def _num(x):
    return None if x is None or x == math.inf else x


def write_trace(fh, result: RunResult, meta: dict | None = None) -> None:
    """Newline-delimited JSON: one ``meta`` header line, then one line per event."""
    header = {"meta": dict(meta or {}, cost=_num(result.cost), rounds=result.rounds,
                           messages=result.messages,
                           path=[str(v) for v in result.path.vertices] if result.path else None)}
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    for rec in trace_records(result):
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
