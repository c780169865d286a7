import math

import pytest

from mams.abstraction import AgentConfig, build_abstraction, full_resolution_graph
from mams.merge import astar, gap_heuristic, merge_graphs, path_cost
from mams.network import solve
from mams.search import AgentState, MessageError, VertexMessage, extract_path
from mams.world import Node

from conftest import free_tree, random_graphs, random_tree

S = Node(0, (0, 0))


def corner_agent(depth=3, alpha=1.0, goal=None):
    t = free_tree(depth)
    g = build_abstraction(t, AgentConfig(0, (0.5, 0.5), alpha))
    goal = goal or Node(0, (t.side - 1, t.side - 1))
    return AgentState(0, g, S, goal)


def run_alone(agent, limit=10000):
    for _ in range(limit):
        if not agent.active:
            return
        agent.step([])
    raise AssertionError("agent did not stop")


def test_start_is_open_with_zero_g():
    a = corner_agent()
    assert a.g[a.start] == 0.0 and a.pred[a.start] == a.start
    assert a.open_vertices() == {a.start}


def test_single_agent_matches_astar_order(rng):
    for _ in range(10):
        t = random_tree(rng, 4, lethal=0.2)
        g = full_resolution_graph(t)
        s = Node(0, (rng.randrange(16), rng.randrange(16)))
        goal = Node(0, (rng.randrange(16), rng.randrange(16)))
        order = []
        ref = astar(g, s, goal, gap_heuristic(goal, g.lambda2), expanded=order)
        a = AgentState(0, g.copy(), s, goal)
        seen = []
        while a.active:
            out = a.step([])
            seen.extend(m.vertex for m in out)
        assert seen == order
        v, cost = a.result()
        if ref is None:
            assert v is None and cost == math.inf
        else:
            assert cost == ref.cost


def test_inactive_agent_is_silent():
    a = corner_agent(2)
    run_alone(a)
    assert not a.active
    before = dict(a.g), a.expansions
    assert a.step([]) == []
    assert (dict(a.g), a.expansions) == before


def test_goal_expansion_inactivates():
    a = corner_agent(2, alpha=50.0)
    run_alone(a)
    v, cost = a.result()
    assert v == Node(0, (3, 3))
    assert v not in a.closed and v in a.goal_done
    assert cost == pytest.approx(6 * 0.001)


def test_case_a_adopts_better_g():
    a = corner_agent()
    v = Node(0, (0, 1))
    a.step([])  # expands the start, g(v) = 0.001
    assert a.g[v] == pytest.approx(0.001)
    a.process_message(VertexMessage(v, 0.0005, 0.0, 1, S))
    assert a.g[v] == 0.0005 and v in a.open_vertices()


def test_case_a_keeps_better_local_g_when_expanded():
    a = corner_agent()
    a.step([])
    a.process_message(VertexMessage(S, 5.0, 0.0, 1, S))
    assert a.g[S] == 0.0


def test_adopt_keeps_larger_h():
    a = corner_agent()
    v = Node(0, (0, 1))
    a.h[v] = 5.0
    a.process_message(VertexMessage(v, 0.0001, 3.0, 1, S))
    assert a.h[v] == 5.0
    a.process_message(VertexMessage(v, 0.00001, 7.0, 1, S))
    assert a.h[v] == 7.0


def test_case_b_surgery_replaces_coarse_vertex():
    a = corner_agent()
    coarse = Node(2, (1, 1))
    fine = Node(0, (4, 4))
    assert coarse in a.graph
    a.process_message(VertexMessage(fine, 1.0, 0.0, 1, Node(0, (3, 4))))
    assert coarse not in a.graph and fine in a.graph
    assert coarse not in a.g
    nb = a.graph.neighbors(fine)
    # 1@1,1 only touches it at a corner
    assert nb == {Node(2, (0, 1)), Node(2, (1, 0))}
    assert all(fine in a.graph.neighbors(w) for w in nb)
    # a hole is left where the rest of the coarse vertex was
    assert a.graph.containing(Node(0, (7, 7))) is None
    assert a.g[fine] == 1.0


def test_case_c_discards_coarser_message():
    a = corner_agent()
    before = set(a.graph.vertices), dict(a.g)
    a.process_message(VertexMessage(Node(1, (0, 0)), 0.0, 0.0, 1, Node(1, (0, 0))))
    assert (set(a.graph.vertices), dict(a.g)) == before


def test_case_d_fills_hole_after_surgery():
    a = corner_agent()
    a.process_message(VertexMessage(Node(0, (4, 4)), 1.0, 0.0, 1, Node(0, (3, 4))))
    second = Node(0, (4, 5))
    a.process_message(VertexMessage(second, 1.1, 0.0, 1, Node(0, (4, 4))))
    assert second in a.graph
    assert Node(0, (4, 4)) in a.graph.neighbors(second)
    assert a.g[second] == 1.1


def test_lethal_notice_cuts_without_opening():
    a = corner_agent()
    wall = Node(0, (4, 4))
    a.process_message(VertexMessage(wall, math.inf, 0.0, 1, wall, kind="lethal"))
    assert wall in a.graph and Node(2, (1, 1)) not in a.graph
    assert wall not in a.g and a.open_vertices() == {a.start}
    # already finer here, nothing to do
    a.process_message(VertexMessage(Node(1, (0, 0)), math.inf, 0.0, 1, Node(1, (0, 0)),
                                    kind="lethal"))
    assert Node(1, (0, 0)) not in a.graph


def test_malformed_vertex_is_rejected():
    a = corner_agent()
    with pytest.raises(MessageError):
        a.process_message(VertexMessage(Node(0, (99, 0)), 0.0, 0.0, 1, S))
    with pytest.raises(MessageError):
        a.process_message(VertexMessage(Node(0, (1,)), 0.0, 0.0, 1, S))


def test_reactivation_on_useful_message():
    a = corner_agent(2, alpha=50.0)
    run_alone(a)
    assert not a.active
    v = Node(0, (2, 3))
    a.process_message(VertexMessage(v, 0.0001, 0.0, 1, S))
    assert a.active
    assert v in a.open_vertices()


def test_start_message_adopted_as_own_predecessor():
    t = free_tree(3)
    g = build_abstraction(t, AgentConfig(1, (7.5, 7.5), 1.0))
    a = AgentState(1, g, S, Node(0, (7, 7)), peers=1)
    assert a.start != S
    a.process_message(VertexMessage(S, 0.0, 0.0, 0, S, kind="start"))
    assert a.start == S and a.pred[S] == S and a.waiting == 0


def test_waits_for_start_announcements():
    a = AgentState(0, full_resolution_graph(free_tree(2)), S, Node(0, (3, 3)), peers=2)
    assert a.step([]) == []
    a.process_message(VertexMessage(Node(0, (1, 1)), 0.0, 0.0, 1, Node(0, (1, 1)), kind="start"))
    assert a.step([]) == []
    a.process_message(VertexMessage(Node(0, (2, 2)), 0.0, 0.0, 2, Node(0, (2, 2)), kind="start"))
    assert len(a.step([])) == 1


def test_strict_adopt_needs_exact_predecessor():
    t = free_tree(3)
    g = build_abstraction(t, AgentConfig(0, (0.5, 0.5), 1.0))
    loose = AgentState(0, g.copy(), S, Node(0, (7, 7)))
    strict = AgentState(0, g.copy(), S, Node(0, (7, 7)), strict_adopt=True)
    # predecessor lies inside a coarse local vertex
    msg = VertexMessage(Node(0, (4, 4)), 1.0, 0.0, 1, Node(0, (5, 4)))
    assert loose.adopt(msg)
    assert not strict.adopt(msg)


def test_fresh_neighbors_are_relaxed():
    a = corner_agent()
    a.step([])
    for t in (Node(0, (0, 1)), Node(0, (1, 0))):
        assert a.pred[t] == S and a.g[t] == pytest.approx(0.001)
    assert Node(0, (1, 1)) not in a.g


def test_closed_vertex_reopened_on_better_relaxation():
    t = free_tree(2)
    g = full_resolution_graph(t)
    a = AgentState(0, g, S, Node(0, (3, 3)))
    v = Node(0, (0, 1))
    # pretend v was expanded with a stale, too large g
    a.g[v] = 1.0
    a.h[v] = 0.0
    a.closed.add(v)
    a.expand(S)
    assert v not in a.closed and a.g[v] == pytest.approx(0.001)


def test_g_never_increases(rng):
    t = random_tree(rng, 4, lethal=0.1)
    gs = random_graphs(rng, t, 3)
    history = {}

    def watch(now, agents, bus):
        for ag in agents:
            for v, gv in ag.g.items():
                key = (ag.id, v)
                if key in history:
                    assert gv <= history[key]
                history[key] = gv

    solve(gs, Node(0, (0, 0)), Node(0, (15, 15)), policy="random", seed=3, on_round=watch)


def test_extract_path_crosses_agents(rng):
    hit = 0
    for _ in range(25):
        t = random_tree(rng, 4, lethal=0.1)
        gs = random_graphs(rng, t, 3)
        run = solve(gs, Node(0, (0, 0)), Node(0, (15, 15)))
        if run.path is None:
            continue
        m = merge_graphs(gs)
        vs = run.path.vertices
        assert all(w in m.neighbors(v) for v, w in zip(vs, vs[1:]))
        assert path_cost(m, vs) == pytest.approx(run.cost, abs=1e-9)
        senders = {msg.sender for msg in run.published
                   if msg.vertex in vs and msg.kind == "expand"}
        hit += len(senders) > 1
    assert hit > 0


def test_extract_path_single_agent():
    t = free_tree(2)
    g = full_resolution_graph(t)
    run = solve([g], S, Node(0, (0, 3)))
    assert run.path.vertices == tuple(Node(0, (0, j)) for j in range(4))
    assert extract_path(run.published, Node(0, (0, 3)), 99.0, g.node_cost) is None
