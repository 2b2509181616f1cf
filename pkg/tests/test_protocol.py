import copy
import itertools
import math

import pytest

from lfmroute.protocol import (ACCEPT, BACKWARD, FORWARD, REJECT, SENTINEL, ForwardMoveRequest,
                               ForwardMoveResponse, Hello, NeighborUpdate, ProtocolError, Schedule,
                               Send, TimerConfig, UpdateEntry, available_capacity, format_packet,
                               init_node, utilization_from_busy_time)

from conftest import MBPS

LOOSE = TimerConfig(acceptance_floor=0.5)


def sends(effects, kind=None):
    return [e for e in effects if isinstance(e, Send) and (kind is None or isinstance(e.packet, kind))]


def node_with(forward, capacities, learned=None, config=TimerConfig(), d=9, self_id=0):
    """Router ``self_id`` with a hand-set forward set for destination ``d``."""
    n = init_node(self_id, sorted(capacities), capacities, config)
    e = n.entry(d)
    for i, c in (learned or {}).items():
        e.learned_backward_capacity[i] = c
        e.learned_nominal[i] = c
    e.forward_set.update(forward)
    n._recompute(d)
    n._dirty = False
    return n


# -- init_node ----------------------------------------------------------------


def test_init_triangle_node():
    n = init_node(0, [1, 2], {1: 10 * MBPS, 2: 10 * MBPS})
    assert set(n.main_table) == {1, 2}
    assert n.forward_set(1) == {1} and n.forward_set(2) == {2}
    assert all(x.utilization == 0 for x in n.neighbor_table.values())


def test_init_isolated_node():
    n = init_node(4, [], {})
    assert n.main_table == {} and n.neighbor_table == {}


def test_init_middle_of_path():
    n = init_node(1, [0, 2], {0: MBPS, 2: MBPS})
    assert {d: n.forward_set(d) for d in n.main_table} == {0: {0}, 2: {2}}


def test_init_requires_all_capacities():
    with pytest.raises(ValueError):
        init_node(0, [1, 2], {1: MBPS})


def test_no_self_entry_with_forward_set():
    n = init_node(0, [1], {1: MBPS})
    assert not n.forward_set(0)


# -- arithmetic -----------------------------------------------------------------


@pytest.mark.parametrize("busy, window, u", [(15, 30, 0.5), (0, 30, 0.0), (30, 30, 1.0), (31, 30, 1.0)])
def test_utilization_from_busy_time(busy, window, u):
    assert utilization_from_busy_time(busy, window) == u


def test_utilization_zero_window():
    with pytest.raises(ValueError):
        utilization_from_busy_time(0, 0)


@pytest.mark.parametrize("u, c, avail", [(0.5, 10, 5), (0.0, 10, 10), (1.0, 10, 0)])
def test_available_capacity(u, c, avail):
    assert available_capacity(u, c * MBPS) == avail * MBPS


def test_path_capacity_direct_branch():
    n = init_node(0, [2], {2: 10 * MBPS})
    n.neighbor_table[2].utilization = 0.2
    assert n.path_capacity(2, 2) == pytest.approx(8 * MBPS)


def test_path_capacity_min_rule():
    n = node_with({1}, {1: 10 * MBPS}, learned={1: 5 * MBPS})
    n.neighbor_table[1].utilization = 0.2
    assert n.path_capacity(1, 9) == 5 * MBPS


def test_path_capacity_unannounced_is_zero():
    n = node_with({1}, {1: 10 * MBPS})
    assert n.path_capacity(1, 9) == 0.0


def test_path_capacity_unknown_neighbor():
    n = node_with({1}, {1: 10 * MBPS})
    with pytest.raises(ProtocolError):
        n.path_capacity(5, 9)


def test_total_capacity_examples():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 6 * MBPS, 2: 4 * MBPS})
    assert n.total_capacity(9) == 10 * MBPS
    assert n.main_table[9].total_capacity == 10 * MBPS
    assert node_with(set(), {1: MBPS}).total_capacity(9) == 0
    single = node_with({1}, {1: 10 * MBPS}, learned={1: 8 * MBPS})
    assert single.total_capacity(9) == 8 * MBPS
    assert single.total_capacity(77) == 0  # unknown destination


# -- announcements ----------------------------------------------------------------


def update_entry(pkt, d):
    return next(e for e in pkt.entries if e.destination == d)


def test_forward_announcement_excludes_recipient_share():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS, 3: MBPS}, learned={1: 6 * MBPS, 2: 4 * MBPS})
    e = update_entry(n.build_neighbor_update(1), 9)
    assert (e.destination, e.capacity, e.tag) == (9, 4 * MBPS, FORWARD)


def test_backward_announcement_is_total():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS, 3: MBPS}, learned={1: 6 * MBPS, 2: 4 * MBPS})
    e = update_entry(n.build_neighbor_update(3), 9)
    assert (e.capacity, e.tag) == (10 * MBPS, BACKWARD)


def test_full_poison_to_sole_forward():
    n = node_with({1}, {1: 10 * MBPS, 3: MBPS}, learned={1: 6 * MBPS})
    e = update_entry(n.build_neighbor_update(1), 9)
    assert (e.capacity, e.tag) == (0, FORWARD)


def test_update_has_one_entry_per_destination_and_sentinel():
    n = init_node(0, [1, 2], {1: MBPS, 2: MBPS})
    pkt = n.build_neighbor_update(1)
    assert [e.destination for e in pkt.entries] == [0, 1, 2]
    me = update_entry(pkt, 0)
    assert me.capacity == SENTINEL and me.tag == BACKWARD
    # the recipient's own destination entry is poisoned since it is forward
    assert update_entry(pkt, 1).tag == FORWARD


# -- receiving updates --------------------------------------------------------------


def test_backward_entry_raises_path_capacity_and_fans_out():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS})
    assert n.total_capacity(9) == 0
    eff = n.handle_neighbor_update(NeighborUpdate(1, (UpdateEntry(9, 5 * MBPS, BACKWARD, 5 * MBPS),)), 0.0)
    assert n.main_table[9].total_capacity == 5 * MBPS
    ups = sends(eff, NeighborUpdate)
    assert sorted(s.to for s in ups) == [1, 2]


def test_identical_update_is_idempotent():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS})
    pkt = NeighborUpdate(1, (UpdateEntry(9, 5 * MBPS, BACKWARD, 5 * MBPS),))
    n.handle_neighbor_update(pkt, 0.0)
    eff = n.handle_neighbor_update(pkt, 1.0)
    assert not sends(eff, NeighborUpdate)


def test_forward_entry_triggers_move_request():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 10 * MBPS})
    n.neighbor_table[2].utilization = 0.5  # avail 5 Mbps
    eff = n.handle_neighbor_update(NeighborUpdate(2, (UpdateEntry(9, 3 * MBPS, FORWARD, 3 * MBPS),)), 0.0)
    reqs = sends(eff, ForwardMoveRequest)
    assert [(r.to, r.packet.destination) for r in reqs] == [(2, 9)]
    assert reqs[0].packet.gain == 3 * MBPS
    assert (9, 2) in n.pending_moves


def test_update_from_stranger_ignored():
    n = node_with({1}, {1: 10 * MBPS})
    eff = n.handle_neighbor_update(NeighborUpdate(7, (UpdateEntry(9, 5.0, BACKWARD),)), 0.0)
    assert eff == [] and n.stats["ignored_updates"] == 1


def test_update_resets_timeout_timer():
    n = node_with({1}, {1: 10 * MBPS})
    eff = n.handle_neighbor_update(NeighborUpdate(1, ()), 4.0)
    assert Schedule(("timeout", 1), 4.0 + n.config.timeout_interval) in eff


# -- move condition -------------------------------------------------------------------


def move_node(f_value, avail_mbps, total_mbps):
    n = node_with({1}, {1: 100 * MBPS, 2: 10 * MBPS}, learned={1: total_mbps * MBPS} if total_mbps else None)
    n.neighbor_table[2].utilization = 1 - avail_mbps / 10
    n.main_table[9].learned_forward_capacity[2] = f_value * MBPS
    n._recompute(9)
    return n


def test_move_condition_true():
    assert move_node(3, 5, 10).evaluate_move_condition(2, 9)


def test_move_condition_false():
    assert not move_node(0.5, 5, 10).evaluate_move_condition(2, 9)


def test_move_condition_bootstrap():
    n = move_node(1, 1, 0)
    assert n.main_table[9].total_capacity == 0
    assert n.evaluate_move_condition(2, 9)


def test_move_condition_bootstrap_accepts_backward_value():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS})
    n.main_table[9].learned_backward_capacity[2] = MBPS
    assert n.evaluate_move_condition(2, 9)
    n.main_table[9].learned_backward_capacity[1] = MBPS
    n._recompute(9)
    # with capacity already in hand a backward value no longer counts
    assert not n.evaluate_move_condition(2, 9)


def test_move_condition_contract():
    n = move_node(3, 5, 10)
    with pytest.raises(ProtocolError):
        n.evaluate_move_condition(1, 9)
    with pytest.raises(ProtocolError):
        n.evaluate_move_condition(6, 9)


@pytest.mark.parametrize("a, b", [(0.5, 1.5), (1.0, 4.0), (0.9, 0.95)])
def test_move_condition_monotone(a, b):
    assert move_node(a, 5, 10).evaluate_move_condition(2, 9) <= move_node(b, 5, 10).evaluate_move_condition(2, 9)
    # less spare link capacity can only make the move less attractive
    assert move_node(3, a, 10).evaluate_move_condition(2, 9) <= move_node(3, b, 10).evaluate_move_condition(2, 9)


# -- move requests ---------------------------------------------------------------------


def response(eff):
    (r,) = sends(eff, ForwardMoveResponse)
    return r.packet


def test_destination_always_accepts():
    n = init_node(9, [1], {1: MBPS})
    assert response(n.handle_move_request(ForwardMoveRequest(1, 9, 1), 0.0)).verdict == ACCEPT


def test_sole_forward_rejects():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 5 * MBPS})
    assert response(n.handle_move_request(ForwardMoveRequest(1, 9, 1, gain=50 * MBPS), 0.0)).verdict == REJECT
    assert n.forward_set(9) == {1}


def test_accept_keeps_half_capacity():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 4 * MBPS, 2: 6 * MBPS}, config=LOOSE)
    eff = n.handle_move_request(ForwardMoveRequest(1, 9, 1, gain=8 * MBPS), 0.0)
    assert response(eff).verdict == ACCEPT
    assert n.forward_set(9) == {2}
    assert n.main_table[9].total_capacity == 6 * MBPS
    assert sends(eff, NeighborUpdate)


def test_reject_below_floor():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 6 * MBPS, 2: 4 * MBPS}, config=LOOSE)
    assert response(n.handle_move_request(ForwardMoveRequest(1, 9, 1, gain=50 * MBPS), 0.0)).verdict == REJECT
    assert n.forward_set(9) == {1, 2}


def test_reject_without_clear_gain():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 4 * MBPS, 2: 6 * MBPS}, config=LOOSE)
    # the requester would gain exactly what we lose
    assert response(n.handle_move_request(ForwardMoveRequest(1, 9, 1, gain=4 * MBPS), 0.0)).verdict == REJECT


def test_request_from_backward_neighbor_changes_nothing():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 5 * MBPS})
    assert response(n.handle_move_request(ForwardMoveRequest(2, 9, 1, gain=MBPS), 0.0)).verdict == ACCEPT
    assert n.forward_set(9) == {1}


def test_request_from_stranger_rejected():
    n = node_with({1}, {1: 10 * MBPS})
    assert response(n.handle_move_request(ForwardMoveRequest(5, 9, 1, gain=MBPS), 0.0)).verdict == REJECT


def test_concurrent_requests_lower_id_wins():
    a = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 1 * MBPS, 2: 9 * MBPS},
                  config=LOOSE, self_id=0)
    a._send_request(9, 1, 5 * MBPS, 0.0, [])
    assert response(a.handle_move_request(ForwardMoveRequest(1, 9, 7, gain=50 * MBPS), 0.0)).verdict == REJECT
    b = node_with({0, 2}, {0: 10 * MBPS, 2: 10 * MBPS}, learned={0: 1 * MBPS, 2: 9 * MBPS},
                  config=LOOSE, self_id=1)
    b._send_request(9, 0, 5 * MBPS, 0.0, [])
    assert response(b.handle_move_request(ForwardMoveRequest(0, 9, 7, gain=50 * MBPS), 0.0)).verdict == ACCEPT


# -- move responses ----------------------------------------------------------------------


def requester():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 5 * MBPS})
    n.main_table[9].learned_forward_capacity[2] = 3 * MBPS
    eff = []
    n._send_request(9, 2, 3 * MBPS, 0.0, eff)
    rid = sends(eff, ForwardMoveRequest)[0].packet.request_id
    return n, rid


def test_accept_commits_forward_node():
    n, rid = requester()
    n.handle_move_response(ForwardMoveResponse(2, 9, rid, ACCEPT), 1.0)
    assert n.forward_set(9) == {1, 2}
    e = n.main_table[9]
    assert e.per_forward_capacity[2] == 3 * MBPS
    assert sum(e.per_forward_capacity.values()) == e.total_capacity
    assert not n.pending_moves and ("move", 9, 2) not in n.timer_deadlines


def test_reject_leaves_state():
    n, rid = requester()
    before = copy.deepcopy(n.main_table)
    n.handle_move_response(ForwardMoveResponse(2, 9, rid, REJECT), 1.0)
    assert n.main_table == before
    assert not n.pending_moves


def test_unknown_request_id_ignored():
    n, rid = requester()
    before = copy.deepcopy(n.main_table)
    assert n.handle_move_response(ForwardMoveResponse(2, 9, rid + 100, ACCEPT), 1.0) == []
    assert n.main_table == before and (9, 2) in n.pending_moves


def test_cycle_guard_refuses_commit():
    n, rid = requester()
    n.cycle_guard = lambda k, l, d: True
    n.handle_move_response(ForwardMoveResponse(2, 9, rid, ACCEPT), 1.0)
    assert n.forward_set(9) == {1}
    assert n.stats["guard_rejections"] == 1


def test_rejected_request_backs_off():
    n, rid = requester()
    n.handle_move_response(ForwardMoveResponse(2, 9, rid, REJECT), 1.0)
    eff = []
    n._scan_moves(9, 2.0, eff)
    assert not sends(eff, ForwardMoveRequest)
    n._scan_moves(9, 1.0 + n.config.move_timeout, eff)
    assert sends(eff, ForwardMoveRequest)


# -- timers ------------------------------------------------------------------------------


def test_hello_timer_emits_and_rearms():
    n = init_node(0, [1, 2], {1: MBPS, 2: MBPS})
    n.start(0.0)
    eff = n.on_timer(("hello",), n.config.hello_period)
    assert sorted(s.to for s in sends(eff, Hello)) == [1, 2]
    assert n.timer_deadlines[("hello",)] == 2 * n.config.hello_period


def test_update_timer_emits_and_rearms():
    n = init_node(0, [1, 2], {1: MBPS, 2: MBPS})
    n.start(0.0)
    eff = n.on_timer(("update",), n.config.update_period)
    assert sorted(s.to for s in sends(eff, NeighborUpdate)) == [1, 2]
    assert n.timer_deadlines[("update",)] == 2 * n.config.update_period


def test_timeout_zeroes_sole_forward():
    n = node_with({1}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 5 * MBPS})
    n.timer_deadlines[("timeout", 1)] = 100.0
    eff = n.on_timer(("timeout", 1), 100.0)
    assert n.main_table[9].total_capacity == 0
    assert 1 in n.neighbor_table
    ups = sends(eff, NeighborUpdate)
    assert ups and all(update_entry(u.packet, 9).capacity == 0 for u in ups)


def test_neighbor_remove_shrinks_forward_set():
    n = node_with({1, 2}, {1: 10 * MBPS, 2: 10 * MBPS}, learned={1: 4 * MBPS, 2: 6 * MBPS})
    n.timer_deadlines[("remove", 1)] = 45.0
    n.on_timer(("remove", 1), 45.0)
    assert 1 not in n.neighbor_table
    assert n.forward_set(9) == {2}
    assert n.main_table[9].per_forward_capacity == {2: 6 * MBPS}


def test_move_timer_resends_once_with_fresh_id():
    n, rid = requester()
    deadline = n.pending_moves[(9, 2)].deadline
    eff = n.on_timer(("move", 9, 2), deadline)
    reqs = sends(eff, ForwardMoveRequest)
    assert len(reqs) == 1 and reqs[0].packet.request_id != rid
    assert n.pending_moves[(9, 2)].request_id == reqs[0].packet.request_id
    # the old id is dead
    n.handle_move_response(ForwardMoveResponse(2, 9, rid, ACCEPT), deadline + 1)
    assert n.forward_set(9) == {1}


def test_superseded_timer_ignored():
    n = init_node(0, [1], {1: MBPS})
    n.start(0.0)
    assert n.on_timer(("hello",), 3.0) == []


# -- hello ---------------------------------------------------------------------------------


def test_hello_resets_remove_timer():
    n = init_node(0, [1], {1: MBPS})
    eff = n.handle_hello(Hello(1, MBPS), 7.0)
    assert n.timer_deadlines[("remove", 1)] == 7.0 + 3 * n.config.hello_period
    assert Schedule(("remove", 1), 7.0 + 45.0) in eff


def test_unsolicited_hello_acknowledged_once():
    n = init_node(0, [1], {1: MBPS})
    hellos = sends(n.handle_hello(Hello(1, MBPS), 0.0), Hello)
    assert len(hellos) == 1 and hellos[0].packet.ack
    assert not sends(n.handle_hello(Hello(1, MBPS, ack=True), 0.0), Hello)


def test_hello_from_new_neighbor_with_hint():
    n = init_node(0, [1], {1: MBPS})
    n.handle_hello(Hello(5, 2 * MBPS), 0.0)
    assert n.neighbor_table[5].link_capacity == 2 * MBPS
    assert n.forward_set(5) == {5}


def test_timer_config_validation():
    with pytest.raises(ValueError):
        TimerConfig(neighbor_remove_multiplier=1)
    with pytest.raises(ValueError):
        TimerConfig(k_threshold=0)
    fast = TimerConfig().fast()
    assert (fast.hello_period, fast.update_period, fast.move_timeout) == (1.5, 3.0, 3.0)
    assert fast.timeout_interval == 15.0


def test_format_packet_is_tab_separated():
    assert format_packet(Hello(1, 1e7)) == "Hello\t1\t10000000\treq"
    line = format_packet(NeighborUpdate(2, (UpdateEntry(0, math.inf, BACKWARD, math.inf),)))
    assert line == "NeighborUpdate\t2\t0:inf:B:inf"
    assert format_packet(ForwardMoveResponse(1, 2, 3, ACCEPT)).split("\t") == [
        "ForwardMoveResponse", "1", "2", "3", "accept"]


# -- triangle handshake against a brute-force oracle ---------------------------------------


def oracle_states(initial):
    """Forward-set states reachable from ``initial`` by single handshake steps.

    A state is (F_0, F_1) for destination 2 on the triangle. A step is either
    l dropping k on accepting k's request (only if l keeps a forward node) or
    k adding l once l no longer forwards through k. Every state must keep
    both routers' forward sets non-empty and the forward graph acyclic.
    """
    def ok(f0, f1):
        return f0 and f1 and not (1 in f0 and 0 in f1)

    names = {0: 1, 1: 0}
    seen = {initial}
    edges = set()
    stack = [initial]
    while stack:
        s = stack.pop()
        for k in (0, 1):
            l = names[k]
            fk, fl = set(s[k]), set(s[l])
            nxt = []
            if k in fl and len(fl) > 1:
                fl2 = fl - {k}
                nxt.append((fk, fl2))
            if l not in fk and k not in fl:
                nxt.append((fk | {l}, fl))
            for a, b in nxt:
                t = [None, None]
                t[k], t[l] = frozenset(a), frozenset(b)
                t = tuple(t)
                if ok(*t):
                    edges.add((s, t))
                    if t not in seen:
                        seen.add(t)
                        stack.append(t)
    return seen, edges


def install_guard(nodes):
    """Cycle guard reading the forward sets of exactly this copy of the network."""
    def guard(k, l, d):
        seen, stack = {l}, [l]
        while stack:
            n = stack.pop()
            if n == k:
                return True
            for m in nodes[n].forward_set(d):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return False

    for n in nodes.values():
        n.cycle_guard = guard


def triangle_nodes():
    caps = {0: {1: 10 * MBPS, 2: 10 * MBPS}, 1: {0: 10 * MBPS, 2: 10 * MBPS}, 2: {0: 10 * MBPS, 1: 10 * MBPS}}
    nodes = {}
    for k in range(3):
        nodes[k] = init_node(k, sorted(caps[k]), caps[k], LOOSE)
    install_guard(nodes)
    # converge the quiet network by hand: everyone hears everyone once
    for k in range(3):
        for j in nodes[k].neighbors():
            nodes[j].handle_neighbor_update(nodes[k].build_neighbor_update(j), 0.0)
    # router 1 also forwards through 0 and its link to 0 is busy
    e = nodes[1].entry(2)
    e.forward_set.add(0)
    nodes[1].neighbor_table[0].utilization = 0.9
    nodes[1]._recompute(2)
    for n in nodes.values():
        n.pending_moves.clear()
    return nodes


def explore(nodes, first):
    """Deliver in-flight packets in every possible order (per-link FIFO)."""
    traces = []
    finals = []
    state_count = [0]

    def snap(ns):
        return (frozenset(ns[0].forward_set(2)), frozenset(ns[1].forward_set(2)))

    def rec(ns, queues, trace, depth):
        state_count[0] += 1
        assert depth < 40, "handshake did not settle"
        live = [ch for ch, q in queues.items() if q]
        if not live:
            traces.append(trace)
            finals.extend(ns.values())
            return
        for ch in sorted(live):
            ns2 = copy.deepcopy(ns)
            install_guard(ns2)
            q2 = {c: list(q) for c, q in queues.items()}
            pkt = q2[ch].pop(0)
            src, dst = ch
            eff = ns2[dst].handle(pkt, 1.0)
            for s in sends(eff):
                q2.setdefault((dst, s.to), []).append(s.packet)
            # only destination-2 handshakes matter here; drop Hello chatter
            for c in q2:
                q2[c] = [p for p in q2[c] if not isinstance(p, Hello)]
            st = snap(ns2)
            rec(ns2, q2, trace if st == trace[-1] else trace + [st], depth + 1)

    queues = {}
    for src, s in first:
        queues.setdefault((src, s.to), []).append(s.packet)
    rec(nodes, queues, [snap(nodes)], 0)
    return traces, state_count[0], finals


def test_triangle_handshake_matches_oracle():
    nodes = triangle_nodes()
    start = (frozenset(nodes[0].forward_set(2)), frozenset(nodes[1].forward_set(2)))
    assert start == (frozenset({2}), frozenset({0, 2}))
    reachable, edges = oracle_states(start)
    # router 1 announces its new table; everything else follows from that
    nodes[1]._dirty = True
    first = [(1, s) for s in nodes[1]._flush([])]
    traces, explored, final_nodes = explore(nodes, first)
    assert traces and explored > len(traces)
    finals = set()
    for trace in traces:
        for a, b in zip(trace, trace[1:]):
            assert (a, b) in edges, (a, b)
        assert all(s in reachable for s in trace)
        finals.add(trace[-1])
    # the only loop-free outcome of 0 asking 1: 1 gives 0 up, 0 adds 1
    assert finals == {(frozenset({1, 2}), frozenset({2}))}
    assert all(n.stats["guard_rejections"] == 0 for n in final_nodes)
    expected_path = [start, (frozenset({2}), frozenset({2})), (frozenset({1, 2}), frozenset({2}))]
    assert all(t == expected_path for t in traces)


def test_oracle_enumeration_is_complete():
    # exhaustive check of the oracle against all 3x3 candidate states
    start = (frozenset({2}), frozenset({2}))
    reachable, _ = oracle_states(start)
    subsets0 = [frozenset(s) for r in range(3) for s in itertools.combinations([1, 2], r)]
    subsets1 = [frozenset(s) for r in range(3) for s in itertools.combinations([0, 2], r)]
    legal = {(a, b) for a in subsets0 for b in subsets1 if a and b and not (1 in a and 0 in b)}
    assert reachable <= legal
    two = frozenset({2})
    assert reachable == {(two, two), (frozenset({1, 2}), two), (two, frozenset({0, 2}))}
