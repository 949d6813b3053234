"""Compiled two-phase time step over struct-of-arrays world state.

Phase 1 reads only the state at time t: leader search, roundabout entry
checks, state classification, acceleration and lane-change decisions for
every agent. Phase 2 applies lane changes, integrates with semi-implicit
Euler, moves agents across link boundaries, updates the measurement zone
accumulators and injects due arrivals.

Positions are front-bumper coordinates measured from the link start.

One constraint sits on top of the behavioural model: an agent never moves
further in one step than its current gap to the leader minus its standstill
buffer (zero for stop lines). Leaders never reverse, so this keeps every
gap non-negative regardless of discretisation.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit

from .carfollow import _classify, _compose, _emergency, _free_acceleration, _ghr
from .lanechange import _decide

APPROACH, EXIT, ARC = 0, 1, 2
PENDING, ACTIVE, DONE = 0, 1, 2
FREE, FOLLOWING, EMERGENCY = 0, 1, 2
CONTACT_EPS = 1e-9
HOLD_ACCEL = -1e6

AGENT_DTYPE = np.dtype([
    ("status", np.int64), ("link", np.int64), ("lane", np.int64), ("rpos", np.int64),
    ("route", np.int64), ("klass", np.int64), ("state", np.int64), ("zone_in", np.int64),
    ("x", np.float64), ("v", np.float64), ("a", np.float64),
    ("length", np.float64), ("buffer", np.float64), ("a_max", np.float64),
    ("a_normal", np.float64), ("T", np.float64), ("vdes", np.float64),
    ("lc_timer", np.float64), ("t_arrival", np.float64), ("v_init", np.float64),
    ("entry_t", np.float64), ("exit_t", np.float64),
    ("zone_entry_t", np.float64), ("zone_exit_t", np.float64),
    ("zone_time", np.float64), ("zone_dist", np.float64), ("zone_stop", np.float64),
])

# parameter vector layout
P_DT, P_H, P_MINF, P_SBUF, P_FLOOR = 0, 1, 2, 3, 4
P_RP, P_SP, P_TP, P_RM, P_SM, P_TM = 5, 6, 7, 8, 9, 10
P_LC_LEAD, P_LC_LAG, P_LC_BUF, P_LC_GAIN, P_LC_WIN, P_LC_COOL = 11, 12, 13, 14, 15, 16
P_GAP, P_SCAN, P_VSTOP = 17, 18, 19
N_PARAMS = 20

# counters layout
C_NACT, C_INJ, C_EXIT, C_F1, C_F2, C_BLOCK, C_LC, C_HOLD, C_STEP = range(9)
N_COUNTERS = 9

NetArrays = namedtuple("NetArrays", [
    "link_length", "link_nlanes", "link_kind", "lane_base", "zone_start",
    "link_to_node", "link_from_node", "node_down_arc", "arc_ids", "conn",
    "route_links", "route_nlinks", "route_exit_node",
])

Work = namedtuple("Work", [
    "order", "pos", "lane_start", "lane_cnt", "keys",
    "ld_has", "ld_id", "ld_dx", "ld_v", "ld_a", "ld_len", "ld_virt", "yld",
    "acc", "lc", "cand", "candkey",
])


def make_work(capacity, n_lane_uids):
    return Work(
        order=np.zeros(capacity, np.int64), pos=np.zeros(capacity, np.int64),
        lane_start=np.zeros(n_lane_uids, np.int64), lane_cnt=np.zeros(n_lane_uids, np.int64),
        keys=np.zeros(capacity, np.float64),
        ld_has=np.zeros(capacity, np.int64), ld_id=np.full(capacity, -1, np.int64),
        ld_dx=np.zeros(capacity, np.float64), ld_v=np.zeros(capacity, np.float64),
        ld_a=np.zeros(capacity, np.float64), ld_len=np.zeros(capacity, np.float64),
        ld_virt=np.zeros(capacity, np.int64), yld=np.zeros(capacity, np.int64),
        acc=np.zeros(capacity, np.float64), lc=np.zeros(capacity, np.int64),
        cand=np.zeros(capacity, np.int64), candkey=np.zeros(capacity, np.float64),
    )


@njit(cache=True)
def build_lanes(ag, active, nact, net, wk):
    for k in range(nact):
        i = active[k]
        wk.keys[k] = (net.lane_base[ag[i].link] + ag[i].lane) * 1.0e6 + ag[i].x
    idx = np.argsort(wk.keys[:nact], kind="mergesort")
    wk.lane_cnt[:] = 0
    for k in range(nact):
        i = active[idx[k]]
        wk.order[k] = i
        wk.pos[i] = k
        wk.lane_cnt[net.lane_base[ag[i].link] + ag[i].lane] += 1
    s = 0
    for u in range(wk.lane_cnt.shape[0]):
        wk.lane_start[u] = s
        s += wk.lane_cnt[u]


@njit(cache=True)
def entry_lane(net, ag, wk, link):
    """Lane of ``link`` with the most free space at its start (ties -> rightmost)."""
    n = net.link_nlanes[link]
    if n == 1:
        return 0
    best, best_space = 0, -1e300
    for ln in range(n):
        u = net.lane_base[link] + ln
        if wk.lane_cnt[u] == 0:
            space = 1e300
        else:
            r = wk.order[wk.lane_start[u]]
            space = ag[r].x - ag[r].length
        if space > best_space:
            best, best_space = ln, space
    return best


@njit(cache=True)
def dist_to_node(net, ag, j, node):
    """Distance along the cycle from agent j's front to ``node``; -1 if it exits first."""
    a = ag[j].link
    exit_node = net.route_exit_node[ag[j].route]
    d = net.link_length[a] - ag[j].x
    at = net.link_to_node[a]
    for _ in range(net.arc_ids.shape[0] + 1):
        if at == exit_node:
            return -1.0
        if at == node:
            return d
        na = net.node_down_arc[at]
        if na < 0:
            return -1.0
        d += net.link_length[na]
        at = net.link_to_node[na]
    return -1.0


@njit(cache=True)
def yield_check(net, prm, ag, wk, approach):
    node = net.link_to_node[approach]
    down = net.node_down_arc[node]
    gap = prm[P_GAP]
    for q in range(net.arc_ids.shape[0]):
        a = net.arc_ids[q]
        for ln in range(net.link_nlanes[a]):
            u = net.lane_base[a] + ln
            for k in range(wk.lane_start[u], wk.lane_start[u] + wk.lane_cnt[u]):
                j = wk.order[k]
                rp = ag[j].rpos
                if rp > 0 and net.route_links[ag[j].route, rp - 1] == approach:
                    # entered from this approach: an ordinary leader, not a conflict
                    continue
                if a == down and ag[j].x - ag[j].length < ag[j].buffer:
                    return True
                d = dist_to_node(net, ag, j, node)
                if d >= 0.0 and ag[j].v > 0.0 and d < gap * ag[j].v:
                    return True
    return False


@njit(cache=True)
def _set_leader(wk, i, j, dx, v, a, length, virt):
    wk.ld_has[i] = 1
    wk.ld_id[i] = j
    wk.ld_dx[i] = dx
    wk.ld_v[i] = v
    wk.ld_a[i] = a
    wk.ld_len[i] = length
    wk.ld_virt[i] = virt


@njit(cache=True)
def merge_leader(i, ag, net, wk, link, dist):
    """Zipper merge of a multi-lane approach into the circle.

    The head of a lane follows the nearest vehicle ahead of it in another
    lane of the same approach (equal positions: the lower lane goes first).
    While that vehicle is still alongside, agent i waits at the line.
    """
    n = net.link_nlanes[link]
    if n < 2:
        return False
    x = ag[i].x
    lane = ag[i].lane
    best = -1
    for ln in range(n):
        if ln == lane:
            continue
        u = net.lane_base[link] + ln
        for k in range(wk.lane_start[u], wk.lane_start[u] + wk.lane_cnt[u]):
            j = wk.order[k]
            if ag[j].x > x or (ag[j].x == x and ln < lane):
                if best < 0 or ag[j].x < ag[best].x:
                    best = j
                break
    if best < 0:
        return False
    gap = ag[best].x - ag[best].length - x
    if gap > 0.0:
        _set_leader(wk, i, best, gap, ag[best].v, ag[best].a, ag[best].length, 0)
    else:
        _set_leader(wk, i, -1, dist, 0.0, 0.0, 0.0, 3)
    return True


@njit(cache=True)
def find_leader(i, ag, net, prm, wk, mode):
    """Fill the leader slots of agent i.

    mode 0: full search incl. roundabout entry check (stores the yield flag);
    mode 1: as 0 but reuses the stored yield flag;
    mode 2: vehicles only, ignoring stop lines.
    Virtual leaders (stop lines) have ``ld_virt`` = 1 (yield), 2 (lane does
    not continue along the route) or 3 (waiting for a merging vehicle).
    """
    wk.ld_has[i] = 0
    wk.ld_id[i] = -1
    wk.ld_virt[i] = 0
    if mode == 0:
        wk.yld[i] = 0
    link = ag[i].link
    lane = ag[i].lane
    x = ag[i].x
    u = net.lane_base[link] + lane
    p = wk.pos[i]
    if p + 1 < wk.lane_start[u] + wk.lane_cnt[u]:
        j = wk.order[p + 1]
        _set_leader(wk, i, j, ag[j].x - ag[j].length - x, ag[j].v, ag[j].a, ag[j].length, 0)
        return
    dist = net.link_length[link] - x
    cur, cur_lane, rp, r = link, lane, ag[i].rpos, ag[i].route
    first = True
    while dist <= prm[P_SCAN]:
        if rp + 1 >= net.route_nlinks[r]:
            return
        nxt = net.route_links[r, rp + 1]
        if mode != 2:
            if not net.conn[cur, cur_lane, nxt]:
                _set_leader(wk, i, -1, dist, 0.0, 0.0, 0.0, 2)
                return
            if first and net.link_kind[cur] == APPROACH and net.link_kind[nxt] == ARC:
                if mode == 0:
                    if yield_check(net, prm, ag, wk, cur):
                        wk.yld[i] = 1
                if wk.yld[i] == 1:
                    _set_leader(wk, i, -1, dist, 0.0, 0.0, 0.0, 1)
                    return
                if merge_leader(i, ag, net, wk, cur, dist):
                    return
        tl = entry_lane(net, ag, wk, nxt)
        u2 = net.lane_base[nxt] + tl
        if wk.lane_cnt[u2] > 0:
            j = wk.order[wk.lane_start[u2]]
            gap = dist + ag[j].x - ag[j].length
            if gap < 0.0 and mode != 2:
                # j came from a neighbouring lane and its rear still covers the line
                _set_leader(wk, i, -1, dist, 0.0, 0.0, 0.0, 3)
            else:
                _set_leader(wk, i, j, gap, ag[j].v, ag[j].a, ag[j].length, 0)
            return
        dist += net.link_length[nxt]
        cur, cur_lane, rp = nxt, tl, rp + 1
        first = False


@njit(cache=True)
def acceleration(i, ag, prm, wk):
    """Commanded acceleration and driving state of agent i from its leader slots."""
    dt = prm[P_DT]
    v = ag[i].v
    vdes = ag[i].vdes
    a_max = ag[i].a_max
    a_n = ag[i].a_normal
    state = FREE
    if wk.ld_has[i] == 1:
        dx = wk.ld_dx[i]
        if dx <= CONTACT_EPS:
            return HOLD_ACCEL, EMERGENCY
        state = _classify(v, True, dx, wk.ld_v[i], ag[i].T, a_n,
                          prm[P_SBUF], prm[P_MINF], prm[P_H])
        if state == FOLLOWING:
            own = _ghr(v, wk.ld_v[i], dx, prm[P_RP], prm[P_SP], prm[P_TP],
                       prm[P_RM], prm[P_SM], prm[P_TM])
            a = _compose(own, wk.ld_a[i], prm[P_FLOOR] * a_n, a_max)
            # never accelerate past the desired speed
            if a > 0.0 and v + a * dt > vdes:
                a = max(0.0, (vdes - v) / dt)
            return a, state
        if state == EMERGENCY:
            return _emergency(v, wk.ld_v[i], wk.ld_a[i], dx, a_n), state
    a = _free_acceleration(v, vdes, a_max, a_n)
    if a > 0.0:
        a = min(a, (vdes - v) / dt)
    elif a < 0.0:
        a = max(a, (vdes - v) / dt)
    return a, state


@njit(cache=True)
def side_neighbors(ag, net, wk, i, u):
    """(has_lead, lead_gap, lead_v, has_lag, lag_gap, lag_v) of agent i on lane uid u."""
    x = ag[i].x
    has_lead, lead_gap, lead_v = False, 0.0, 0.0
    has_lag, lag_gap, lag_v = False, 0.0, 0.0
    for k in range(wk.lane_start[u], wk.lane_start[u] + wk.lane_cnt[u]):
        j = wk.order[k]
        if ag[j].x > x:
            has_lead = True
            lead_gap = ag[j].x - ag[j].length - x
            lead_v = ag[j].v
            break
        has_lag = True
        lag_gap = x - ag[i].length - ag[j].x
        lag_v = ag[j].v
    return has_lead, lead_gap, lead_v, has_lag, lag_gap, lag_v


@njit(cache=True)
def lane_change_choice(i, ag, net, prm, wk, state):
    link = ag[i].link
    n = net.link_nlanes[link]
    if n < 2 or net.link_kind[link] == ARC:
        return 0
    lane = ag[i].lane
    r = ag[i].route
    rp = ag[i].rpos
    route_dir = 0
    if rp + 1 < net.route_nlinks[r]:
        nxt = net.route_links[r, rp + 1]
        if not net.conn[link, lane, nxt]:
            best = -1
            for ln in range(n):
                if net.conn[link, ln, nxt] and (best < 0 or abs(ln - lane) < abs(best - lane)):
                    best = ln
            if best > lane:
                route_dir = 1
            elif best >= 0:
                route_dir = -1
    allow_disc = ag[i].lc_timer >= prm[P_LC_COOL]
    has_cur = wk.ld_has[i] == 1 and state != FREE
    if route_dir == 0 and (not allow_disc or not has_cur):
        return 0
    u = net.lane_base[link] + lane
    left = lane + 1 < n
    right = lane - 1 >= 0
    if left:
        lhl, llg, llv, lhg, lgg, lgv = side_neighbors(ag, net, wk, i, u + 1)
    else:
        lhl, llg, llv, lhg, lgg, lgv = False, 0.0, 0.0, False, 0.0, 0.0
    if right:
        rhl, rlg, rlv, rhg, rgg, rgv = side_neighbors(ag, net, wk, i, u - 1)
    else:
        rhl, rlg, rlv, rhg, rgg, rgv = False, 0.0, 0.0, False, 0.0, 0.0
    action, _ = _decide(ag[i].v, route_dir, net.link_length[link] - ag[i].x, has_cur, wk.ld_v[i],
                        left, lhl, llg, llv, lhg, lgg, lgv,
                        right, rhl, rlg, rlv, rhg, rgg, rgv,
                        prm[P_LC_LEAD], prm[P_LC_LAG], prm[P_LC_BUF], prm[P_LC_GAIN],
                        prm[P_LC_WIN], allow_disc)
    if action == 1:
        return 1
    if action == 2:
        return -1
    return 0


@njit(cache=True)
def slot_free(ag, active, nact, i, link, lane, x, extra_buffer):
    """True when agent i fits at (link, lane, x) with every gap >= extra_buffer."""
    for k in range(nact):
        j = active[k]
        if j == i or ag[j].status != ACTIVE or ag[j].link != link or ag[j].lane != lane:
            continue
        if ag[j].x >= x:
            gap = ag[j].x - ag[j].length - x
        else:
            gap = x - ag[i].length - ag[j].x
        if gap < extra_buffer:
            return False
    return True


@njit(cache=True)
def lane_space(ag, active, nact, link, lane):
    """Free space at the start of a lane: rear bumper position of its last vehicle."""
    space = 1e300
    for k in range(nact):
        j = active[k]
        if ag[j].status == ACTIVE and ag[j].link == link and ag[j].lane == lane:
            s = ag[j].x - ag[j].length
            if s < space:
                space = s
    return space


@njit(cache=True)
def upstream_clear(ag, active, nact, net, i, arc, x_new):
    """Entering agent i at x_new on ``arc`` must not overlap vehicles about to cross into it."""
    node = net.link_from_node[arc]
    for q in range(net.arc_ids.shape[0]):
        pa = net.arc_ids[q]
        if net.link_to_node[pa] != node:
            continue
        for k in range(nact):
            j = active[k]
            if ag[j].status == ACTIVE and ag[j].link == pa:
                if net.link_length[pa] - ag[j].x + x_new - ag[i].length < 0.0:
                    return False
    return True


@njit(cache=True)
def try_place(ag, active, nact, net, i, link, nxt, x_new):
    """Lane on ``nxt`` that can take agent i at x_new, trying lanes by free space; -1 if none."""
    n = net.link_nlanes[nxt]
    spaces = np.empty(n)
    for ln in range(n):
        spaces[ln] = lane_space(ag, active, nact, nxt, ln)
    entering_arc = net.link_kind[link] == APPROACH and net.link_kind[nxt] == ARC
    for _ in range(n):
        best = 0
        for ln in range(1, n):
            if spaces[ln] > spaces[best]:
                best = ln
        if spaces[best] < -1e299:
            break
        spaces[best] = -1e300
        if not slot_free(ag, active, nact, i, nxt, best, x_new, 0.0):
            continue
        if entering_arc and not upstream_clear(ag, active, nact, net, i, nxt, x_new):
            continue
        return best
    return -1


@njit(cache=True)
def step_once(t_old, ag, active, net, prm, wk, counters, q_link, q_items, q_len, q_ptr, check):
    dt = prm[P_DT]
    t_new = t_old + dt
    nact = counters[C_NACT]

    # phase 1: decisions from the state at t
    build_lanes(ag, active, nact, net, wk)
    for k in range(nact):
        i = active[k]
        find_leader(i, ag, net, prm, wk, 0)
        if wk.ld_virt[i] == 2:
            counters[C_BLOCK] += 1
        a, st = acceleration(i, ag, prm, wk)
        wk.acc[i] = a
        ag[i].state = st
        wk.lc[i] = lane_change_choice(i, ag, net, prm, wk, st)

    # phase 2a: lane changes, validated one at a time
    changed = False
    for k in range(nact):
        i = active[k]
        if wk.lc[i] != 0:
            target = ag[i].lane + wk.lc[i]
            if slot_free(ag, active, nact, i, ag[i].link, target, ag[i].x, ag[i].buffer):
                ag[i].lane = target
                ag[i].lc_timer = 0.0
                counters[C_LC] += 1
                changed = True
    if changed:
        build_lanes(ag, active, nact, net, wk)
        for k in range(nact):
            find_leader(active[k], ag, net, prm, wk, 1)

    # phase 2b: integrate
    for k in range(nact):
        i = active[k]
        v0 = ag[i].v
        vn = v0 + wk.acc[i] * dt
        if vn < 0.0:
            vn = 0.0
        if wk.ld_has[i] == 1:
            allowed = wk.ld_dx[i]
            if wk.ld_virt[i] == 0:
                allowed -= ag[i].buffer
            if allowed < 0.0:
                allowed = 0.0
            if vn * dt > allowed:
                vn = allowed / dt
        ag[i].x += vn * dt
        ag[i].a = (vn - v0) / dt
        ag[i].v = vn

    # phase 2c: link transfers, circulating traffic first
    nc = 0
    for k in range(nact):
        i = active[k]
        over = ag[i].x - net.link_length[ag[i].link]
        if over > 0.0:
            kind = net.link_kind[ag[i].link]
            prio = 0.0 if kind == ARC else (1.0 if kind == APPROACH else 2.0)
            wk.cand[nc] = i
            wk.candkey[nc] = prio * 1.0e4 - over
            nc += 1
    if nc > 0:
        corder = np.argsort(wk.candkey[:nc], kind="mergesort")
        for c in range(nc):
            i = wk.cand[corder[c]]
            link = ag[i].link
            r = ag[i].route
            if ag[i].rpos + 1 >= net.route_nlinks[r]:
                ag[i].status = DONE
                ag[i].exit_t = t_new
                counters[C_EXIT] += 1
                continue
            nxt = net.route_links[r, ag[i].rpos + 1]
            x_new = ag[i].x - net.link_length[link]
            placed = try_place(ag, active, nact, net, i, link, nxt, x_new)
            if placed >= 0:
                ag[i].link = nxt
                ag[i].lane = placed
                ag[i].rpos += 1
                ag[i].x = x_new
            else:
                ag[i].x = net.link_length[link]
                ag[i].a -= ag[i].v / dt
                ag[i].v = 0.0
                counters[C_HOLD] += 1

    # phase 2d: measurement zone accumulators
    vstop = prm[P_VSTOP]
    for k in range(nact):
        i = active[k]
        inz = ag[i].status == ACTIVE and ag[i].x >= net.zone_start[ag[i].link]
        if inz:
            if ag[i].zone_in == 0:
                ag[i].zone_in = 1
                ag[i].zone_entry_t = t_old
            if ag[i].zone_in == 1:
                ag[i].zone_time += dt
                ag[i].zone_dist += ag[i].v * dt
                if ag[i].v < vstop:
                    ag[i].zone_stop += dt
        elif ag[i].zone_in == 1:
            ag[i].zone_in = 2
            ag[i].zone_exit_t = t_old

    # retire finished agents
    m = 0
    for k in range(nact):
        i = active[k]
        if ag[i].status == ACTIVE:
            active[m] = i
            m += 1
    nact = m

    # phase 2e: inject due arrivals (FIFO per entry link)
    for e in range(q_link.shape[0]):
        link = q_link[e]
        while q_ptr[e] < q_len[e]:
            i = q_items[e, q_ptr[e]]
            if ag[i].t_arrival > t_new + 1e-9:
                break
            best, best_space = -1, -1e300
            for ln in range(net.link_nlanes[link]):
                s = lane_space(ag, active, nact, link, ln)
                if s > best_space:
                    best, best_space = ln, s
            if best_space < ag[i].buffer:
                break
            ag[i].status = ACTIVE
            ag[i].link = link
            ag[i].lane = best
            ag[i].rpos = 0
            ag[i].x = 0.0
            v0 = ag[i].v_init
            if best_space < 1e299:
                v0 = min(v0, (best_space - ag[i].buffer) / ag[i].T)
            ag[i].v = v0
            ag[i].a = 0.0
            ag[i].entry_t = t_new
            ag[i].lc_timer = prm[P_LC_COOL]
            active[nact] = i
            nact += 1
            counters[C_INJ] += 1
            q_ptr[e] += 1

    for k in range(nact):
        ag[active[k]].lc_timer += dt
    counters[C_NACT] = nact

    if check:
        return check_overlap(ag, active, nact, net, wk, counters)
    return 0


@njit(cache=True)
def check_overlap(ag, active, nact, net, wk, counters):
    build_lanes(ag, active, nact, net, wk)
    for u in range(wk.lane_cnt.shape[0]):
        s = wk.lane_start[u]
        for k in range(s, s + wk.lane_cnt[u] - 1):
            f = wk.order[k]
            ld = wk.order[k + 1]
            if ag[ld].x - ag[ld].length - ag[f].x < -CONTACT_EPS:
                counters[C_F1] = f
                counters[C_F2] = ld
                return 1
    for k in range(nact):
        if ag[active[k]].v < 0.0:
            counters[C_F1] = active[k]
            counters[C_F2] = -1
            return 2
    return 0


@njit(cache=True)
def run_steps(n_steps, step0, ag, active, net, prm, wk, counters, q_link, q_items, q_len, q_ptr,
              check_every):
    dt = prm[P_DT]
    for s in range(n_steps):
        k = step0 + s
        check = check_every > 0 and (k + 1) % check_every == 0
        code = step_once(k * dt, ag, active, net, prm, wk, counters,
                         q_link, q_items, q_len, q_ptr, check)
        if code != 0:
            counters[C_STEP] = k
            return code
    return 0
