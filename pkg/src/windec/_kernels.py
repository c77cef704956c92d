"""Compiled per-shot kernels: sampling, exact matching, paths, seam audits.

Everything here is numba nopython code operating on plain arrays prepared by
the wrapper modules.  The disposal problem (match each event to another event
or to its cheapest absorbing boundary) is solved exactly: events cluster
under the provably optimum-preserving pruning rule D(i,j) >= bd(i) + bd(j),
small clusters go through a subset DP, larger ones through branch and bound
with the admissible per-event bound min(bd(i), min_j D(i,j)/2).  Weights are
pre-perturbed, so optima are unique and every solver path is deterministic.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
INF = np.inf
DP_MAX = 13          # clusters up to this size use the subset DP


# ---------------------------------------------------------------------------
# Counter-based RNG: one independent splitmix64 stream per (seed, shot).

@njit(cache=True, inline='always')
def _mix64(z):
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return z ^ (z >> U64(31))


@njit(cache=True, inline='always')
def _stream_init(seed, shot):
    z = (U64(seed) * U64(0xD1342543DE82EF95)) ^ (U64(shot) * U64(0xAF251AF3B0F025B5))
    return _mix64(z ^ U64(0x9E3779B97F4A7C15))


@njit(cache=True, inline='always')
def _stream_next(state):
    state = state + U64(0x9E3779B97F4A7C15)
    return state, _mix64(state)


@njit(cache=True, inline='always')
def _stream_unit(state):
    state, z = _stream_next(state)
    return state, (np.float64(z >> U64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def sample_block(seed, shot0, nshots, grp_ptr, grp_log1m,
                 det_ptr, det_ids, logflag, lab_ptr, lab_layers,
                 core, m, events, yglob, ywin):
    """Sample mechanism firings for a block of shots.

    Mechanisms are grouped by exact probability; within a group the stream
    jumps between firings geometrically, so cost scales with groups + hits,
    not mechanisms.  Draw order is fixed by (seed, shot), independent of the
    block partition.
    """
    ngroups = grp_ptr.shape[0] - 1
    for si in range(nshots):
        st = _stream_init(seed, shot0 + si)
        for g in range(ngroups):
            pos = grp_ptr[g]
            hi = grp_ptr[g + 1]
            llp = grp_log1m[g]
            while True:
                st, u = _stream_unit(st)
                pos += np.int64(np.floor(np.log(u) / llp))
                if pos >= hi:
                    break
                for k in range(det_ptr[pos], det_ptr[pos + 1]):
                    events[si, det_ids[k]] ^= 1
                yglob[si] ^= logflag[pos]
                for k in range(lab_ptr[pos], lab_ptr[pos + 1]):
                    w = (lab_layers[k] - 1) // core
                    if w >= m:
                        w = m - 1
                    ywin[si, w] ^= 1
                pos += 1


@njit(cache=True)
def sample_block_trunc(seed, shot0, nshots, grp_ptr, grp_log1m,
                       lab_ptr, lab_layers, core, m, ytrunc):
    """Replay the sample stream, collecting truncated-core truth bits.

    The draw sequence depends only on (seed, shot), never on the outputs,
    so this visits exactly the firings :func:`sample_block` visits while
    writing only ``ytrunc``: column ``i*core + (tau-1)`` holds the label a
    window would carry if its core were cut down to its first ``tau``
    layers; the ``tau == core`` column is the window's full label.
    """
    ngroups = grp_ptr.shape[0] - 1
    for si in range(nshots):
        st = _stream_init(seed, shot0 + si)
        for g in range(ngroups):
            pos = grp_ptr[g]
            hi = grp_ptr[g + 1]
            llp = grp_log1m[g]
            while True:
                st, u = _stream_unit(st)
                pos += np.int64(np.floor(np.log(u) / llp))
                if pos >= hi:
                    break
                for k in range(lab_ptr[pos], lab_ptr[pos + 1]):
                    w = (lab_layers[k] - 1) // core
                    if w >= m:
                        w = m - 1
                    t = lab_layers[k] - w * core
                    if t > core:
                        t = core
                    for tau in range(t, core + 1):
                        ytrunc[si, w * core + tau - 1] ^= 1
                pos += 1


# ---------------------------------------------------------------------------
# Exact disposal solvers.

@njit(cache=True)
def _solve_dp(members, ev, D, bd, partner):
    """Subset DP over one cluster; writes event-local partner indices."""
    kc = members.shape[0]
    full = 1 << kc
    f = np.full(full, INF)
    choice = np.full(full, -2, np.int32)
    f[0] = 0.0
    for S in range(1, full):
        i = 0
        while not (S >> i) & 1:
            i += 1
        base = S & (S - 1)
        vi = ev[members[i]]
        best = f[base] + bd[vi]
        ch = -1
        rest = base
        while rest:
            j = 0
            while not (rest >> j) & 1:
                j += 1
            rest &= rest - 1
            c = f[base & ~(1 << j)] + D[vi, ev[members[j]]]
            if c < best:
                best = c
                ch = j
        f[S] = best
        choice[S] = ch
    S = full - 1
    while S:
        i = 0
        while not (S >> i) & 1:
            i += 1
        ch = choice[S]
        if ch < 0:
            partner[members[i]] = -1
            S &= S - 1
        else:
            partner[members[i]] = members[ch]
            partner[members[ch]] = members[i]
            S &= ~((1 << i) | (1 << ch))
    return f[full - 1]


@njit(cache=True)
def _solve_bnb(members, ev, D, bd, partner):
    """Branch and bound over one cluster, depth-first with an explicit stack.

    Each frame owns the first still-unmatched event i and walks i's actions
    cheapest-first (pairings and the boundary share one sorted candidate
    list).  The incumbent starts from the all-boundary solution.  At every
    frame the admissible bound charges each unmatched event the cheaper of
    its boundary distance and half its cheapest pairing among the events
    still unmatched, so the bound tightens as the cluster thins out.
    """
    kc = members.shape[0]
    Dl = np.empty((kc, kc))
    bdl = np.empty(kc)
    for a in range(kc):
        bdl[a] = bd[ev[members[a]]]
        for b in range(kc):
            Dl[a, b] = D[ev[members[a]], ev[members[b]]]

    # Candidate order per event: columns 0..kc-1 are pairings, kc is the
    # boundary; self-pairing is pushed to the end with an infinite key.
    cand = np.empty((kc, kc + 1), np.int32)
    keys = np.empty(kc + 1)
    for a in range(kc):
        for b in range(kc):
            keys[b] = Dl[a, b] if b != a else INF
        keys[kc] = bdl[a]
        cand[a] = np.argsort(keys).astype(np.int32)

    taken = np.zeros(kc, np.uint8)
    assign = np.full(kc, -1, np.int32)
    bassign = np.full(kc, -1, np.int32)
    best = 0.0
    for a in range(kc):
        best += bdl[a]

    fi = np.empty(kc + 2, np.int32)     # frame's chosen event i (-2: unopened)
    fj = np.empty(kc + 2, np.int32)     # next rank in cand[i] to try
    fprev = np.empty(kc + 2, np.int32)  # last applied candidate (kc: boundary)
    fc = np.empty(kc + 2)               # cost on entering the frame
    depth = 0
    fi[0] = -2
    fc[0] = 0.0
    while depth >= 0:
        if fi[depth] == -2:
            cost = fc[depth]
            i = -1
            for t in range(kc):
                if taken[t] == 0:
                    i = t
                    break
            if i < 0:
                if cost < best:
                    best = cost
                    for t in range(kc):
                        bassign[t] = assign[t]
                depth -= 1
                continue
            bound = cost
            for t in range(kc):
                if taken[t]:
                    continue
                lo = bdl[t]
                for u in range(kc):
                    if u != t and taken[u] == 0 and 0.5 * Dl[t, u] < lo:
                        lo = 0.5 * Dl[t, u]
                bound += lo
            if bound >= best:
                depth -= 1
                continue
            fi[depth] = i
            taken[i] = 1
            fj[depth] = 0
            fprev[depth] = -1
        i = fi[depth]
        lp = fprev[depth]
        if 0 <= lp < kc:
            taken[lp] = 0
            assign[lp] = -1
        r = fj[depth]
        j = np.int32(-1)
        while r <= kc:
            c = cand[i, r]
            if c == kc:
                j = np.int32(kc)
                break
            # a pair at least as costly as both boundary matches is dominated
            if c != i and taken[c] == 0 and Dl[i, c] < bdl[i] + bdl[c]:
                j = c
                break
            r += 1
        if j < 0:
            taken[i] = 0
            fi[depth] = -2
            depth -= 1
            continue
        if j < kc:
            taken[j] = 1
            assign[i] = j
            assign[j] = i
            fprev[depth] = j
            fc[depth + 1] = fc[depth] + Dl[i, j]
        else:
            assign[i] = -1
            fprev[depth] = kc
            fc[depth + 1] = fc[depth] + bdl[i]
        fj[depth] = r + 1
        fi[depth + 1] = -2
        depth += 1

    for a in range(kc):
        p = bassign[a]
        partner[members[a]] = -1 if p < 0 else members[p]
    return best


@njit(cache=True)
def _match_events(ev, D, bd, partner):
    """Cluster the events and solve each cluster exactly.

    partner[i] = event-local index of i's pair, or -1 for a boundary match.
    Returns the optimum disposal cost.
    """
    k = ev.shape[0]
    root = np.arange(k, dtype=np.int32)
    for i in range(k):
        for j in range(i + 1, k):
            if D[ev[i], ev[j]] < bd[ev[i]] + bd[ev[j]]:
                ri = i
                while root[ri] != ri:
                    ri = root[ri]
                rj = j
                while root[rj] != rj:
                    rj = root[rj]
                if ri != rj:
                    root[rj] = ri
    for i in range(k):
        r = i
        while root[r] != r:
            r = root[r]
        root[i] = r
    total = 0.0
    done = np.zeros(k, np.uint8)
    for i in range(k):
        if done[i]:
            continue
        kc = 0
        for j in range(i, k):
            if root[j] == root[i]:
                kc += 1
        members = np.empty(kc, np.int32)
        t = 0
        for j in range(i, k):
            if root[j] == root[i]:
                members[t] = j
                done[j] = 1
                t += 1
        if kc == 1:
            partner[members[0]] = -1
            total += bd[ev[members[0]]]
        elif kc <= DP_MAX:
            total += _solve_dp(members, ev, D, bd, partner)
        else:
            total += _solve_bnb(members, ev, D, bd, partner)
    return total


@njit(cache=True)
def decode_parity_block(events, vid0, nloc, D, bd, par, bpar, out):
    """Decode a block of shots to per-shot committed logical parities."""
    nshots = events.shape[0]
    ev = np.empty(nloc, np.int32)
    partner = np.empty(nloc, np.int32)
    for si in range(nshots):
        k = 0
        for t in range(nloc):
            if events[si, vid0 + t]:
                ev[k] = t
                k += 1
        if k == 0:
            out[si] = 0
            continue
        _match_events(ev[:k], D, bd, partner[:k])
        p = 0
        for a in range(k):
            q = partner[a]
            if q < 0:
                p ^= bpar[ev[a]]
            elif q > a:
                p ^= par[ev[a], ev[q]]
        out[si] = p
    return 0


@njit(cache=True)
def build_parity_tables(n_real, super_id, dist, pred, adj_ptr, adj_nb, adj_sel,
                        btarget, bsel, par, bpar):
    """Parity of the selected-edge count along every canonical shortest path.

    Processes targets in increasing distance so each path extends an already
    computed one by its final hop.  Boundary parities walk the explicit path
    to the chosen absorber; bsel[u] holds the final hop's contribution when
    the absorber is the space boundary.
    """
    for u in range(n_real):
        order = np.argsort(dist[u, :n_real])
        for oi in range(n_real):
            v = order[oi]
            if v == u or not np.isfinite(dist[u, v]):
                continue
            pr = pred[u, v]
            if pr < 0:
                continue
            hop = np.uint8(0)
            for t in range(adj_ptr[pr], adj_ptr[pr + 1]):
                if adj_nb[t] == v:
                    hop = adj_sel[t]
                    break
            par[u, v] = par[u, pr] ^ hop
        # boundary path
        tgt = btarget[u]
        if tgt < 0:
            continue
        acc = np.uint8(0)
        cur = tgt
        while cur != u:
            pr = pred[u, cur]
            if cur == super_id:
                acc ^= bsel[pr]
            else:
                hop = np.uint8(0)
                for t in range(adj_ptr[pr], adj_ptr[pr + 1]):
                    if adj_nb[t] == cur:
                        hop = adj_sel[t]
                        break
                acc ^= hop
            cur = pr
        bpar[u] = acc


@njit(cache=True)
def decode_pairs_block(events, vid0, nloc, D, bd,
                       pairs_u, pairs_v, pairs_off):
    """Decode a block and emit matched pairs (event vertex, partner or -1)."""
    nshots = events.shape[0]
    cap = pairs_u.shape[0]
    ev = np.empty(nloc, np.int32)
    partner = np.empty(nloc, np.int32)
    w = 0
    for si in range(nshots):
        k = 0
        for t in range(nloc):
            if events[si, vid0 + t]:
                ev[k] = t
                k += 1
        if w + k > cap:
            return -1
        if k:
            _match_events(ev[:k], D, bd, partner[:k])
            for a in range(k):
                q = partner[a]
                if q < 0:
                    pairs_u[w] = ev[a]
                    pairs_v[w] = -1
                    w += 1
                elif q > a:
                    pairs_u[w] = ev[a]
                    pairs_v[w] = ev[q]
                    w += 1
        pairs_off[si + 1] = w
    return w


@njit(cache=True)
def expand_paths_block(pairs_u, pairs_v, pairs_off,
                       pred, btarget, super_id,
                       adj_ptr, adj_nb, adj_eid, sb_eid,
                       out_ids, out_off):
    """Expand matched pairs to their canonical paths' edge ids per shot.

    Walks predecessor chains; parallel edges resolve to the lightest one,
    the same edge the distance computation used.  Returns the fill count,
    or -1 when out_ids runs out of room (caller grows it and retries).
    """
    nshots = pairs_off.shape[0] - 1
    cap = out_ids.shape[0]
    w = 0
    for si in range(nshots):
        for t in range(pairs_off[si], pairs_off[si + 1]):
            u = pairs_u[t]
            v = pairs_v[t]
            tgt = btarget[u] if v < 0 else v
            cur = tgt
            while cur != u:
                pr = pred[u, cur]
                if cur == super_id:
                    eid = sb_eid[pr]
                else:
                    eid = np.int64(-1)
                    for a in range(adj_ptr[pr], adj_ptr[pr + 1]):
                        if adj_nb[a] == cur:
                            eid = adj_eid[a]
                            break
                if w >= cap:
                    return -1
                out_ids[w] = eid
                w += 1
                cur = pr
        out_off[si + 1] = w
    return w


@njit(cache=True)
def commit_filter(ids, off, commit_mask, parent_edge, out_ids, out_off):
    """Keep the committed window edges, mapped to parent edge ids."""
    nshots = off.shape[0] - 1
    w = 0
    for si in range(nshots):
        for t in range(off[si], off[si + 1]):
            e = ids[t]
            if commit_mask[e]:
                out_ids[w] = parent_edge[e]
                w += 1
        out_off[si + 1] = w
    return w


@njit(cache=True)
def audit_block(a_ids, a_off, b_ids, b_off, parent_eu, parent_ev,
                events, seam_vid0, seam_len, out_counts):
    """Seam defects per shot from two windows' committed parent edges."""
    nshots = a_off.shape[0] - 1
    buf = np.empty(seam_len, np.uint8)
    for si in range(nshots):
        for t in range(seam_len):
            buf[t] = 0
        for t in range(a_off[si], a_off[si + 1]):
            pe = a_ids[t]
            for e in (parent_eu[pe], parent_ev[pe]):
                r = e - seam_vid0
                if 0 <= r < seam_len:
                    buf[r] ^= 1
        for t in range(b_off[si], b_off[si + 1]):
            pe = b_ids[t]
            for e in (parent_eu[pe], parent_ev[pe]):
                r = e - seam_vid0
                if 0 <= r < seam_len:
                    buf[r] ^= 1
        cnt = 0
        for t in range(seam_len):
            cnt += buf[t] ^ events[si, seam_vid0 + t]
        out_counts[si] = cnt
