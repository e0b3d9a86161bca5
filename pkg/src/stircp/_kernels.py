"""Compiled event loops.

Everything here is numba ``njit`` code operating on flat arrays.  Replica
streams come from a hand-rolled xoshiro256++ seeded per (seed, tag, replica)
through splitmix64, so results do not depend on how replicas are split
across threads: every replica writes only its own output slot and the
python layer reduces in replica order.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

U64 = np.uint64

# stream tags keep independent kernels off each other's randomness
TAG_SURVIVAL = 0x5357
TAG_SIGMA = 0x5347
TAG_BRWPOP = 0x4257
TAG_COUPLE_AB = 0x4142
TAG_COUPLE_BW = 0x4343


@njit(cache=True, inline="always")
def _splitmix(state):
    state = state + U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    return state, z ^ (z >> U64(31))


@njit(cache=True)
def _init_state(seed, tag, replica):
    s = np.empty(4, dtype=np.uint64)
    st = (U64(seed) * U64(0x9E3779B97F4A7C15)) ^ (U64(tag) << U64(32)) ^ U64(replica)
    for i in range(4):
        st, z = _splitmix(st)
        s[i] = z
    if s[0] | s[1] | s[2] | s[3] == U64(0):
        s[0] = U64(1)
    return s


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << U64(k)) | (x >> U64(64 - k))


@njit(cache=True, inline="always")
def _next64(s):
    result = _rotl(s[0] + s[3], 23) + s[0]
    t = s[1] << U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, inline="always")
def _uniform(s):
    return (_next64(s) >> U64(11)) * 1.1102230246251565e-16  # 2^-53


@njit(cache=True, inline="always")
def _exponential(s):
    return -math.log(1.0 - _uniform(s))


@njit(cache=True)
def _poisson(s, mean):
    """Exact Poisson sampling: Knuth product below 10, PTRS above."""
    if mean <= 0.0:
        return 0
    if mean < 10.0:
        limit = math.exp(-mean)
        k = 0
        p = 1.0
        while True:
            p *= _uniform(s)
            if p <= limit:
                return k
            k += 1
    b = 0.931 + 2.53 * math.sqrt(mean)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = _uniform(s) - 0.5
        v = _uniform(s)
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + mean + 0.43))
        if us >= 0.07 and v <= vr:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b) <= (
            k * math.log(mean) - mean - math.lgamma(k + 1.0)
        ):
            return k


@njit(cache=True)
def apply_swaps(arr, ea, eb):
    """Apply a time-ordered swap sequence to a per-site array, in place."""
    for i in range(ea.shape[0]):
        a = ea[i]
        b = eb[i]
        tmp = arr[a]
        arr[a] = arr[b]
        arr[b] = tmp


@njit(cache=True)
def flow_point(x, ea, eb, forward):
    """Follow the stirring flow of one site through a swap sequence."""
    if forward:
        for i in range(ea.shape[0]):
            if ea[i] == x:
                x = eb[i]
            elif eb[i] == x:
                x = ea[i]
    else:
        for i in range(ea.shape[0] - 1, -1, -1):
            if ea[i] == x:
                x = eb[i]
            elif eb[i] == x:
                x = ea[i]
    return x


# ---------------------------------------------------------------------------
# infection process, dynamic engine (replica batches)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _icp_dynamic_one(
    seed,
    tag,
    replica,
    nt,
    edge_a,
    edge_b,
    band,
    origin,
    v,
    lam_max,
    lam,
    p,
    horizon,
    collect_sigma,
    out_scalar,
    out_sigma,
):
    """One replica, run as a uniformized graphical construction.

    The dominating event structure (swap marks per edge at rate v, recovery
    marks per site at rate 1, transmission marks per directed pair at rate
    ``lam_max``) has a constant total rate, so the state after the horizon
    is the state after a Poisson number of i.i.d. categorical marks; mark
    times never need to be drawn and marks at unoccupied or healthy sites
    are the no-ops of the graphical representation.  A transmission mark
    acts at level ``lam`` iff an acceptance draw falls below lam/lam_max,
    so runs sharing (seed, replica) consume identical randomness for every
    lam and their infected sets are pathwise nested in lam.

    out_scalar: [survived, wrapped, ninf_final, n_events].
    out_sigma:  [ndown, nup, nzero] when collect_sigma (epoch increments:
    recovery marks at infected sites and accepted transmission marks with
    infected source, split by target state).
    """
    rng = _init_state(seed, tag, replica)
    nsites = nt.shape[0]
    deg = nt.shape[1]
    nedges = edge_a.shape[0]

    occ = np.empty(nsites, dtype=np.uint8)
    for i in range(nsites):
        occ[i] = 1 if _uniform(rng) < p else 0
    occ[origin] = 2
    ninf = 1

    per_site = 1.0 + deg * lam_max
    r_swap = v * nedges
    r_tot = r_swap + nsites * per_site
    wrapped = band[origin]
    ndown = 0
    nup = 0
    nzero = 0

    n_events = _poisson(rng, r_tot * horizon)
    for ev in range(n_events):
        u = _uniform(rng) * r_tot
        if u < r_swap:
            e = int(u / v)
            if e >= nedges:
                e = nedges - 1
            a = edge_a[e]
            b = edge_b[e]
            oa = occ[a]
            ob = occ[b]
            if oa != ob:
                occ[a] = ob
                occ[b] = oa
                if oa == 2:
                    if band[b]:
                        wrapped = True
                elif ob == 2:
                    if band[a]:
                        wrapped = True
        else:
            rem = u - r_swap
            site = int(rem / per_site)
            if site >= nsites:
                site = nsites - 1
            sub = rem - site * per_site
            if sub < 1.0:
                # recovery mark
                if occ[site] == 2:
                    occ[site] = 1
                    ninf -= 1
                    ndown += 1
                    if ninf == 0:
                        break
            else:
                c = sub - 1.0
                direction = int(c / lam_max)
                if direction >= deg:
                    direction = deg - 1
                accepted = _uniform(rng) * lam_max < lam
                if accepted and occ[site] == 2:
                    tgt = nt[site, direction]
                    if tgt >= 0:
                        if occ[tgt] == 1:
                            occ[tgt] = 2
                            ninf += 1
                            nup += 1
                            if band[tgt]:
                                wrapped = True
                        else:
                            nzero += 1

    out_scalar[0] = 1 if ninf > 0 else 0
    out_scalar[1] = 1 if wrapped else 0
    out_scalar[2] = ninf
    out_scalar[3] = n_events
    if collect_sigma:
        out_sigma[0] = ndown
        out_sigma[1] = nup
        out_sigma[2] = nzero


@njit(cache=True, parallel=True)
def icp_dynamic_batch(
    seed,
    tag,
    replicas,
    nt,
    edge_a,
    edge_b,
    band,
    origin,
    v,
    lam_max,
    lam,
    p,
    horizon,
    collect_sigma,
):
    out_scalar = np.zeros((replicas, 4), dtype=np.int64)
    out_sigma = np.zeros((replicas, 3), dtype=np.int64)
    for r in prange(replicas):
        _icp_dynamic_one(
            seed,
            tag,
            r,
            nt,
            edge_a,
            edge_b,
            band,
            origin,
            v,
            lam_max,
            lam,
            p,
            horizon,
            collect_sigma,
            out_scalar[r],
            out_sigma[r],
        )
    return out_scalar, out_sigma


# ---------------------------------------------------------------------------
# branching random walk population chain
# ---------------------------------------------------------------------------


@njit(cache=True, parallel=True)
def brw_population_batch(seed, replicas, n0, beta, horizon, cap):
    """Birth-death population chain of the walker system.

    Individuals die at rate 1 and split at rate beta; the population count
    is a Markov chain on its own, so extinction-by-horizon statistics need
    no positions.  Per replica: [extinct_by_horizon, final_pop, capped].
    """
    out = np.zeros((replicas, 3), dtype=np.int64)
    for r in prange(replicas):
        rng = _init_state(seed, TAG_BRWPOP, r)
        pop = n0
        t = 0.0
        capped = 0
        while pop > 0:
            rate = pop * (1.0 + beta)
            t += _exponential(rng) / rate
            if t >= horizon:
                break
            if _uniform(rng) * (1.0 + beta) < 1.0:
                pop -= 1
            else:
                pop += 1
                if pop >= cap:
                    capped = 1
                    break
        out[r, 0] = 1 if pop == 0 else 0
        out[r, 1] = pop
        out[r, 2] = capped
    return out


# ---------------------------------------------------------------------------
# infection <-> walker pairing run (shared-randomness construction)
# ---------------------------------------------------------------------------

N_PAIR_SCALARS = 12
N_PAIR_FLOATS = 4


@njit(cache=True)
def _adj_update(j, site, occ, nt, adj_flag, adj_list, adj_idx, nadj, now, since, leb):
    """Refresh the has-infected-neighbor flag of live infection record j."""
    deg = nt.shape[1]
    flag = False
    for dd in range(deg):
        nb = nt[site, dd]
        if nb >= 0 and occ[nb] == 2:
            flag = True
            break
    if flag and not adj_flag[j]:
        adj_flag[j] = True
        since[j] = now
        adj_idx[j] = nadj
        adj_list[nadj] = j
        nadj += 1
    elif (not flag) and adj_flag[j]:
        adj_flag[j] = False
        leb[j] += now - since[j]
        pos = adj_idx[j]
        last = nadj - 1
        if pos != last:
            adj_list[pos] = adj_list[last]
            adj_idx[adj_list[pos]] = pos
        nadj = last
    return nadj


@njit(cache=True)
def _adj_drop(j, adj_flag, adj_list, adj_idx, nadj, now, since, leb):
    """Force-drop record j from the adjacency list (death), flushing time."""
    if adj_flag[j]:
        adj_flag[j] = False
        leb[j] += now - since[j]
        pos = adj_idx[j]
        last = nadj - 1
        if pos != last:
            adj_list[pos] = adj_list[last]
            adj_idx[adj_list[pos]] = pos
        nadj = last
    return nadj


@njit(cache=True)
def _pairing_one(
    seed,
    replica,
    nt,
    edge_a,
    edge_b,
    edge_axis,
    d,
    initial,
    v,
    lam,
    p,
    h0,
    rec_cap,
    thr54,
    out_scalar,
    out_float,
    per_tj,
    per_tjp,
    per_leb,
    per_maxd,
    per_maxe,
    per_maxxw,
    per_parent,
    per_X,
    per_W,
):
    """Shared-randomness run of the infection process, its containment set,
    and the paired walkers, up to min(h0, first transmission mark landing
    inside the containment set).

    Walkers live on the unwrapped lattice: per infection record we keep the
    unwrapped particle displacement X, walker displacement W, and the
    selective-jump sums D (particle jumps while the particle has an infected
    neighbor) and E (independent-walk jumps at such times), so
    (X - W) - (D - E) stays equal to its value at birth; this is verified.

    out_scalar: [0] collision fired, [1] bijection ok, [2] infected-source
    attempts before the collision, [3] attempts landing on occupied sites,
    [4] total infection records, [5] capacity flag, [6] identity ok,
    [7] containment size at end, [8] collision source infected,
    [9] premise54 (all records maxD+maxE <= thr54), [10] viol54 (some record
    max||X-W|| > rank*(thr54+1)), [11] live infections at end.
    out_float: [0] collision time (-1 if none), [1] total adjacency time,
    [2] max_j adjacency time, [3] max_j (maxD+maxE).
    """
    rng = _init_state(seed, TAG_COUPLE_BW, replica)
    nsites = nt.shape[0]
    deg = nt.shape[1]
    nedges = edge_a.shape[0]

    occ = np.empty(nsites, dtype=np.uint8)
    for i in range(nsites):
        occ[i] = 1 if _uniform(rng) < p else 0
    n0 = initial.shape[0]
    for j in range(n0):
        occ[initial[j]] = 2

    site2rec = np.full(nsites, -1, dtype=np.int64)
    rec_site = np.empty(rec_cap, dtype=np.int64)
    live_list = np.empty(rec_cap, dtype=np.int64)
    live_idx = np.full(rec_cap, -1, dtype=np.int64)

    cont = np.zeros(nsites, dtype=np.uint8)
    cont_pos = np.empty(nsites, dtype=np.int64)
    site2cont = np.full(nsites, -1, dtype=np.int64)
    ncont = 0

    X = np.zeros((rec_cap, 4), dtype=np.int64)
    W = np.zeros((rec_cap, 4), dtype=np.int64)
    D = np.zeros((rec_cap, 4), dtype=np.int64)
    E = np.zeros((rec_cap, 4), dtype=np.int64)
    G = np.zeros((rec_cap, 4), dtype=np.int64)  # X - W at birth
    adj_flag = np.zeros(rec_cap, dtype=np.bool_)
    since = np.zeros(rec_cap, dtype=np.float64)
    adj_list = np.empty(rec_cap, dtype=np.int64)
    adj_idx = np.full(rec_cap, -1, dtype=np.int64)
    nadj = 0

    ninf = 0
    ntot = 0
    for j in range(n0):
        s0 = initial[j]
        site2rec[s0] = j
        rec_site[j] = s0
        live_list[j] = j
        live_idx[j] = j
        per_tj[j] = 0.0
        per_tjp[j] = -1.0
        per_parent[j] = -1
        ninf += 1
        ntot += 1
        cont[s0] = 1
        site2cont[s0] = ncont
        cont_pos[ncont] = s0
        ncont += 1
    for j in range(n0):
        nadj = _adj_update(
            j, initial[j], occ, nt, adj_flag, adj_list, adj_idx, nadj, 0.0, since, per_leb
        )

    t = 0.0
    col_fired = False
    col_time = -1.0
    col_src_infected = 0
    bij_ok = True
    capacity = False
    n_att = 0
    n_att_occ = 0
    nwalkers = ninf

    while ninf > 0:
        r_swap = v * nedges
        r_rec = float(ninf)
        r_trans = deg * lam * ncont
        r_y = deg * v * nadj
        r_tot = r_swap + r_rec + r_trans + r_y
        dt = _exponential(rng) / r_tot
        if t + dt >= h0:
            t = h0
            break
        t += dt
        u = _uniform(rng) * r_tot

        if u < r_swap:
            e = int(_uniform(rng) * nedges)
            if e >= nedges:
                e = nedges - 1
            a = edge_a[e]
            b = edge_b[e]
            oa = occ[a]
            ob = occ[b]
            if oa == ob and cont[a] == cont[b] and oa != 2:
                continue  # indistinguishable content on both endpoints
            ja = site2rec[a]
            jb = site2rec[b]
            ax = edge_axis[e]
            # particle jumps use the adjacency flags at t-
            if ja >= 0:
                if adj_flag[ja]:
                    D[ja, ax] += 1
                    if D[ja, ax] > per_maxd[ja]:
                        per_maxd[ja] = D[ja, ax]
                    elif -D[ja, ax] > per_maxd[ja]:
                        per_maxd[ja] = -D[ja, ax]
                else:
                    W[ja, ax] += 1
                X[ja, ax] += 1
                dxw = abs(X[ja, ax] - W[ja, ax])
                if dxw > per_maxxw[ja]:
                    per_maxxw[ja] = dxw
                rec_site[ja] = b
            if jb >= 0:
                if adj_flag[jb]:
                    D[jb, ax] -= 1
                    if D[jb, ax] > per_maxd[jb]:
                        per_maxd[jb] = D[jb, ax]
                    elif -D[jb, ax] > per_maxd[jb]:
                        per_maxd[jb] = -D[jb, ax]
                else:
                    W[jb, ax] -= 1
                X[jb, ax] -= 1
                dxw = abs(X[jb, ax] - W[jb, ax])
                if dxw > per_maxxw[jb]:
                    per_maxxw[jb] = dxw
                rec_site[jb] = a
            occ[a] = ob
            occ[b] = oa
            site2rec[a] = jb
            site2rec[b] = ja
            ca = site2cont[a]
            cb = site2cont[b]
            site2cont[a] = cb
            site2cont[b] = ca
            ctmp = cont[a]
            cont[a] = cont[b]
            cont[b] = ctmp
            if ca >= 0:
                cont_pos[ca] = b
            if cb >= 0:
                cont_pos[cb] = a
            if ja >= 0 or jb >= 0 or oa == 2 or ob == 2:
                for site in (a, b):
                    jj = site2rec[site]
                    if jj >= 0:
                        nadj = _adj_update(
                            jj, site, occ, nt, adj_flag, adj_list, adj_idx, nadj, t, since, per_leb
                        )
                    for dd in range(deg):
                        nb = nt[site, dd]
                        if nb >= 0:
                            jn = site2rec[nb]
                            if jn >= 0:
                                nadj = _adj_update(
                                    jn, nb, occ, nt, adj_flag, adj_list, adj_idx, nadj, t, since, per_leb
                                )
        elif u < r_swap + r_rec:
            k = int(_uniform(rng) * ninf)
            if k >= ninf:
                k = ninf - 1
            j = live_list[k]
            site = rec_site[j]
            per_tjp[j] = t
            nadj = _adj_drop(j, adj_flag, adj_list, adj_idx, nadj, t, since, per_leb)
            occ[site] = 1
            site2rec[site] = -1
            last = ninf - 1
            if k != last:
                live_list[k] = live_list[last]
                live_idx[live_list[k]] = k
            ninf = last
            nwalkers -= 1
            if nwalkers != ninf:
                bij_ok = False
            for dd in range(deg):
                nb = nt[site, dd]
                if nb >= 0:
                    jn = site2rec[nb]
                    if jn >= 0:
                        nadj = _adj_update(
                            jn, nb, occ, nt, adj_flag, adj_list, adj_idx, nadj, t, since, per_leb
                        )
        elif u < r_swap + r_rec + r_trans:
            c = int(_uniform(rng) * ncont)
            if c >= ncont:
                c = ncont - 1
            src = cont_pos[c]
            direction = int(_uniform(rng) * deg)
            if direction >= deg:
                direction = deg - 1
            tgt = nt[src, direction]
            if tgt < 0:
                continue
            if cont[tgt] == 1:
                col_fired = True
                col_time = t
                col_src_infected = 1 if occ[src] == 2 else 0
                break
            cont[tgt] = 1
            site2cont[tgt] = ncont
            cont_pos[ncont] = tgt
            ncont += 1
            if occ[src] == 2:
                n_att += 1
                if occ[tgt] != 0:
                    n_att_occ += 1
                if occ[tgt] == 2:
                    bij_ok = False  # infected outside containment: impossible
                elif occ[tgt] == 1:
                    if ntot >= rec_cap:
                        capacity = True
                        break
                    jp = site2rec[src]
                    j = ntot
                    ntot += 1
                    occ[tgt] = 2
                    site2rec[tgt] = j
                    rec_site[j] = tgt
                    live_list[ninf] = j
                    live_idx[j] = ninf
                    ninf += 1
                    nwalkers += 1
                    per_tj[j] = t
                    per_tjp[j] = -1.0
                    per_parent[j] = jp
                    axis = direction // 2
                    sign = 1 if direction % 2 == 0 else -1
                    for dd2 in range(4):
                        X[j, dd2] = X[jp, dd2]
                        W[j, dd2] = W[jp, dd2]
                    X[j, axis] += sign
                    for dd2 in range(4):
                        G[j, dd2] = X[j, dd2] - W[j, dd2]
                    dxw = 0
                    for dd2 in range(d):
                        w_ = abs(X[j, dd2] - W[j, dd2])
                        if w_ > dxw:
                            dxw = w_
                    per_maxxw[j] = dxw
                    if nwalkers != ninf:
                        bij_ok = False
                    nadj = _adj_update(
                        j, tgt, occ, nt, adj_flag, adj_list, adj_idx, nadj, t, since, per_leb
                    )
                    for dd in range(deg):
                        nb = nt[tgt, dd]
                        if nb >= 0:
                            jn = site2rec[nb]
                            if jn >= 0:
                                nadj = _adj_update(
                                    jn, nb, occ, nt, adj_flag, adj_list, adj_idx, nadj, t, since, per_leb
                                )
        else:
            k = int(_uniform(rng) * nadj)
            if k >= nadj:
                k = nadj - 1
            j = adj_list[k]
            direction = int(_uniform(rng) * deg)
            if direction >= deg:
                direction = deg - 1
            axis = direction // 2
            sign = 1 if direction % 2 == 0 else -1
            E[j, axis] += sign
            W[j, axis] += sign
            if E[j, axis] > per_maxe[j]:
                per_maxe[j] = E[j, axis]
            elif -E[j, axis] > per_maxe[j]:
                per_maxe[j] = -E[j, axis]
            dxw = abs(X[j, axis] - W[j, axis])
            if dxw > per_maxxw[j]:
                per_maxxw[j] = dxw

    t_end = col_time if col_fired else min(t, h0)
    for k in range(nadj):
        j = adj_list[k]
        per_leb[j] += t_end - since[j]
        adj_flag[j] = False

    identity_ok = True
    leb_max = 0.0
    leb_tot = 0.0
    de_max = 0.0
    premise54 = 1
    viol54 = 0
    for j in range(ntot):
        leb_tot += per_leb[j]
        if per_leb[j] > leb_max:
            leb_max = per_leb[j]
        desum = float(per_maxd[j] + per_maxe[j])
        if desum > de_max:
            de_max = desum
        if desum > thr54:
            premise54 = 0
        if per_maxxw[j] > (j + 1) * (thr54 + 1.0):
            viol54 = 1
        for dd in range(d):
            if X[j, dd] - W[j, dd] - D[j, dd] + E[j, dd] != G[j, dd]:
                identity_ok = False
        for dd in range(4):
            per_X[j, dd] = X[j, dd]
            per_W[j, dd] = W[j, dd]

    out_scalar[0] = 1 if col_fired else 0
    out_scalar[1] = 1 if bij_ok else 0
    out_scalar[2] = n_att
    out_scalar[3] = n_att_occ
    out_scalar[4] = ntot
    out_scalar[5] = 1 if capacity else 0
    out_scalar[6] = 1 if identity_ok else 0
    out_scalar[7] = ncont
    out_scalar[8] = col_src_infected
    out_scalar[9] = premise54
    out_scalar[10] = viol54
    out_scalar[11] = ninf
    out_float[0] = col_time
    out_float[1] = leb_tot
    out_float[2] = leb_max
    out_float[3] = de_max


@njit(cache=True, parallel=True)
def pairing_batch(
    seed,
    replicas,
    nt,
    edge_a,
    edge_b,
    edge_axis,
    d,
    initial,
    v,
    lam,
    p,
    h0,
    rec_cap,
    thr54,
):
    out_scalar = np.zeros((replicas, N_PAIR_SCALARS), dtype=np.int64)
    out_float = np.zeros((replicas, N_PAIR_FLOATS), dtype=np.float64)
    for r in prange(replicas):
        per_tj = np.zeros(rec_cap, dtype=np.float64)
        per_tjp = np.zeros(rec_cap, dtype=np.float64)
        per_leb = np.zeros(rec_cap, dtype=np.float64)
        per_maxd = np.zeros(rec_cap, dtype=np.int64)
        per_maxe = np.zeros(rec_cap, dtype=np.int64)
        per_maxxw = np.zeros(rec_cap, dtype=np.int64)
        per_parent = np.zeros(rec_cap, dtype=np.int64)
        per_X = np.zeros((rec_cap, 4), dtype=np.int64)
        per_W = np.zeros((rec_cap, 4), dtype=np.int64)
        _pairing_one(
            seed,
            r,
            nt,
            edge_a,
            edge_b,
            edge_axis,
            d,
            initial,
            v,
            lam,
            p,
            h0,
            rec_cap,
            thr54,
            out_scalar[r],
            out_float[r],
            per_tj,
            per_tjp,
            per_leb,
            per_maxd,
            per_maxe,
            per_maxxw,
            per_parent,
            per_X,
            per_W,
        )
    return out_scalar, out_float


def pairing_single(
    seed,
    replica,
    nt,
    edge_a,
    edge_b,
    edge_axis,
    d,
    initial,
    v,
    lam,
    p,
    h0,
    rec_cap,
    thr54,
):
    """Verbose one-replica wrapper returning the per-infection records."""
    out_scalar = np.zeros(N_PAIR_SCALARS, dtype=np.int64)
    out_float = np.zeros(N_PAIR_FLOATS, dtype=np.float64)
    per_tj = np.zeros(rec_cap, dtype=np.float64)
    per_tjp = np.zeros(rec_cap, dtype=np.float64)
    per_leb = np.zeros(rec_cap, dtype=np.float64)
    per_maxd = np.zeros(rec_cap, dtype=np.int64)
    per_maxe = np.zeros(rec_cap, dtype=np.int64)
    per_maxxw = np.zeros(rec_cap, dtype=np.int64)
    per_parent = np.zeros(rec_cap, dtype=np.int64)
    per_X = np.zeros((rec_cap, 4), dtype=np.int64)
    per_W = np.zeros((rec_cap, 4), dtype=np.int64)
    _pairing_one(
        seed,
        replica,
        nt,
        edge_a,
        edge_b,
        edge_axis,
        d,
        initial,
        v,
        lam,
        p,
        h0,
        rec_cap,
        thr54,
        out_scalar,
        out_float,
        per_tj,
        per_tjp,
        per_leb,
        per_maxd,
        per_maxe,
        per_maxxw,
        per_parent,
        per_X,
        per_W,
    )
    ntot = int(out_scalar[4])
    records = {
        "tj": per_tj[:ntot].copy(),
        "tjp": per_tjp[:ntot].copy(),
        "leb": per_leb[:ntot].copy(),
        "maxd": per_maxd[:ntot].copy(),
        "maxe": per_maxe[:ntot].copy(),
        "maxxw": per_maxxw[:ntot].copy(),
        "parent": per_parent[:ntot].copy(),
        "X": per_X[:ntot].copy(),
        "W": per_W[:ntot].copy(),
    }
    return out_scalar, out_float, records


# ---------------------------------------------------------------------------
# two-family domination coupling of stirring processes
# ---------------------------------------------------------------------------

N_AB_SCALARS = 8


@njit(cache=True)
def _fix_partner_move(site_from, site_to, pr_self, pr_other):
    """A paired, unmatched particle moved site_from -> site_to."""
    mate = pr_self[site_from]
    pr_self[site_from] = -1
    pr_self[site_to] = mate
    if mate >= 0:
        pr_other[mate] = site_to


@njit(cache=True)
def _try_match(site, xi, xi2, pr1, pr2):
    """Co-located particles of the two processes become matched (and move
    together from then on); any previous pairings are released.  Matching
    opportunistically, not only along the designated pairing, only speeds
    the coupling up and keeps both marginals intact."""
    if xi[site] == 1 and xi2[site] == 1:
        if pr1[site] >= 0:
            pr2[pr1[site]] = -1
        if pr2[site] >= 0:
            pr1[pr2[site]] = -1
        xi[site] = 2
        xi2[site] = 2
        pr1[site] = -1
        pr2[site] = -1


@njit(cache=True)
def _swap_side(a, b, xi, pr_self, pr_other):
    """Swap one process's content across an edge, with pointer upkeep."""
    pa = xi[a] == 1 and pr_self[a] >= 0
    pb = xi[b] == 1 and pr_self[b] >= 0
    if pa and pb:
        ma = pr_self[a]
        mb = pr_self[b]
        pr_self[a] = mb
        pr_self[b] = ma
        pr_other[ma] = b
        pr_other[mb] = a
    elif pa:
        _fix_partner_move(a, b, pr_self, pr_other)
    elif pb:
        _fix_partner_move(b, a, pr_self, pr_other)
    tmp = xi[a]
    xi[a] = xi[b]
    xi[b] = tmp


@njit(cache=True)
def _box_counts_good(xi, xi2, box_id, nboxes):
    """True when every cover box holds at least as many xi2 as xi particles."""
    n = xi.shape[0]
    for bx in range(nboxes):
        c1 = 0
        c2 = 0
        for i in range(n):
            if box_id[i] == bx:
                if xi[i] != 0:
                    c1 += 1
                if xi2[i] != 0:
                    c2 += 1
        if c1 > c2:
            return False
    return True


@njit(cache=True)
def _refresh_pairing(xi, xi2, pr1, pr2, box_id, nboxes, scratch1, scratch2):
    """Rebuild the pairing of unmatched particles, one cover box at a time.

    Co-located particles match immediately (anywhere); within each box the
    remaining unmatched xi particles are paired to unmatched xi2 particles
    in site order.  Returns False when some box has more xi than xi2
    particles (not a good pair of configurations).
    """
    n = xi.shape[0]
    for i in range(n):
        if xi[i] == 1:
            pr1[i] = -1
        if xi2[i] == 1:
            pr2[i] = -1
    for i in range(n):
        _try_match(i, xi, xi2, pr1, pr2)
    for bx in range(nboxes):
        c1 = 0
        c2 = 0
        for i in range(n):
            if box_id[i] == bx:
                if xi[i] == 1:
                    scratch1[c1] = i
                    c1 += 1
                if xi2[i] == 1:
                    scratch2[c2] = i
                    c2 += 1
        if c1 > c2:
            return False
        for k in range(c1):
            z = scratch1[k]
            m = scratch2[k]
            pr1[z] = m
            pr2[m] = z
    return True


@njit(cache=True)
def _couple_ab_one(
    seed,
    replica,
    edge_a,
    edge_b,
    xi_init,
    xi2_init,
    box_id,
    nboxes,
    src_sites,
    probe_sites,
    b14_mask,
    ell2,
    t_match,
    T,
    stop_on_failure,
    out_scalar,
    xi_final,
):
    """One run of the two-family coupled stirring evolution (rate one).

    Family-2 marks always drive xi2 and drive xi on edges touching a matched
    particle; family-1 marks drive xi elsewhere.  Pairings refresh on epochs
    of length ell2 within [0, t_match]; on [t_match, T] the run monitors the
    claimed domination on the b14 region.

    Success requires good pairing checkpoints and no unmatched lower-process
    particle inside the monitored region: exactly the conditions that force
    the domination conclusion.  The boundary-flow escape event is tracked
    chronologically and reported as the cause when it precedes a fatal
    event (it is the bounding device for the unmatched probability), but by
    itself it cannot break domination and does not fail the run.

    out_scalar: [0] success, [1] first triggered event (0 none, 1 pairing
    epoch not good, 2 boundary flow reached the inner shell, 3 unmatched
    particle inside the monitored region), [2] domination violated,
    [3] epochs checked, [4] matched sites at end, [5] a3 flag, [6] a2 flag,
    [7] goodness of the final checkpoint.
    """
    rng = _init_state(seed, TAG_COUPLE_AB, replica)
    nedges = edge_a.shape[0]
    nsites = xi_init.shape[0]
    xi = xi_init.copy()
    xi2 = xi2_init.copy()
    pr1 = np.full(nsites, -1, dtype=np.int64)
    pr2 = np.full(nsites, -1, dtype=np.int64)
    scratch1 = np.empty(nsites, dtype=np.int64)
    scratch2 = np.empty(nsites, dtype=np.int64)

    w = np.zeros(nsites, dtype=np.bool_)
    for i in range(src_sites.shape[0]):
        w[src_sites[i]] = True

    cause = 0
    a2_hit = False
    a3_hit = False
    dom_viol = False
    nepochs = 1
    final_check = 1

    nflr = int(math.floor(t_match / ell2))
    if not _refresh_pairing(xi, xi2, pr1, pr2, box_id, nboxes, scratch1, scratch2):
        cause = 1
    next_epoch = ell2
    epoch_j = 1
    scanned = False

    a1_hit = cause == 1
    t = 0.0
    r_tot = 2.0 * nedges
    while True:
        if stop_on_failure and (a1_hit or a3_hit):
            break
        dt = _exponential(rng) / r_tot
        tn = t + dt
        while epoch_j <= nflr and next_epoch <= tn:
            if epoch_j < nflr:
                if not _refresh_pairing(
                    xi, xi2, pr1, pr2, box_id, nboxes, scratch1, scratch2
                ):
                    a1_hit = True
                    if cause == 0:
                        cause = 1
            else:
                ok = _box_counts_good(xi, xi2, box_id, nboxes)
                final_check = 1 if ok else 0
                if not ok:
                    a1_hit = True
                    if cause == 0:
                        cause = 1
            nepochs += 1
            next_epoch += ell2
            epoch_j += 1
        if not scanned and tn >= t_match:
            # full scan of the monitored region at the window start
            for i in range(nsites):
                if b14_mask[i]:
                    if xi[i] == 1:
                        a3_hit = True
                        if cause == 0:
                            cause = 3
                    if xi[i] != 0 and xi2[i] == 0:
                        dom_viol = True
            scanned = True
        if tn >= T:
            break
        t = tn
        e = int(_uniform(rng) * nedges)
        if e >= nedges:
            e = nedges - 1
        fam2 = _uniform(rng) < 0.5
        a = edge_a[e]
        b = edge_b[e]
        if fam2:
            xi_moves = xi[a] == 2 or xi[b] == 2
            _swap_side(a, b, xi2, pr2, pr1)
        else:
            xi_moves = not (xi[a] == 2 or xi[b] == 2)
        if xi_moves:
            _swap_side(a, b, xi, pr1, pr2)
            # flow-influence set of the outer shell
            tmpw = w[a]
            w[a] = w[b]
            w[b] = tmpw
            for i in range(src_sites.shape[0]):
                w[src_sites[i]] = True
            for i in range(probe_sites.shape[0]):
                if w[probe_sites[i]]:
                    a2_hit = True
                    if cause == 0:
                        cause = 2
        _try_match(a, xi, xi2, pr1, pr2)
        _try_match(b, xi, xi2, pr1, pr2)
        if scanned:
            if b14_mask[a]:
                if xi[a] == 1:
                    a3_hit = True
                    if cause == 0:
                        cause = 3
                if xi[a] != 0 and xi2[a] == 0:
                    dom_viol = True
            if b14_mask[b]:
                if xi[b] == 1:
                    a3_hit = True
                    if cause == 0:
                        cause = 3
                if xi[b] != 0 and xi2[b] == 0:
                    dom_viol = True

    matched = 0
    for i in range(nsites):
        if xi[i] == 2:
            matched += 1
        xi_final[i] = 0 if xi[i] == 0 else 1

    out_scalar[0] = 0 if (a1_hit or a3_hit) else 1
    out_scalar[1] = cause
    out_scalar[2] = 1 if dom_viol else 0
    out_scalar[3] = nepochs
    out_scalar[4] = matched
    out_scalar[5] = 1 if a3_hit else 0
    out_scalar[6] = 1 if a2_hit else 0
    out_scalar[7] = final_check


@njit(cache=True, parallel=True)
def couple_ab_batch(
    seed,
    replicas,
    edge_a,
    edge_b,
    p_lo,
    p_hi,
    box_id,
    nboxes,
    src_sites,
    probe_sites,
    b14_mask,
    ell2,
    t_match,
    T,
    collect_final,
    stop_on_failure,
):
    nsites = box_id.shape[0]
    out_scalar = np.zeros((replicas, N_AB_SCALARS), dtype=np.int64)
    finals = np.zeros((replicas, nsites if collect_final else 1), dtype=np.uint8)
    for r in prange(replicas):
        rng = _init_state(seed, TAG_COUPLE_AB + 1, r)
        xi0 = np.zeros(nsites, dtype=np.uint8)
        xi20 = np.zeros(nsites, dtype=np.uint8)
        for i in range(nsites):
            if _uniform(rng) < p_lo:
                xi0[i] = 1
        for i in range(nsites):
            if _uniform(rng) < p_hi:
                xi20[i] = 1
        xi_final = np.zeros(nsites, dtype=np.uint8)
        _couple_ab_one(
            seed,
            r,
            edge_a,
            edge_b,
            xi0,
            xi20,
            box_id,
            nboxes,
            src_sites,
            probe_sites,
            b14_mask,
            ell2,
            t_match,
            T,
            stop_on_failure,
            out_scalar[r],
            xi_final,
        )
        if collect_final:
            for i in range(nsites):
                finals[r, i] = xi_final[i]
    return out_scalar, finals


@njit(cache=True, parallel=True)
def plain_stirring_final(seed, replicas, edge_a, edge_b, p_init, T):
    """Reference single-family stirring runs; returns final 0/1 fields."""
    nsites = 0
    for i in range(edge_a.shape[0]):
        if edge_a[i] + 1 > nsites:
            nsites = edge_a[i] + 1
        if edge_b[i] + 1 > nsites:
            nsites = edge_b[i] + 1
    nedges = edge_a.shape[0]
    finals = np.zeros((replicas, nsites), dtype=np.uint8)
    for r in prange(replicas):
        rng = _init_state(seed, TAG_COUPLE_AB + 2, r)
        xi = np.zeros(nsites, dtype=np.uint8)
        for i in range(nsites):
            if _uniform(rng) < p_init:
                xi[i] = 1
        t = 0.0
        r_tot = 1.0 * nedges
        while True:
            t += _exponential(rng) / r_tot
            if t >= T:
                break
            e = int(_uniform(rng) * nedges)
            if e >= nedges:
                e = nedges - 1
            a = edge_a[e]
            b = edge_b[e]
            tmp = xi[a]
            xi[a] = xi[b]
            xi[b] = tmp
        for i in range(nsites):
            finals[r, i] = xi[i]
    return finals
