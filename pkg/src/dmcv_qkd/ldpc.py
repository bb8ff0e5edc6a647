"""Low-rate LDPC codes for reverse reconciliation on the BSC.

Bob sends the syndrome of his key block; Alice decodes her own block toward
it with syndrome-domain belief propagation.  Three fixed code profiles cover
the operating range; parity-check matrices are rebuilt deterministically
from (profile, seed) by a greedy PEG-style generator that avoids 4-cycles,
so the codes themselves never travel over the wire.

Degree profiles were optimized by density evolution in
scripts/design_ldpc.py; each fixture records the code-rate/threshold pair
the code is operated at.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK_LEN = 102400

# operating contract: crossover probability up to which at least half the
# blocks decode. DE design values sit slightly above; see design script.
CODE_FIXTURES = {
    "ecc0": {
        "rate": 0.06125,
        "threshold": 0.3492,
        "seed": 60125,
        "lambda": {2: 0.52, 3: 0.25, 10: 0.15, 80: 0.08},  # placeholder
        "rho": {3: 1.0},
    },
    "ecc1": {
        "rate": 0.07,
        "threshold": 0.3382,
        "seed": 70000,
        "lambda": {2: 0.477579, 3: 0.166879, 5: 0.229088, 22: 0.093865,
                   30: 0.01245, 300: 0.02014},
        "rho": {3: 0.85, 4: 0.15},
    },
    "ecc2": {
        "rate": 0.08,
        "threshold": 0.3267,
        "seed": 80000,
        "lambda": {2: 0.52, 3: 0.25, 10: 0.15, 80: 0.08},  # placeholder
        "rho": {3: 1.0},
    },
}


def code_fixture(code_id: str) -> dict:
    if code_id not in CODE_FIXTURES:
        raise KeyError(f"unknown code id {code_id!r}")
    fx = dict(CODE_FIXTURES[code_id])
    fx["id"] = code_id
    return fx


@dataclass(frozen=True)
class LdpcCode:
    """Sparse parity-check matrix in edge-list form.

    Edges are sorted by variable index; `chk_order` re-sorts them by check
    index for the check-side half of each BP iteration.
    """

    code_id: str
    rate: float
    threshold: float
    block_len: int
    syndrome_len: int
    edge_var: np.ndarray   # edge -> variable, nondecreasing
    edge_chk: np.ndarray   # edge -> check, same edge order
    var_starts: np.ndarray
    chk_order: np.ndarray
    chk_starts: np.ndarray
    seed: int

    @property
    def n_edges(self) -> int:
        return self.edge_var.size

    def check_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_chk, minlength=self.syndrome_len)

    def variable_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.block_len)

    def count_4cycles(self) -> int:
        """Number of check pairs shared by more than one variable."""
        keys = _pair_keys(self.edge_var, self.edge_chk, self.syndrome_len)
        uniq, counts = np.unique(keys, return_counts=True)
        return int(np.sum(counts * (counts - 1) // 2))


def _pair_keys(edge_var, edge_chk, n_chk):
    """One integer key per (variable, check-pair) incidence."""
    keys = []
    starts = np.searchsorted(edge_var, np.arange(edge_var[-1] + 2))
    for v in range(edge_var[-1] + 1):
        cs = np.sort(edge_chk[starts[v]:starts[v + 1]])
        if cs.size < 2:
            continue
        i, j = np.triu_indices(cs.size, k=1)
        keys.append(cs[i].astype(np.int64) * n_chk + cs[j])
    return np.concatenate(keys) if keys else np.empty(0, np.int64)


def _node_degrees(edge_dist: dict, n_nodes: int, n_edges: int | None, rng):
    """Realize an integer node-degree sequence matching an edge-perspective
    degree distribution; returns (degrees array, total edges)."""
    degs = np.array(sorted(edge_dist), dtype=int)
    mass = np.array([edge_dist[d] for d in degs], float)
    node_frac = (mass / degs) / np.sum(mass / degs)
    ideal = node_frac * n_nodes
    counts = np.floor(ideal).astype(int)
    rem = ideal - counts
    short = n_nodes - counts.sum()
    counts[np.argsort(rem)[::-1][:short]] += 1
    seq = np.repeat(degs, counts)
    if n_edges is not None:
        delta = n_edges - int(seq.sum())
        if delta:
            # absorb realization mismatch as +-1 tweaks on distinct nodes
            step = 1 if delta > 0 else -1
            adjustable = np.flatnonzero(seq + step >= 2)
            if adjustable.size < abs(delta):
                adjustable = np.flatnonzero(seq + step >= 1)
            pick = rng.choice(adjustable, size=abs(delta), replace=False)
            seq[pick] += step
    rng.shuffle(seq)
    return seq, int(seq.sum())


class _Forest:
    """Union-find over check nodes for cycle-free degree-2 placement."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def build_code(fixture: dict, block_len: int = BLOCK_LEN) -> LdpcCode:
    """Deterministic PEG-style construction from a code fixture.

    Check sockets are consumed from a seeded shuffle.  Variables of degree
    three and up are placed first (big nodes while the graph is sparse),
    scanning ahead past sockets that would duplicate an edge or close a
    4-cycle.  Degree-2 variables are placed last under a union-find forest
    constraint, so the degree-2 subgraph is cycle free: the low-weight
    near-codewords that widen the waterfall at finite length all live in
    degree-2 cycles.  A swap pass afterwards removes residual 4-cycles
    among the high-degree placements only.
    """
    rate = fixture["rate"]
    rng = np.random.default_rng(fixture["seed"])
    n_chk = round(block_len * (1.0 - rate))
    chk_deg, n_edges = _node_degrees(fixture["rho"], n_chk, None, rng)
    var_deg, _ = _node_degrees(fixture["lambda"], block_len, n_edges, rng)

    sockets = np.repeat(np.arange(n_chk), chk_deg)
    rng.shuffle(sockets)
    order = np.argsort(var_deg)[::-1]  # big nodes first, while graph is sparse
    heavy = [int(v) for v in order if var_deg[v] != 2]
    light = [int(v) for v in order if var_deg[v] == 2]

    edge_var = np.empty(n_edges, dtype=np.int32)
    edge_chk = np.empty(n_edges, dtype=np.int32)
    chk_vars: list[list[int]] = [[] for _ in range(n_chk)]
    pos = 0
    scan = 64
    for v in heavy:
        d = int(var_deg[v])
        my_chks: set[int] = set()
        blocked: set[int] = {v}
        for _ in range(d):
            choice = -1
            limit = min(pos + scan, n_edges)
            for k in range(pos, limit):
                c = int(sockets[k])
                if c in my_chks:
                    continue
                if any(u in blocked for u in chk_vars[c]):
                    continue
                choice = k
                break
            if choice < 0:
                for k in range(pos, n_edges):
                    if int(sockets[k]) not in my_chks:
                        choice = k
                        break
                if choice < 0:
                    choice = pos
            c = int(sockets[choice])
            sockets[choice] = sockets[pos]
            sockets[pos] = c
            pos += 1
            my_chks.add(c)
            blocked.update(chk_vars[c])
            chk_vars[c].append(v)
            edge_var[pos - 1] = v
            edge_chk[pos - 1] = c

    n_heavy_edges = pos
    forest = _Forest(n_chk)
    for v in light:
        c1 = int(sockets[pos])
        pos += 1
        choice = -1
        for k in range(pos, n_edges):
            c2 = int(sockets[k])
            if c2 != c1 and forest.union(c1, c2):
                choice = k
                break
        if choice < 0:
            # remaining sockets all in c1's component; accept a cycle edge
            for k in range(pos, n_edges):
                if int(sockets[k]) != c1:
                    choice = k
                    break
            if choice < 0:
                choice = pos
        c2 = int(sockets[choice])
        sockets[choice] = sockets[pos]
        sockets[pos] = c2
        pos += 1
        edge_var[pos - 2] = v
        edge_chk[pos - 2] = c1
        edge_var[pos - 1] = v
        edge_chk[pos - 1] = c2

    edge_var, edge_chk = _swap_repair(edge_var, edge_chk, n_chk, rng,
                                      mutable=n_heavy_edges)

    vsort = np.argsort(edge_var, kind="stable")
    edge_var = edge_var[vsort]
    edge_chk = edge_chk[vsort]
    var_starts = np.searchsorted(edge_var, np.arange(block_len + 1)).astype(np.int64)
    chk_order = np.argsort(edge_chk, kind="stable").astype(np.int64)
    chk_starts = np.searchsorted(edge_chk[chk_order], np.arange(n_chk + 1)).astype(np.int64)
    return LdpcCode(
        code_id=fixture.get("id", "custom"),
        rate=rate,
        threshold=fixture["threshold"],
        block_len=block_len,
        syndrome_len=n_chk,
        edge_var=edge_var,
        edge_chk=edge_chk,
        var_starts=var_starts,
        chk_order=chk_order,
        chk_starts=chk_starts,
        seed=fixture["seed"],
    )


def _swap_repair(edge_var, edge_chk, n_chk, rng, passes: int = 6,
                 mutable: int | None = None):
    """Break duplicate edges and 4-cycles by swapping check endpoints.

    Only edges below `mutable` (the high-degree placement phase) may be
    swapped; degree-2 forest edges stay fixed.  Degree-2 variables carry
    low indices, so their check pairs are registered first in the conflict
    scan and any collision flags the high-degree edge.
    """
    n_edges = edge_var.size
    if mutable is None:
        mutable = n_edges
    scan_order = None
    if mutable < n_edges:
        # register degree-2 pairs first so mixed conflicts flag the heavy edge
        deg = np.bincount(edge_var)
        scan_order = np.concatenate(
            [np.flatnonzero(deg == 2), np.flatnonzero(deg != 2)])
    for _ in range(passes):
        vsort = np.argsort(edge_var, kind="stable")
        ev, ec = edge_var[vsort], edge_chk[vsort]
        bad_edges = _conflict_edges(ev, ec, n_chk, scan_order)
        if not bad_edges.size:
            break
        orig = vsort[bad_edges]
        orig = orig[orig < mutable]
        if not orig.size:
            break
        partners = rng.integers(0, mutable, size=orig.size)
        for e, f in zip(orig, partners):
            edge_chk[e], edge_chk[f] = edge_chk[f], edge_chk[e]
    return edge_var, edge_chk


def _conflict_edges(ev, ec, n_chk, order=None):
    """Edge positions (in variable-sorted order) involved in a duplicate
    edge or in a duplicated check pair; one edge flagged per conflict.
    `order` controls which variable of a colliding pair gets flagged: the
    one visited later."""
    starts = np.searchsorted(ev, np.arange(ev[-1] + 2)) if ev.size else [0]
    pair_seen: dict[int, int] = {}
    flag = []
    nv = int(ev[-1]) + 1 if ev.size else 0
    for v in (range(nv) if order is None else order):
        v = int(v)
        lo, hi = starts[v], starts[v + 1]
        cs = ec[lo:hi]
        seen: dict[int, int] = {}
        for k in range(lo, hi):
            c = int(ec[k])
            if c in seen:
                flag.append(k)  # duplicate edge
                continue
            seen[c] = k
        cs_u = sorted(seen)
        for i in range(len(cs_u)):
            for j in range(i + 1, len(cs_u)):
                key = cs_u[i] * n_chk + cs_u[j]
                if key in pair_seen:
                    flag.append(seen[cs_u[j]])
                else:
                    pair_seen[key] = 1
    return np.asarray(sorted(set(flag)), dtype=np.int64)


def ldpc_syndrome(bits: np.ndarray, code: LdpcCode) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.shape != (code.block_len,):
        raise ValueError(f"expected {code.block_len} bits, got {bits.shape}")
    acc = np.bincount(code.edge_chk, weights=bits[code.edge_var].astype(np.float64),
                      minlength=code.syndrome_len)
    return (acc.astype(np.int64) & 1).astype(np.uint8)


@dataclass
class DecodeResult:
    success: bool
    bits: np.ndarray
    iterations: int


_LLR_CLIP = 30.0
_TANH_FLOOR = 1e-300


def ldpc_decode(alice_bits: np.ndarray, syndrome: np.ndarray, code: LdpcCode,
                crossover_p: float, max_iter: int = 400,
                n_layers: int = 8) -> DecodeResult:
    """Syndrome-domain sum-product decoding on BSC(crossover_p).

    Decodes the error pattern e with H e = syndrome ^ H alice, then returns
    alice ^ e.  Checks are processed in layers within each iteration, each
    layer seeing the posteriors the previous layers just updated; the
    serial schedule roughly halves the sweeps needed near threshold
    compared to flooding.  Failure to satisfy the target syndrome within
    max_iter sweeps is reported, not raised; the caller discloses such
    blocks.
    """
    if not 0.0 < crossover_p < 0.5:
        raise ValueError("crossover probability must be in (0, 0.5)")
    if max_iter < 1:
        raise ValueError("max_iter must be positive")
    alice_bits = np.asarray(alice_bits, dtype=np.uint8)
    target = (np.asarray(syndrome, dtype=np.uint8) ^ ldpc_syndrome(alice_bits, code))
    if not target.any():
        return DecodeResult(True, alice_bits.copy(), 0)

    L0 = np.log((1.0 - crossover_p) / crossover_p)
    ev_c = code.edge_var[code.chk_order]
    sign_t = 1.0 - 2.0 * target[code.edge_chk[code.chk_order]].astype(np.float64)

    n_layers = max(1, min(n_layers, code.syndrome_len))
    bounds = np.linspace(0, code.syndrome_len, n_layers + 1).astype(np.int64)
    layers = []
    for g in range(n_layers):
        c0, c1 = int(bounds[g]), int(bounds[g + 1])
        if c0 == c1:
            continue
        e0, e1 = int(code.chk_starts[c0]), int(code.chk_starts[c1])
        starts = code.chk_starts[c0:c1] - e0
        counts = np.diff(code.chk_starts[c0:c1 + 1])
        layers.append((slice(e0, e1), ev_c[e0:e1], starts, counts))

    post = np.full(code.block_len, L0)
    U = np.zeros(code.n_edges)  # check-to-variable messages, check-sorted
    for it in range(1, max_iter + 1):
        for sl, vars_l, starts, counts in layers:
            V = np.clip(post[vars_l] - U[sl], -2 * _LLR_CLIP, 2 * _LLR_CLIP)
            t = np.tanh(np.clip(V, -_LLR_CLIP, _LLR_CLIP) * 0.5)
            logmag = np.log(np.clip(np.abs(t), _TANH_FLOOR, None))
            neg = (t < 0.0).astype(np.int64)
            excl_log = np.repeat(np.add.reduceat(logmag, starts), counts) - logmag
            excl_neg = np.repeat(np.add.reduceat(neg, starts), counts) - neg
            mag = np.exp(excl_log)
            sgn = np.where(excl_neg & 1, -1.0, 1.0) * sign_t[sl]
            u_new = 2.0 * np.arctanh(np.clip(mag, None, 1.0 - 1e-15)) * sgn
            post += np.bincount(vars_l, weights=u_new - U[sl],
                                minlength=code.block_len)
            U[sl] = u_new

        e_hat = (post < 0.0).astype(np.uint8)
        syn = np.bincount(code.edge_chk, weights=e_hat[code.edge_var].astype(np.float64),
                          minlength=code.syndrome_len).astype(np.int64) & 1
        if np.array_equal(syn.astype(np.uint8), target):
            return DecodeResult(True, alice_bits ^ e_hat, it)
    return DecodeResult(False, alice_bits ^ e_hat, max_iter)


def efficiency(rate: float, ber: float) -> float:
    """Reconciliation efficiency beta = r / (1 - h2(BER))."""
    from .accounting import binary_entropy

    return rate / (1.0 - binary_entropy(ber))
