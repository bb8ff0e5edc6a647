#!/usr/bin/env python3
"""Degree-profile design tool for the low-rate reconciliation codes.

Evaluates belief-propagation thresholds of irregular LDPC ensembles on the
binary symmetric channel by population-dynamics density evolution, and
searches edge-degree distributions maximizing the threshold at a fixed
code rate.  The shipped code fixtures were produced with this tool; rerun

    python scripts/design_ldpc.py search --rate 0.07 --minutes 30
    python scripts/design_ldpc.py threshold --rate 0.07 --profile out.json
    python scripts/design_ldpc.py waterfall --code ecc1 --points 0.32,0.33

to reproduce or extend them.

Edge-perspective notation: lam[d] is the fraction of edges attached to
variable nodes of degree d, rho[d] the same for check nodes.  The design
rate is 1 - (sum_d rho[d]/d) / (sum_d lam[d]/d).  Stability on BSC(p)
requires lam[2] * rho'(1) < 1 / (2 sqrt(p (1-p))).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np


def design_rate(lam: dict, rho: dict) -> float:
    return 1.0 - sum(m / d for d, m in rho.items()) / sum(m / d for d, m in lam.items())


def stability_cap(p: float, rho: dict) -> float:
    rp1 = sum(m * (d - 1) for d, m in rho.items())
    return 1.0 / (2.0 * np.sqrt(p * (1.0 - p)) * rp1)


def _groups(dist: dict, npop: int):
    degs = sorted(dist)
    mass = np.array([dist[d] for d in degs], float)
    mass /= mass.sum()
    counts = np.floor(mass * npop).astype(int)
    counts[np.argmax(counts)] += npop - counts.sum()
    return [(d, n) for d, n in zip(degs, counts) if n > 0]


def de_converges(lam: dict, rho: dict, p: float, npop: int = 1 << 15,
                 max_iter: int = 1200, seed: int = 1, floor: float | None = None):
    """One density-evolution run at crossover p.

    Returns (converged, iterations used).  Convergence means the message
    population reached all-correct (or dipped below `floor`); a stalled
    high error ratio exits early.
    """
    rng = np.random.default_rng(seed)
    if floor is None:
        floor = 2.0 / npop
    L0 = np.log((1.0 - p) / p)
    ch = np.where(rng.random(npop) < p, -L0, L0)
    V = ch.copy()
    vgroups = _groups(lam, npop)
    cgroups = _groups(rho, npop)
    err_prev = 1.0
    stall = 0
    for it in range(max_iter):
        U = np.empty(npop)
        pos = 0
        for d, n in cgroups:
            idx = rng.integers(0, npop, (n, d - 1))
            t = np.tanh(np.clip(V[idx], -38.0, 38.0) * 0.5)
            prod = np.clip(np.prod(t, axis=1), -1 + 1e-14, 1 - 1e-14)
            U[pos:pos + n] = 2.0 * np.arctanh(prod)
            pos += n
        Vn = np.empty(npop)
        ch_s = ch[rng.integers(0, npop, npop)]
        pos = 0
        for d, n in vgroups:
            idx = rng.integers(0, npop, (n, d - 1))
            Vn[pos:pos + n] = ch_s[pos:pos + n] + U[idx].sum(axis=1)
            pos += n
        V = np.clip(Vn, -700.0, 700.0)
        err = float(np.mean(V <= 0.0))
        if err <= floor:
            return True, it
        if err >= err_prev - 1e-4:
            stall += 1
            if stall > 80 and err > 0.05:
                return False, it
        else:
            stall = 0
        err_prev = err
    return False, max_iter


def de_trajectory(lam: dict, rho: dict, p: float, npop: int = 1 << 15,
                  max_iter: int = 500, seed: int = 1, store_every: int = 4):
    """Density evolution that snapshots the check-to-variable message
    population every few iterations.

    Returns (converged, snapshots); each snapshot is (U population copy,
    error ratio observed after the variable update that consumed it).
    The snapshots feed the linear-programming improvement step: with the
    check side frozen, the one-step output error is linear in the
    variable-degree masses.
    """
    rng = np.random.default_rng(seed)
    floor = 2.0 / npop
    L0 = np.log((1.0 - p) / p)
    ch = np.where(rng.random(npop) < p, -L0, L0)
    V = ch.copy()
    vgroups = _groups(lam, npop)
    cgroups = _groups(rho, npop)
    snapshots = []
    err_prev = 1.0
    stall = 0
    for it in range(max_iter):
        U = np.empty(npop)
        pos = 0
        for d, n in cgroups:
            idx = rng.integers(0, npop, (n, d - 1))
            t = np.tanh(np.clip(V[idx], -38.0, 38.0) * 0.5)
            prod = np.clip(np.prod(t, axis=1), -1 + 1e-14, 1 - 1e-14)
            U[pos:pos + n] = 2.0 * np.arctanh(prod)
            pos += n
        Vn = np.empty(npop)
        ch_s = ch[rng.integers(0, npop, npop)]
        pos = 0
        for d, n in vgroups:
            idx = rng.integers(0, npop, (n, d - 1))
            Vn[pos:pos + n] = ch_s[pos:pos + n] + U[idx].sum(axis=1)
            pos += n
        V = np.clip(Vn, -700.0, 700.0)
        err = float(np.mean(V <= 0.0))
        if it % store_every == 0:
            snapshots.append((U.copy(), err))
        if err <= floor:
            return True, snapshots
        if err >= err_prev - 1e-4:
            stall += 1
            if stall > 80 and err > 0.05:
                return False, snapshots
        else:
            stall = 0
        err_prev = err
    return False, snapshots


LP_DEGREES = tuple(range(2, 31)) + (40, 50, 60, 80, 100, 150, 200, 300)


def lp_improve(snapshots, rho: dict, rate: float, p: float,
               degrees=LP_DEGREES, n_samp: int = 1 << 17, seed: int = 9):
    """One linear-programming step over the variable degree profile.

    For each frozen check-message population U_t, the error after the next
    variable update is sum_d lam_d q_{t,d} with q_{t,d} the probability
    that the channel value plus d-1 draws from U_t is nonpositive.  The LP
    maximizes the worst-case improvement margin over all snapshots subject
    to normalization, the design-rate constraint, and BSC stability.
    """
    from scipy.optimize import linprog

    degrees = sorted(degrees)
    dmax = degrees[-1]
    rng = np.random.default_rng(seed)
    L0 = np.log((1.0 - p) / p)
    if len(snapshots) > 48:
        keep = np.unique(np.linspace(0, len(snapshots) - 1, 48).round().astype(int))
        snapshots = [snapshots[i] for i in keep]
    q_rows = np.empty((len(snapshots), len(degrees)))
    e_obs = np.empty(len(snapshots))
    for t, (U, err) in enumerate(snapshots):
        idx = rng.integers(0, U.size, (n_samp, dmax - 1))
        sums = np.cumsum(U[idx], axis=1)
        ch = np.where(rng.random(n_samp) < p, -L0, L0)
        for k, d in enumerate(degrees):
            q_rows[t, k] = np.mean(ch + sums[:, d - 2] <= 0.0)
        e_obs[t] = err

    n = len(degrees)
    # variables: lam_d for each menu degree, then the margin m
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([q_rows, np.ones((len(snapshots), 1))])
    b_ub = e_obs
    lam2_cap = 0.98 * stability_cap(p, rho)
    cap_row = np.zeros(n + 1)
    cap_row[degrees.index(2)] = 1.0
    A_ub = np.vstack([A_ub, cap_row])
    b_ub = np.append(b_ub, lam2_cap)
    s_target = sum(m / d for d, m in rho.items()) / (1.0 - rate)
    A_eq = np.array([[1.0] * n + [0.0],
                     [1.0 / d for d in degrees] + [0.0]])
    b_eq = np.array([1.0, s_target])
    bounds = [(0.0, 1.0)] * n + [(None, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if not res.success or res.x[-1] <= 0.0:
        return None, 0.0
    lam = {d: float(m) for d, m in zip(degrees, res.x[:n]) if m > 1e-6}
    total = sum(lam.values())
    lam = {d: m / total for d, m in lam.items()}
    return lam, float(res.x[-1])


def design_lp(rate: float, lam: dict, rho: dict, p0: float, step: float = 5e-4,
              rounds: int = 60, npop: int = 1 << 15, max_iter: int = 500,
              seed: int = 11, verbose: bool = True):
    """Escalate the target crossover, fixing the profile by LP when density
    evolution stalls.  Returns (best_p, lam) for the largest crossover the
    final profile converged at within the iteration budget."""
    rng = np.random.default_rng(seed)
    p = p0
    best = None
    fails = 0
    for rnd in range(rounds):
        conv, snaps = de_trajectory(lam, rho, p, npop=npop, max_iter=max_iter,
                                    seed=int(rng.integers(1 << 30)))
        if conv:
            best = (p, dict(lam))
            if verbose:
                print(f"[lp {rnd:3d}] p={p:.4f} converged", flush=True)
            p = round(p + step, 6)
            fails = 0
            continue
        lam_new, margin = lp_improve(snaps, rho, rate, p,
                                     seed=int(rng.integers(1 << 30)))
        if lam_new is None or not profile_ok(lam_new, rho, p):
            fails += 1
            if verbose:
                print(f"[lp {rnd:3d}] p={p:.4f} stalled, LP infeasible", flush=True)
            if fails >= 2:
                break
            continue
        conv2, _ = de_trajectory(lam_new, rho, p, npop=npop, max_iter=max_iter,
                                 seed=int(rng.integers(1 << 30)))
        if verbose:
            print(f"[lp {rnd:3d}] p={p:.4f} margin={margin:.2e} "
                  f"-> {'converged' if conv2 else 'still stalled'} "
                  f"lam={fmt(lam_new)}", flush=True)
        if conv2:
            lam = lam_new
            best = (p, dict(lam))
            p = round(p + step, 6)
            fails = 0
        else:
            # keep the LP iterate anyway: it improves the one-step map on
            # the stalled trajectory, so reiterating from it can break
            # through even when a single step does not
            lam = lam_new
            fails += 1
            if fails >= 3:
                break
    return best


def threshold_bisect(lam: dict, rho: dict, lo: float, hi: float, steps: int = 8,
                     **kw) -> tuple[float, float]:
    """Bracket the convergence threshold in [lo, hi]."""
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        ok, _ = de_converges(lam, rho, mid, **kw)
        if ok:
            lo = mid
        else:
            hi = mid
    return lo, hi


def solve_endpoints(mid: dict, rate: float, rho: dict, dmax: int):
    """Fill lam[2] and lam[dmax] so the distribution sums to one and meets
    the rate constraint; None when that needs negative mass."""
    inv_target = sum(m / d for d, m in rho.items()) / (1.0 - rate)
    # 2x2 solve: x2 + xm = 1-s ; x2/2 + xm/dmax = t-si
    a = 1.0 - sum(mid.values())
    b = inv_target - sum(m / d for d, m in mid.items())
    x2 = (a / dmax - b) / (1.0 / dmax - 0.5)
    xm = a - x2
    if x2 < 0 or xm < 0:
        return None
    lam = {2: x2, dmax: xm}
    for d, m in mid.items():
        lam[d] = lam.get(d, 0.0) + m
    return lam


MID_DEGREES = (3, 4, 5, 7, 9, 12, 16, 22, 30, 42, 60, 85, 110)
DMAX_CHOICES = (120, 200, 300)
RHO_CHOICES = ({3: 1.0}, {2: 0.1, 3: 0.9}, {2: 0.2, 3: 0.8},
               {2: 0.3, 3: 0.7}, {2: 0.4, 3: 0.6}, {3: 0.85, 4: 0.15})


def random_profile(rng, rate: float):
    rho = RHO_CHOICES[rng.integers(0, len(RHO_CHOICES))]
    dmax = int(DMAX_CHOICES[rng.integers(0, len(DMAX_CHOICES))])
    k = int(rng.integers(1, 5))
    degs = rng.choice(MID_DEGREES, size=k, replace=False)
    budget = rng.uniform(0.15, 0.45)
    masses = rng.dirichlet(np.ones(k)) * budget
    lam = solve_endpoints(dict(zip(map(int, degs), masses)), rate, rho, dmax)
    if lam is None:
        return None
    return lam, rho


def perturb_profile(rng, lam: dict, rho: dict, rate: float):
    mid = {d: m for d, m in lam.items() if d != 2 and m > 0}
    dmax = max(mid)
    mid.pop(dmax)
    new_mid = {}
    for d, m in mid.items():
        new_mid[d] = max(0.0, m * rng.uniform(0.7, 1.3))
    if rng.random() < 0.3 and len(new_mid) < 6:
        d_new = int(rng.choice(MID_DEGREES))
        new_mid[d_new] = new_mid.get(d_new, 0.0) + rng.uniform(0.01, 0.08)
    if rng.random() < 0.2:
        dmax = int(DMAX_CHOICES[rng.integers(0, len(DMAX_CHOICES))])
    if rng.random() < 0.15:
        rho = RHO_CHOICES[rng.integers(0, len(RHO_CHOICES))]
    out = solve_endpoints(new_mid, rate, rho, dmax)
    return (out, rho) if out is not None else None


def profile_ok(lam: dict, rho: dict, p_hint: float) -> bool:
    if any(m < -1e-12 for m in lam.values()):
        return False
    return lam.get(2, 0.0) <= 0.985 * stability_cap(p_hint, rho)


def transfer_profile(lam, rho, rate: float):
    """Refit a profile found at one rate to another rate.

    Keeps the interior lambda masses and the check distribution, re-solves
    the two endpoint masses (degree 2 and the max degree) for the new rate.
    """
    dmax = max(lam)
    mid = {d: m for d, m in lam.items() if d not in (2, dmax)}
    sol = solve_endpoints(mid, rate, rho, dmax)
    if sol is None:
        return None
    return sol, dict(rho)


def search(rate: float, minutes: float, seed: int, out_path: str | None,
           p_hint: float | None = None, init_path: str | None = None):
    rng = np.random.default_rng(seed)
    if p_hint is None:
        # open the bracket a little above the best-known region
        p_hint = {0.06125: 0.348, 0.07: 0.340, 0.08: 0.328}.get(rate, 0.33)
    deadline = time.time() + minutes * 60.0
    best = None  # (lo, hi, lam, rho)
    trials = 0

    if init_path:
        with open(init_path) as fh:
            prof = json.load(fh)
        lam0 = {int(d): m for d, m in prof["lambda"].items()}
        rho0 = {int(d): m for d, m in prof["rho"].items()}
        cand = transfer_profile(lam0, rho0, rate)
        if cand is not None and profile_ok(cand[0], cand[1], p_hint):
            lo, hi = threshold_bisect(cand[0], cand[1], 0.30, p_hint + 0.012,
                                      steps=8, npop=1 << 15, max_iter=1500,
                                      seed=int(rng.integers(1 << 30)))
            best = (lo, hi, cand[0], cand[1])
            print(f"[init] threshold in [{lo:.4f}, {hi:.4f}] "
                  f"lam={fmt(cand[0])} rho={fmt(cand[1])}", flush=True)

    def evaluate(lam, rho, coarse=True):
        if coarse:
            return threshold_bisect(lam, rho, 0.29, p_hint + 0.012, steps=6,
                                    npop=1 << 13, max_iter=500,
                                    seed=int(rng.integers(1 << 30)))
        return threshold_bisect(lam, rho, 0.30, p_hint + 0.012, steps=8,
                                npop=1 << 15, max_iter=1500,
                                seed=int(rng.integers(1 << 30)))

    while time.time() < deadline:
        trials += 1
        use_local = best is not None and rng.random() < 0.6
        cand = (perturb_profile(rng, best[2], best[3], rate) if use_local
                else random_profile(rng, rate))
        if cand is None:
            continue
        lam, rho = cand
        if not profile_ok(lam, rho, p_hint):
            continue
        lo, hi = evaluate(lam, rho, coarse=True)
        # coarse runs underestimate a little; refine anything competitive
        if best is None or lo > best[0] - 0.0015:
            lo2, hi2 = evaluate(lam, rho, coarse=False)
            if best is None or lo2 > best[0]:
                best = (lo2, hi2, lam, rho)
                print(f"[{trials:4d}] threshold in [{lo2:.4f}, {hi2:.4f}] "
                      f"lam={fmt(lam)} rho={fmt(rho)}", flush=True)
    if best is None:
        print("no feasible profile found", file=sys.stderr)
        return 1
    lo, hi, lam, rho = best
    result = {
        "rate": rate,
        "de_threshold": round(lo, 4),
        "bracket": [round(lo, 5), round(hi, 5)],
        "lambda": {str(d): round(m, 6) for d, m in sorted(lam.items())},
        "rho": {str(d): round(m, 6) for d, m in sorted(rho.items())},
        "trials": trials,
        "seed": seed,
    }
    text = json.dumps(result, indent=2)
    print(text)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    return 0


def fmt(dist: dict) -> str:
    return "{" + ", ".join(f"{d}: {m:.3f}" for d, m in sorted(dist.items())) + "}"


def cmd_threshold(args):
    with open(args.profile) as fh:
        prof = json.load(fh)
    lam = {int(d): m for d, m in prof["lambda"].items()}
    rho = {int(d): m for d, m in prof["rho"].items()}
    print(f"design rate {design_rate(lam, rho):.5f}")
    lo, hi = threshold_bisect(lam, rho, args.lo, args.hi, steps=args.steps,
                              npop=1 << args.log2pop, max_iter=args.iters, seed=args.seed)
    print(f"threshold in [{lo:.5f}, {hi:.5f}]")
    return 0


def cmd_lp(args):
    with open(args.init) as fh:
        prof = json.load(fh)
    lam = {int(d): m for d, m in prof["lambda"].items()}
    rho = {int(d): m for d, m in prof["rho"].items()}
    if args.rate is not None and abs(design_rate(lam, rho) - args.rate) > 1e-4:
        cand = transfer_profile(lam, rho, args.rate)
        if cand is None:
            print("cannot transfer profile to requested rate", file=sys.stderr)
            return 1
        lam, rho = cand
    rate = args.rate if args.rate is not None else design_rate(lam, rho)
    p0 = args.p0 if args.p0 is not None else prof.get("de_threshold", 0.32) - 0.002
    best = design_lp(rate, lam, rho, p0, step=args.step, rounds=args.rounds,
                     npop=1 << args.log2pop, max_iter=args.iters, seed=args.seed)
    if best is None:
        print("no convergent operating point found", file=sys.stderr)
        return 1
    p_best, lam_best = best
    result = {
        "rate": rate,
        "de_threshold": round(p_best, 4),
        "bracket": [round(p_best, 5), round(p_best + args.step, 5)],
        "lambda": {str(d): round(m, 6) for d, m in sorted(lam_best.items())},
        "rho": {str(d): round(m, 6) for d, m in sorted(rho.items())},
        "iter_budget": args.iters,
        "seed": args.seed,
    }
    text = json.dumps(result, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_waterfall(args):
    # finite-length check of a constructed code using the package decoder
    sys.path.insert(0, "src")
    from dmcv_qkd.ldpc import build_code, code_fixture, ldpc_decode, ldpc_syndrome

    code = build_code(code_fixture(args.code))
    rng = np.random.default_rng(args.seed)
    for p in (float(x) for x in args.points.split(",")):
        ok = 0
        iters = []
        for _ in range(args.blocks):
            bob = rng.integers(0, 2, code.block_len, dtype=np.uint8)
            flips = rng.random(code.block_len) < p
            alice = bob ^ flips
            syn = ldpc_syndrome(bob, code)
            res = ldpc_decode(alice, syn, code, p, max_iter=args.iters)
            ok += bool(res.success and np.array_equal(res.bits, bob))
            iters.append(res.iterations)
        print(f"p={p:.4f}: {ok}/{args.blocks} corrected, "
              f"median iters {int(np.median(iters))}", flush=True)
    return 0


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("search", help="optimize a degree profile for a rate")
    s.add_argument("--rate", type=float, required=True)
    s.add_argument("--minutes", type=float, default=30.0)
    s.add_argument("--seed", type=int, default=2026)
    s.add_argument("--out", default=None)
    s.add_argument("--init", default=None,
                   help="profile JSON to transfer and refine")
    s.set_defaults(func=lambda a: search(a.rate, a.minutes, a.seed, a.out,
                                         init_path=a.init))

    t = sub.add_parser("threshold", help="evaluate one profile JSON")
    t.add_argument("--profile", required=True)
    t.add_argument("--lo", type=float, default=0.30)
    t.add_argument("--hi", type=float, default=0.36)
    t.add_argument("--steps", type=int, default=9)
    t.add_argument("--log2pop", type=int, default=16)
    t.add_argument("--iters", type=int, default=2200)
    t.add_argument("--seed", type=int, default=7)
    t.set_defaults(func=cmd_threshold)

    lp = sub.add_parser("lp", help="LP refinement with crossover escalation")
    lp.add_argument("--init", required=True, help="starting profile JSON")
    lp.add_argument("--rate", type=float, default=None)
    lp.add_argument("--p0", type=float, default=None)
    lp.add_argument("--step", type=float, default=5e-4)
    lp.add_argument("--rounds", type=int, default=60)
    lp.add_argument("--log2pop", type=int, default=15)
    lp.add_argument("--iters", type=int, default=500)
    lp.add_argument("--seed", type=int, default=11)
    lp.add_argument("--out", default=None)
    lp.set_defaults(func=cmd_lp)

    w = sub.add_parser("waterfall", help="finite-length FER of a fixture code")
    w.add_argument("--code", required=True)
    w.add_argument("--points", required=True, help="comma-separated crossover values")
    w.add_argument("--blocks", type=int, default=20)
    w.add_argument("--iters", type=int, default=400)
    w.add_argument("--seed", type=int, default=5)
    w.set_defaults(func=cmd_waterfall)

    args = ap.parse_args()
    raise SystemExit(args.func(args))


if __name__ == "__main__":
    main()
