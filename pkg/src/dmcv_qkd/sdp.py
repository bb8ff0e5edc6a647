"""Conditional-entropy lower bound via Frank-Wolfe over a constrained
density-matrix set.

The optimization variable is the joint state rho on A (4-dim symbol
register) tensor B (cutoff optical mode).  The objective

    f(rho) = D( G(rho) || Z(G(rho)) )     [bits]

is the standard numerical-framework form of H(X|E): G embeds Bob's key-map
outcome into a classical register through the Kraus operator built from
sqrt(R_z) (discard included as a fifth branch, so G is trace preserving),
and Z pinches that register.  Frank-Wolfe gives a monotone upper-bound
sequence; a first-order expansion at the final iterate, evaluated through
an explicitly repaired dual-feasible point of the linear subproblem, gives
a lower bound that stays valid under solver inaccuracy.

All solves are deterministic: CLARABEL, single thread, fixed settings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .fock import displaced_number, displaced_number_sq, project_coherent_outer
from .regions import RegionOperators

LN2 = float(np.log(2.0))


class InfeasibleModelError(RuntimeError):
    """The constraint set admits no density matrix."""


class SubproblemError(RuntimeError):
    """The linear SDP subproblem solver failed."""


@dataclass(frozen=True)
class MomentConstraints:
    """Feasible set: observable intervals, weight, partial-trace window.

    Intervals are on joint-state expectations Tr[(|j><j| (x) X) rho]; the
    canonical builder folds the uniform symbol prior 1/4 into interval
    endpoints taken from per-symbol conditional statistics.
    """

    beta: np.ndarray        # (4,) complex displacement per symbol
    n1_lo: np.ndarray       # (4,)
    n1_hi: np.ndarray
    n2_lo: np.ndarray
    n2_hi: np.ndarray
    rho_a: np.ndarray       # (4, 4) partial-trace target
    weight: float = 0.0     # w; trace window [1-w, 1], Tr P + Tr N <= 2 sqrt(w)

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=complex))
        for name in ("n1_lo", "n1_hi", "n2_lo", "n2_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "rho_a", np.asarray(self.rho_a, dtype=complex))
        if self.beta.shape != (4,) or self.rho_a.shape != (4, 4):
            raise ValueError("expected 4 symbols")
        if np.any(self.n1_lo > self.n1_hi) or np.any(self.n2_lo > self.n2_hi):
            raise ValueError("empty observable interval")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")


def canonical_constraints(beta, n1, n2, mu1, mu2, rho_a, weight=0.0,
                          priors=None, norms=None,
                          mode="canonical") -> MomentConstraints:
    """Interval constraints on the prior-weighted conditional moments.

    Canonical mode (default):  p(n - mu) - w*||X||  <=  Tr  <=  p(n + mu),
    the weight slack entering the lower side only: the cutoff state can
    undershoot the true expectation by at most w times the observable's
    sup norm.  norms=(norm1, norm2) are the sup norms of the first- and
    second-moment observables on the detection range (None means 0, fine
    whenever weight == 0).

    Verbatim mode transcribes the printed pair
    Tr >= p(n + mu) - w*||X||  together with  Tr <= p(n - mu), which is
    only a nonempty interval when 2 p mu <= w*||X||; it exists for
    side-by-side comparison and raises ValueError otherwise.
    """
    p = np.full(4, 0.25) if priors is None else np.asarray(priors, float)
    n1 = np.asarray(n1, float)
    n2 = np.asarray(n2, float)
    w = float(weight)
    norm1, norm2 = (0.0, 0.0) if norms is None else norms
    if mode == "canonical":
        return MomentConstraints(
            beta=beta,
            n1_lo=p * (n1 - mu1) - w * norm1, n1_hi=p * (n1 + mu1),
            n2_lo=p * (n2 - mu2) - w * norm2, n2_hi=p * (n2 + mu2),
            rho_a=rho_a, weight=weight)
    if mode == "verbatim":
        return MomentConstraints(
            beta=beta,
            n1_lo=p * (n1 + mu1) - w * norm1, n1_hi=p * (n1 - mu1),
            n2_lo=p * (n2 + mu2) - w * norm2, n2_hi=p * (n2 - mu2),
            rho_a=rho_a, weight=weight)
    raise ValueError(f"unknown interval mode {mode!r}")


def honest_pure_loss_state(alphas, transmittance: float, dim: int,
                           priors=None):
    """Joint A (x) B state after a pure-loss channel, cut off at dim.

    Entry convention: block (j, k) carries
    p * loss_jk * |sqrt(T) a_j><sqrt(T) a_k| with the loss overlap factor
    exp((1-T)(-|a_j|^2/2 - |a_k|^2/2 + conj(a_k) a_j)), so the exact
    (uncut) partial trace over B reproduces the source Gram matrix
    rho_a[j, k] = p * <a_k|a_j>.  Returns (rho, rho_a).
    """
    alphas = np.asarray(alphas, complex)
    if alphas.shape != (4,):
        raise ValueError("need exactly four amplitudes")
    T = float(transmittance)
    if not 0.0 < T <= 1.0:
        raise ValueError("transmittance must lie in (0, 1]")
    p = np.full(4, 0.25) if priors is None else np.asarray(priors, float)
    rho = np.zeros((4 * dim, 4 * dim), dtype=complex)
    rho_a = np.zeros((4, 4), dtype=complex)
    for j in range(4):
        for k in range(4):
            a, b = alphas[j], alphas[k]
            ovl = -abs(a) ** 2 / 2 - abs(b) ** 2 / 2 + np.conj(b) * a
            rho_a[j, k] = np.sqrt(p[j] * p[k]) * np.exp(ovl)
            blk = project_coherent_outer(np.sqrt(T) * a, np.sqrt(T) * b, dim)
            rho[j * dim:(j + 1) * dim, k * dim:(k + 1) * dim] = (
                np.sqrt(p[j] * p[k]) * np.exp((1.0 - T) * ovl) * blk)
    return rho, rho_a


def projected_moments(rho: np.ndarray, beta, dim: int, priors=None):
    """Conditional <n_beta_j> and <n_beta_j^2> of a joint state's B blocks."""
    p = np.full(4, 0.25) if priors is None else np.asarray(priors, float)
    n1 = np.zeros(4)
    n2 = np.zeros(4)
    for j in range(4):
        blk = rho[j * dim:(j + 1) * dim, j * dim:(j + 1) * dim] / p[j]
        n1[j] = float(np.trace(displaced_number(beta[j], dim) @ blk).real)
        n2[j] = float(np.trace(displaced_number_sq(beta[j], dim) @ blk).real)
    return n1, n2


def constraint_operators(cons: MomentConstraints, dim: int):
    """The Hermitian observables behind each interval, on A (x) B."""
    ops = []
    for j in range(4):
        ej = np.zeros((4, 4))
        ej[j, j] = 1.0
        ops.append(np.kron(ej, displaced_number(cons.beta[j], dim)))
    for j in range(4):
        ej = np.zeros((4, 4))
        ej[j, j] = 1.0
        ops.append(np.kron(ej, displaced_number_sq(cons.beta[j], dim)))
    return ops


def kraus_operator(regions: RegionOperators) -> np.ndarray:
    """K = sum_z |z> (x) I_A (x) sqrt(R_z), discard branch last.

    Returns the (5*4*nb, 4*nb) matrix; K^dag K = I because the five pieces
    resolve the cutoff identity.
    """
    nb = regions.dim
    stack = regions.stacked()
    K = np.zeros((5 * 4 * nb, 4 * nb), dtype=complex)
    eye_a = np.eye(4)
    for z in range(5):
        vals, vecs = np.linalg.eigh(stack[z])
        root = (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.conj().T
        K[z * 4 * nb:(z + 1) * 4 * nb, :] = np.kron(eye_a, root)
    return K


def _safe_logm(mat: np.ndarray, pert: float):
    """Eigen-floored matrix log; also returns the floored eigensystem."""
    vals, vecs = np.linalg.eigh(mat)
    if np.any(np.isnan(vals)):
        raise FloatingPointError("NaN in spectrum during objective evaluation")
    vals = np.clip(vals, pert, None)
    return (vecs * np.log(vals)) @ vecs.conj().T, vals, vecs


def _pinch(sigma: np.ndarray, nb: int) -> np.ndarray:
    """Zero every block coupling different key-register branches."""
    d = 4 * nb
    out = np.zeros_like(sigma)
    for z in range(5):
        sl = slice(z * d, (z + 1) * d)
        out[sl, sl] = sigma[sl, sl]
    return out


def objective_and_gradient(rho: np.ndarray, kraus: np.ndarray,
                           pert: float = 1e-12):
    """f(rho) in bits and its gradient on the A (x) B space."""
    nb = kraus.shape[1] // 4
    G = kraus @ rho @ kraus.conj().T
    G = 0.5 * (G + G.conj().T)
    ZG = _pinch(G, nb)
    logG, valsG, _ = _safe_logm(G, pert)
    logZ, valsZ, _ = _safe_logm(ZG, pert)
    # relative entropy against the pinched state: Tr G log G - Tr G log ZG,
    # and Tr[G log ZG] = Tr[ZG log ZG] because the pinching projectors
    # commute with log ZG
    f_nats = float(np.real(np.trace(G @ (logG - logZ))))
    grad = kraus.conj().T @ (logG - logZ) @ kraus
    grad = 0.5 * (grad + grad.conj().T)
    return f_nats / LN2, grad / LN2


@dataclass
class SubproblemSolution:
    sigma: np.ndarray
    value: float
    duals: dict


def _build_subproblem(cons: MomentConstraints, ops, dim: int):
    """CVXPY model for  min Tr[C sigma]  over the feasible set.

    Zero-width intervals and weight 0 are emitted as genuine equality
    constraints: interior-point solvers choke on inequality pairs with an
    empty interior, and the degenerate P/N cones at w=0 are pointless.
    Returns (problem, sigma, C_par, handles) where handles records each
    constraint object with its kind for dual extraction.
    """
    d = 4 * dim
    sigma = cp.Variable((d, d), hermitian=True)
    C_par = cp.Parameter((d, d), hermitian=True)
    constraints = [sigma >> 0]
    lo_all = np.concatenate([cons.n1_lo, cons.n2_lo])
    hi_all = np.concatenate([cons.n1_hi, cons.n2_hi])
    handles = {"iv": []}
    for op, lo, hi in zip(ops, lo_all, hi_all):
        e = cp.real(cp.trace(op.conj().T @ sigma))
        if hi - lo < 1e-14:
            c = e == lo
            constraints.append(c)
            handles["iv"].append(("eq", c))
        else:
            c_lo = e >= lo
            c_hi = e <= hi
            constraints += [c_lo, c_hi]
            handles["iv"].append(("pair", c_lo, c_hi))
    if cons.weight == 0.0:
        # the partial-trace equality below already pins Tr sigma = 1;
        # a separate trace row would be linearly dependent on it
        handles["trace"] = ("none",)
    else:
        tr = cp.real(cp.trace(sigma))
        c_lo = tr >= 1.0 - cons.weight
        c_hi = tr <= 1.0
        constraints += [c_lo, c_hi]
        handles["trace"] = ("pair", c_lo, c_hi)
    sigma_a = cp.partial_trace(sigma, dims=(4, dim), axis=1)
    if cons.weight == 0.0:
        c_pt = sigma_a - cons.rho_a == 0
        constraints.append(c_pt)
    else:
        P = cp.Variable((4, 4), hermitian=True)
        N = cp.Variable((4, 4), hermitian=True)
        constraints += [P >> 0, N >> 0]
        c_pt = sigma_a - cons.rho_a == P - N
        constraints.append(c_pt)
        constraints.append(cp.real(cp.trace(P)) + cp.real(cp.trace(N))
                           <= 2.0 * np.sqrt(cons.weight))
    handles["ptrace"] = c_pt
    prob = cp.Problem(cp.Minimize(cp.real(cp.trace(C_par @ sigma))), constraints)
    return prob, sigma, C_par, handles


class _SubproblemCache:
    """One CVXPY problem reused across Frank-Wolfe iterations."""

    def __init__(self, cons: MomentConstraints, dim: int):
        self.cons = cons
        self.dim = dim
        self.ops = constraint_operators(cons, dim)
        self.prob, self.sigma, self.C_par, self.handles = _build_subproblem(
            cons, self.ops, dim)

    # tight first: the dual repair stays sharp; fall back to stock settings
    # on conditioning failures (the repair keeps the bound valid either way)
    SOLVER_OPTS = (
        {"tol_gap_abs": 1e-10, "tol_gap_rel": 1e-10, "tol_feas": 1e-10,
         "max_iter": 200},
        {},
    )

    def solve(self, C: np.ndarray) -> SubproblemSolution:
        self.C_par.value = 0.5 * (C + C.conj().T)
        last_exc = None
        for opts in self.SOLVER_OPTS:
            try:
                with warnings.catch_warnings():
                    warnings.filterwarnings(
                        "ignore", message="Solution may be inaccurate")
                    self.prob.solve(solver=cp.CLARABEL, verbose=False, **opts)
                last_exc = None
                break
            except cp.error.SolverError as exc:
                last_exc = exc
        if last_exc is not None:
            raise SubproblemError(
                f"linear subproblem solver failed: {last_exc}") from last_exc
        if self.prob.status in ("infeasible", "infeasible_inaccurate"):
            raise InfeasibleModelError(
                f"constraint set infeasible (solver status {self.prob.status})")
        if self.sigma.value is None:
            raise SubproblemError(f"no solution returned ({self.prob.status})")
        sig = np.asarray(self.sigma.value)
        sig = 0.5 * (sig + sig.conj().T)

        def scal(v):
            return float(v) if v is not None else 0.0

        iv = []
        for entry in self.handles["iv"]:
            if entry[0] == "eq":
                iv.append(("eq", scal(entry[1].dual_value)))
            else:
                iv.append(("pair", scal(entry[1].dual_value),
                           scal(entry[2].dual_value)))
        tr_entry = self.handles["trace"]
        if tr_entry[0] == "none":
            trace = ("none",)
        else:
            trace = ("pair", scal(tr_entry[1].dual_value),
                     scal(tr_entry[2].dual_value))
        Y = self.handles["ptrace"].dual_value
        duals = {"iv": iv, "trace": trace, "ptrace": Y}
        return SubproblemSolution(sigma=sig, value=float(self.prob.value), duals=duals)


def feasible_point(cons: MomentConstraints, dim: int,
                   cache: "_SubproblemCache | None" = None) -> np.ndarray:
    """A strictly feasible starting state, or InfeasibleModelError."""
    cache = cache or _SubproblemCache(cons, dim)
    sol = cache.solve(np.zeros((4 * dim, 4 * dim)))
    psd = _project_density(sol.sigma, cons)
    return psd


def _project_density(sigma: np.ndarray, cons: MomentConstraints) -> np.ndarray:
    """Clean tiny negative eigenvalues without leaving the trace window."""
    vals, vecs = np.linalg.eigh(sigma)
    vals = np.clip(vals, 0.0, None)
    total = vals.sum()
    hi = 1.0
    lo = 1.0 - cons.weight
    if total > hi:
        vals *= hi / total
    elif total < lo and total > 0:
        vals *= lo / total
    return (vecs * vals) @ vecs.conj().T


@dataclass
class FwReport:
    rho: np.ndarray
    upper_bound: float
    lower_bound: float
    gap: float
    fw_gap: float
    iterations: int
    objective_trace: list = field(default_factory=list)
    status: str = "converged"
    dual_clamped: bool = False

    def to_json(self) -> dict:
        return {
            "upper_bound": self.upper_bound,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "fw_gap": self.fw_gap,
            "iterations": self.iterations,
            "status": self.status,
            "dual_clamped": self.dual_clamped,
        }


def _line_search(f_of_t, t_hi: float = 1.0, evals: int = 40) -> tuple[float, float]:
    """Exact-enough 1-D search for convex f on [0, t_hi] by golden section."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, t_hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f_of_t(c), f_of_t(d)
    for _ in range(evals):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f_of_t(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f_of_t(d)
    t = c if fc <= fd else d
    return t, min(fc, fd)


def frank_wolfe(cons: MomentConstraints, regions: RegionOperators,
                tol: float = 1e-4, max_iter: int = 300,
                pert: float = 1e-12, rho0: np.ndarray | None = None) -> FwReport:
    """Minimize the conditional-entropy objective over the feasible set.

    Returns the best iterate with a monotone objective trace, the final
    Frank-Wolfe gap, and a repaired-dual lower bound (see
    dual_lower_bound).  `tol` is on the FW gap in bits.
    """
    dim = regions.dim
    cache = _SubproblemCache(cons, dim)
    kraus = kraus_operator(regions)
    rho = rho0 if rho0 is not None else feasible_point(cons, dim, cache)
    f_cur, grad = objective_and_gradient(rho, kraus, pert)
    trace = [f_cur]
    status = "max_iter"
    fw_gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        sol = cache.solve(grad)
        direction = sol.sigma - rho
        fw_gap = float(np.real(np.trace(grad.conj().T @ (-direction))))
        if fw_gap < tol:
            status = "converged"
            break

        def f_of_t(t):
            return objective_and_gradient(rho + t * direction, kraus, pert)[0]

        t_star, f_new = _line_search(f_of_t)
        if f_new >= f_cur:  # keep the trace monotone; zero step is feasible
            status = "stalled"
            break
        rho = rho + t_star * direction
        f_cur = f_new
        trace.append(f_cur)
        _, grad = objective_and_gradient(rho, kraus, pert)

    lower = dual_lower_bound(rho, grad, f_cur, cons, cache)
    # A certified lower bound survives being reduced, so clamping to the
    # primal value keeps lower <= upper as a hard postcondition even when
    # the iterate sits a solver tolerance outside the constraint set (tiny
    # intervals can be narrower than the solver's feasibility tolerance,
    # in which case f at the iterate may undershoot the constrained min).
    clamped = lower > f_cur
    if clamped:
        lower = f_cur
    return FwReport(rho=rho, upper_bound=f_cur, lower_bound=lower,
                    gap=f_cur - lower, fw_gap=fw_gap, iterations=it,
                    objective_trace=trace, status=status,
                    dual_clamped=clamped)


def dual_lower_bound(rho_star: np.ndarray, grad: np.ndarray, f_star: float,
                     cons: MomentConstraints,
                     cache: "_SubproblemCache | None" = None) -> float:
    """Certified lower bound  min_C f  >=  f* - Tr[grad rho*] + dual(min_C Tr[grad sigma]).

    Convexity gives f(sigma) >= f* + Tr[grad (sigma - rho*)] for every
    feasible sigma.  The affine term is bounded below through the linear
    subproblem's *dual*: the solver's multipliers are repaired into an
    exactly dual-feasible point (sign clipping, lambda_min shift on the
    PSD slack, budget lift on the partial-trace block), so weak duality
    holds regardless of how sloppy the primal solve was.
    """
    dim = rho_star.shape[0] // 4
    cache = cache or _SubproblemCache(cons, dim)
    sol = cache.solve(grad)

    ops = cache.ops
    lo_all = np.concatenate([cons.n1_lo, cons.n2_lo])
    hi_all = np.concatenate([cons.n1_hi, cons.n2_hi])

    Y_raw = sol.duals["ptrace"]
    Y_raw = np.zeros((4, 4)) if Y_raw is None else np.asarray(Y_raw)
    Y_raw = 0.5 * (Y_raw + Y_raw.conj().T)

    d = 4 * dim
    eye_b = np.eye(dim)

    def assemble(flip: float):
        """Base slack matrix and scalar offset for one equality-sign
        orientation.  Inequality multipliers clip to >= 0 regardless."""
        base = np.array(grad, dtype=complex)
        scalar = 0.0
        for i, entry in enumerate(sol.duals["iv"]):
            if entry[0] == "eq":
                nu = flip * entry[1]
                base -= nu * ops[i]
                scalar += nu * lo_all[i]
            else:
                y_lo = max(entry[1], 0.0)
                y_hi = max(entry[2], 0.0)
                base -= (y_lo - y_hi) * ops[i]
                scalar += y_lo * lo_all[i] - y_hi * hi_all[i]
        tr_entry = sol.duals["trace"]
        if tr_entry[0] == "pair":
            t_lo = max(tr_entry[1], 0.0)
            t_hi = max(tr_entry[2], 0.0)
            base -= (t_lo - t_hi) * np.eye(d)
            scalar += t_lo * (1.0 - cons.weight) - t_hi
        return base, scalar

    def evaluate(base, scalar, Y_A: np.ndarray) -> float:
        S = base - np.kron(Y_A, eye_b)
        # repair 1: absorb any PSD violation of the slack into Y_A; the
        # shifted kron term removes exactly lambda_min(S) from S
        shift = min(float(np.linalg.eigvalsh(S).min()), 0.0)
        Y_rep = Y_A + shift * np.eye(4)
        # repair 2: P, N >= 0 dualize to -z I <= Y_A <= z I
        z = float(np.abs(np.linalg.eigvalsh(Y_rep)).max())
        return (scalar
                + float(np.real(np.trace(Y_rep @ cons.rho_a)))
                - 2.0 * np.sqrt(cons.weight) * z)

    # the solver's equality multipliers carry a library-specific sign; all
    # equalities share one convention, so try both global orientations and
    # keep the tighter repaired bound (each is valid by weak duality)
    dual_value = max(
        evaluate(*assemble(1.0), Y_raw),
        evaluate(*assemble(-1.0), -Y_raw),
    )
    affine = f_star - float(np.real(np.trace(grad.conj().T @ rho_star)))
    return affine + dual_value
