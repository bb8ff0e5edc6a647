"""Energy test and acceptance test gating key generation.

Two statistical gates run before any key material is produced:

* the energy test counts disclosed test rounds whose outcome magnitude
  reaches the testing amplitude beta_test; more than l_T such outliers
  abort the protocol and certify (with error epsilon_ET) that the
  conditional state mostly lives inside the cutoff space, with weight
  parameter w;

* the acceptance test compares the measured per-symbol displaced moments
  against pre-declared intervals.  Interval half-widths combine the
  statistical allowance mu (from the acceptance-testing tail bound), a
  completeness slack t chosen by the operator, and on the lower side the
  weight correction w * ||X||_inf.

Both tests are pure functions of their inputs; aborting is the caller's
job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import ObservableStats

OBSERVABLE_NAMES = ("n_beta", "n2_beta")


def operator_norms(bound_m: float):
    """Sup norms of the displaced number and squared number observables
    restricted to the bounded detection range: (M^2 - 1/2, M^4 - M^2/2)."""
    if bound_m <= 0:
        raise ValueError("detection range must be positive")
    m2 = bound_m * bound_m
    return m2 - 0.5, m2 * m2 - 0.5 * m2


def mu_bound(norm_inf: float, m: float, epsilon_AT: float) -> float:
    """Statistical allowance mu_X = sqrt(||X||^2 ln(2/eps) / (2 m)).

    m may exceed the platform integer range (emulated test budgets), so it
    is treated as a real count.
    """
    if m <= 0:
        raise ValueError("test count must be positive")
    if not 0 < epsilon_AT < 1:
        raise ValueError("epsilon_AT must be in (0, 1)")
    if norm_inf < 0:
        raise ValueError("operator norm must be nonnegative")
    return norm_inf * math.sqrt(math.log(2.0 / epsilon_AT) / (2.0 * m))


@dataclass(frozen=True)
class EnergyTestParams:
    beta_test: float = 5.0
    n_c: int = 20
    w: float = 1e-7
    l_T: int = 2
    k_T: int = 0
    epsilon_ET: float = 1e-11

    def __post_init__(self):
        if self.beta_test <= 0:
            raise ValueError("testing amplitude must be positive")
        if self.l_T < 0:
            raise ValueError("allowed outlier count must be nonnegative")

    @classmethod
    def from_threshold(cls, i_t_threshold: float, k_T: int, **kw):
        """Allowed outliers from a rate threshold: l_T = floor(thr * k_T)."""
        return cls(l_T=int(math.floor(i_t_threshold * k_T)), k_T=k_T, **kw)


@dataclass(frozen=True)
class EnergyTestResult:
    passed: bool
    i_t: float
    l_t_meas: int


def energy_test_from_counts(l_t_meas: int, k_T: int,
                            p: EnergyTestParams) -> EnergyTestResult:
    if k_T <= 0:
        raise ValueError("test-round count must be positive")
    return EnergyTestResult(passed=l_t_meas <= p.l_T,
                            i_t=l_t_meas / k_T, l_t_meas=l_t_meas)


def energy_test(test_amplitudes, p: EnergyTestParams) -> EnergyTestResult:
    """Count outcomes at or beyond beta_test among the test rounds.

    test_amplitudes may be the magnitudes |zeta| or the complex outcomes.
    """
    a = np.asarray(test_amplitudes)
    if np.iscomplexobj(a):
        a = np.abs(a)
    l_meas = int(np.count_nonzero(a >= p.beta_test))
    return energy_test_from_counts(l_meas, a.size, p)


@dataclass
class AcceptanceSet:
    """Pre-declared intervals for the per-symbol displaced moments.

    lo/hi are (4, 2) arrays indexed [symbol, observable] with observables
    ordered (n_beta, n2_beta).  beta_j records the raw-plane displacements
    the observables were defined with.
    """

    lo: np.ndarray
    hi: np.ndarray
    beta_j: np.ndarray
    epsilon_AT: float
    w: float
    norms: tuple
    slack: tuple
    m_j: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        self.beta_j = np.asarray(self.beta_j, dtype=np.complex128)
        self.m_j = np.asarray(self.m_j, dtype=np.float64)
        if self.lo.shape != (4, 2) or self.hi.shape != (4, 2):
            raise ValueError("acceptance set must cover 4 symbols x 2 observables")
        if np.any(self.lo > self.hi):
            raise ValueError("empty acceptance interval")

    def to_json(self) -> dict:
        return {
            "lo": self.lo.tolist(), "hi": self.hi.tolist(),
            "beta_j_re": self.beta_j.real.tolist(),
            "beta_j_im": self.beta_j.imag.tolist(),
            "epsilon_AT": self.epsilon_AT, "w": self.w,
            "norms": list(self.norms), "slack": list(self.slack),
            "m_j": self.m_j.tolist(),
            "observables": list(OBSERVABLE_NAMES),
        }

    @classmethod
    def from_json(cls, d: dict) -> "AcceptanceSet":
        beta = (np.asarray(d["beta_j_re"]) + 1j * np.asarray(d["beta_j_im"]))
        return cls(lo=d["lo"], hi=d["hi"], beta_j=beta,
                   epsilon_AT=d["epsilon_AT"], w=d["w"],
                   norms=tuple(d["norms"]), slack=tuple(d["slack"]),
                   m_j=d["m_j"])


def build_acceptance_set(expected: ObservableStats, p: EnergyTestParams,
                         epsilon_AT: float, slack=0.0,
                         bound_m: float = 5.0,
                         m_j=None) -> AcceptanceSet:
    """Intervals around the expected statistics.

    Per symbol j and observable X:

        [<X>_j - t_X - mu_j - w ||X||_inf,  <X>_j + t_X + mu_j]

    slack may be a scalar t applied to both observables or a pair
    (t_n, t_n2).  mu_j uses the test count of the class; pass m_j to build
    the set for a different (e.g. bench-scale) test budget than the
    characterization run's.
    """
    if np.isscalar(slack):
        slack = (float(slack), float(slack))
    norms = operator_norms(bound_m)
    m_j = expected.m_j if m_j is None else np.asarray(m_j, dtype=np.float64)
    means = np.column_stack([expected.mean_n_beta, expected.mean_n2_beta])
    lo = np.empty((4, 2))
    hi = np.empty((4, 2))
    for j in range(4):
        for k in range(2):
            mu = mu_bound(norms[k], float(m_j[j]), epsilon_AT)
            lo[j, k] = means[j, k] - slack[k] - mu - p.w * norms[k]
            hi[j, k] = means[j, k] + slack[k] + mu
    return AcceptanceSet(lo=lo, hi=hi, beta_j=expected.beta_j,
                         epsilon_AT=epsilon_AT, w=p.w, norms=norms,
                         slack=tuple(slack), m_j=m_j)


@dataclass(frozen=True)
class AcceptanceViolation:
    symbol: int
    observable: str
    value: float
    lo: float
    hi: float


def acceptance_test(observed: ObservableStats, accepted: AcceptanceSet):
    """(passed, violations): every observed average must lie in its interval."""
    means = np.column_stack([observed.mean_n_beta, observed.mean_n2_beta])
    if means.shape != accepted.lo.shape:
        raise ValueError("observed statistics do not match the acceptance set")
    violations = []
    for j in range(4):
        for k in range(2):
            v = means[j, k]
            if not (accepted.lo[j, k] <= v <= accepted.hi[j, k]):
                violations.append(AcceptanceViolation(
                    symbol=j, observable=OBSERVABLE_NAMES[k], value=float(v),
                    lo=float(accepted.lo[j, k]), hi=float(accepted.hi[j, k])))
    return len(violations) == 0, violations
