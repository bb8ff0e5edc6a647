"""Published six-run bench statistics used as regression fixtures.

The desk campaign consists of six acquisition runs at N_tot ~ 1.2e9 symbols
each, two working points (mean amplitude ~0.75 and ~0.81), and per-run
channel estimates.  These rows anchor the regression suite: the analyzer
must reproduce their internal identities, the key-length engine consumes
them as ObservableStats, and the error-correction tables reference their
BERs.

Known quirks of the published tables, preserved as-is rather than patched:
runs 1 and 3 share one amplitude row (its mean magnitude 0.7540 matches
run 3's working point, not run 1's 0.7494), and run 4's amplitude row
duplicates the runs-5/6 values although its working point is 0.7545.  The
fleet-level identity xi_A = 2<n_beta>/T holds to well under 1%; per-run
amplitude cross-checks are deliberately not enforced where the source rows
contradict.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import ObservableStats, RunStatistics
from .ldpc import code_fixture, efficiency

XI_A_FLEET = 2.71e-3  # input-referenced excess noise equivalent, SNU


@dataclass(frozen=True)
class EccOutcome:
    """One error-correction column of the extracted-keys table."""

    code_id: str
    fer: float          # frame error rate, fraction
    beta: float         # published efficiency, fraction
    key_mb: float       # extracted key length, megabytes


@dataclass(frozen=True)
class RunFixture:
    """One row of the published per-run parameter tables."""

    run: int
    n: float                 # private (key) states
    n_total: float           # sent states
    T: float
    eta: float
    nu_el: float             # SNU
    i_t: float               # energy-test outlier fraction
    ber_x: float
    ber_p: float
    amplitude: float         # published mean |alpha| for the working point
    alphas: tuple            # four complex sending amplitudes
    mean_n_beta: tuple       # per-symbol <n_beta>, SNU
    mean_n2_beta: tuple      # per-symbol <n^2_beta>
    closest: EccOutcome
    next_best: EccOutcome

    @property
    def k_test(self) -> float:
        return self.n_total - self.n

    def observable_stats(self) -> ObservableStats:
        """Test-round aggregates in the shape the acceptance test consumes."""
        alphas = np.asarray(self.alphas, dtype=np.complex128)
        m_j = np.full(4, int(round(self.k_test / 4)), dtype=np.int64)
        return ObservableStats(
            mean_n_beta=np.asarray(self.mean_n_beta, dtype=np.float64),
            mean_n2_beta=np.asarray(self.mean_n2_beta, dtype=np.float64),
            m_j=m_j,
            beta_j=np.sqrt(self.T * self.eta) * alphas,
            ber_x=self.ber_x,
            ber_p=self.ber_p,
            i_t=self.i_t,
        )

    def run_statistics(self) -> RunStatistics:
        xi = 2.0 * float(np.mean(self.mean_n_beta)) / self.T
        return RunStatistics(
            n_total=int(round(self.n_total)),
            n_key=int(round(self.n)),
            k_test=int(round(self.k_test)),
            T_hat=self.T,
            eta=self.eta,
            nu_el=self.nu_el,
            xi_hat=xi,
            stats=self.observable_stats(),
        )

    def efficiency_report(self) -> dict:
        """beta = r/(1 - h2(BER)) for both installed codes, three BER readings.

        The published column agrees with the lower-BER stream to within
        0.05 percentage points on every run; the X-stream reading stays
        within 1.1 points.  All three variants are reported because the
        capacity convention behind the published numbers is not stated.
        """
        out = {}
        for label, outcome in (("closest", self.closest), ("next", self.next_best)):
            rate = code_fixture(outcome.code_id)["rate"]
            ber_min = min(self.ber_x, self.ber_p)
            out[label] = {
                "code_id": outcome.code_id,
                "rate": rate,
                "beta_x": efficiency(rate, self.ber_x),
                "beta_p": efficiency(rate, self.ber_p),
                "beta_mean": efficiency(rate, 0.5 * (self.ber_x + self.ber_p)),
                "beta_min_stream": efficiency(rate, ber_min),
                "beta_published": outcome.beta,
            }
        return out


_ALPHAS_A = (0.5289 + 0.5255j, 0.5338 - 0.5442j, -0.5343 + 0.5444j, -0.5286 - 0.5257j)
_ALPHAS_B = (0.5263 + 0.5221j, 0.5312 - 0.5414j, -0.5314 + 0.5420j, -0.5263 - 0.5215j)
_ALPHAS_C = (0.5657 + 0.5678j, 0.5862 - 0.5745j, -0.5860 + 0.5745j, -0.5660 - 0.5681j)

_NBETA_A = (0.9458e-3, 0.4128e-3, 0.0691e-3, 1.1511e-3)
_NBETA_B = (0.9354e-3, 0.1293e-3, 0.0390e-3, 0.9096e-3)
_NBETA_C = (1.0567e-3, 0.2228e-3, 0.2246e-3, 1.4379e-3)

_N2BETA_A = (5.2876e-3, 6.9297e-3, 6.3640e-3, 6.8303e-3)
_N2BETA_B = (6.1404e-3, 7.0781e-3, 7.1981e-3, 5.9385e-3)
_N2BETA_C = (7.4074e-3, 7.3594e-3, 7.2678e-3, 7.2334e-3)

PAPER_RUNS = (
    RunFixture(1, 8.9866e8, 1.1982e9, 0.4950, 0.720, 0.1350, 0.6677e-8,
               0.3378, 0.3368, 0.7494, _ALPHAS_A, _NBETA_A, _N2BETA_A,
               EccOutcome("ecc1", 0.1600, 0.8948, 0.19),
               EccOutcome("ecc0", 0.0000, 0.7829, 0.74)),
    RunFixture(2, 8.9866e8, 1.1982e9, 0.4950, 0.720, 0.1351, 0.0,
               0.3376, 0.3368, 0.7499, _ALPHAS_B, _NBETA_B, _N2BETA_B,
               EccOutcome("ecc1", 0.1437, 0.8942, 0.52),
               EccOutcome("ecc0", 0.0000, 0.7824, 0.81)),
    RunFixture(3, 8.9866e8, 1.1982e9, 0.4959, 0.720, 0.1354, 0.6677e-8,
               0.3367, 0.3357, 0.7540, _ALPHAS_A, _NBETA_A, _N2BETA_A,
               EccOutcome("ecc1", 0.0589, 0.8823, 1.60),
               EccOutcome("ecc0", 0.0000, 0.7720, 0.55)),
    RunFixture(4, 8.9866e8, 1.1983e9, 0.4938, 0.720, 0.1348, 0.0,
               0.3367, 0.3362, 0.7545, _ALPHAS_C, _NBETA_C, _N2BETA_C,
               EccOutcome("ecc1", 0.0618, 0.8877, 1.56),
               EccOutcome("ecc0", 0.0000, 0.7767, 0.56)),
    RunFixture(5, 8.9866e8, 1.1982e9, 0.4943, 0.720, 0.1349, 0.0,
               0.3253, 0.3245, 0.8111, _ALPHAS_C, _NBETA_C, _N2BETA_C,
               EccOutcome("ecc2", 0.0507, 0.8813, 1.38),
               EccOutcome("ecc1", 0.0000, 0.7712, 0.04)),
    RunFixture(6, 8.9866e8, 1.1982e9, 0.4914, 0.720, 0.1354, 0.0,
               0.3247, 0.3261, 0.8112, _ALPHAS_C, _NBETA_C, _N2BETA_C,
               EccOutcome("ecc2", 0.0979, 0.8829, 0.49),
               EccOutcome("ecc1", 0.0001, 0.7725, 0.00)),
)


def run_fixture(run: int) -> RunFixture:
    if not 1 <= run <= len(PAPER_RUNS):
        raise ValueError(f"no fixture for run {run}")
    return PAPER_RUNS[run - 1]


def fleet_consistency() -> dict:
    """Cross-run identities the published tables must satisfy.

    xi_A = 2 <n_beta> / T evaluated on fleet averages, and the key/test
    split n/N_tot = 0.75 per run.
    """
    all_nbeta = np.concatenate([np.asarray(r.mean_n_beta) for r in PAPER_RUNS])
    mean_t = float(np.mean([r.T for r in PAPER_RUNS]))
    xi_fleet = 2.0 * float(np.mean(all_nbeta)) / mean_t
    ratios = np.array([r.n / r.n_total for r in PAPER_RUNS])
    return {
        "xi_a_fleet": xi_fleet,
        "xi_a_published": XI_A_FLEET,
        "xi_a_rel_err": abs(xi_fleet - XI_A_FLEET) / XI_A_FLEET,
        "key_ratio": ratios,
        "key_ratio_max_err": float(np.max(np.abs(ratios - 0.75))),
    }
