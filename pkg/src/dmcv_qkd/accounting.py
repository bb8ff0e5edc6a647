"""Finite-size accounting: correction terms, epsilon composition, key length.

The secure key length in leftover-hashing form is

    l <= n * [H_min - delta_aep(eps_bar) - delta_w(w)] - leak_EC - pa_bits

where H_min is the certified conditional-entropy lower bound per retained
symbol, delta_aep is the asymptotic-equipartition correction, delta_w the
dimension-reduction correction for cutoff weight w, leak_EC the disclosed
bits, and pa_bits = 2 log2(1/eps_PA) the privacy-amplification subtraction
(100 bits fixed in the implementation, giving eps_PA_imp = 2^-50).

Epsilon bookkeeping is done in exact rational arithmetic so composition
identities hold exactly; floats appear only in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction


def binary_entropy(x: float) -> float:
    """Shannon entropy of a bit with bias x, in bits."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("binary_entropy argument must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def delta_w(w: float, z_dim: int = 4) -> float:
    """Dimension-reduction correction for cutoff weight w.

    sqrt(w) * log2(z_dim) + (1 + sqrt(w)) * h2(sqrt(w) / (1 + sqrt(w)))
    bits per symbol, where z_dim is the size of the classical key alphabet.
    """
    if not 0.0 <= w <= 1.0:
        raise ValueError("weight must be in [0, 1]")
    if z_dim < 1:
        raise ValueError("alphabet size must be at least 1")
    if w == 0.0:
        return 0.0
    s = math.sqrt(w)
    return s * math.log2(z_dim) + (1.0 + s) * binary_entropy(s / (1.0 + s))


def delta_aep(epsilon_bar: float, rank_rho_x: int, n: float) -> float:
    """Asymptotic-equipartition correction in bits per symbol.

    2 * log2(rank + 3) * sqrt(log2(2/eps) / n) with rank the rank of the
    sender's reduced state (4 for the quaternary constellation).  n is the
    number of key-generation rounds and may exceed the integer range.
    """
    if n <= 0:
        raise ValueError("round count must be positive")
    if not 0.0 < epsilon_bar < 1.0:
        raise ValueError("epsilon_bar must be in (0, 1)")
    if rank_rho_x < 1:
        raise ValueError("rank must be at least 1")
    return 2.0 * math.log2(rank_rho_x + 3) * math.sqrt(math.log2(2.0 / epsilon_bar) / n)


def _as_fraction(value) -> Fraction:
    # str() round-trips decimal literals exactly ("7e-11" -> 7/10^11),
    # which is what budget files mean; raw floats fall back to their
    # binary expansion.
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(str(value))


@dataclass(frozen=True)
class EpsilonBudget:
    """Failure-probability budget of the composable security statement.

    All entries are exact rationals.  The protocol is epsilon_total-secure
    with epsilon_total = eps_EC + max(eps_PA/2 + eps_bar, eps_ET + eps_AT).
    """

    epsilon_ET: Fraction
    epsilon_AT: Fraction
    epsilon_bar: Fraction
    epsilon_EC: Fraction
    epsilon_PA: Fraction

    def __post_init__(self):
        for name in ("epsilon_ET", "epsilon_AT", "epsilon_bar", "epsilon_EC", "epsilon_PA"):
            val = _as_fraction(getattr(self, name))
            if not 0 < val < 1:
                raise ValueError(f"{name} must be in (0, 1)")
            object.__setattr__(self, name, val)

    @classmethod
    def default(cls) -> "EpsilonBudget":
        """The deployed budget: (1, 7, 7, 2, 1)/10 * 1e-10."""
        unit = Fraction(1, 10**10)
        return cls(
            epsilon_ET=Fraction(1, 10) * unit,
            epsilon_AT=Fraction(7, 10) * unit,
            epsilon_bar=Fraction(7, 10) * unit,
            epsilon_EC=Fraction(2, 10) * unit,
            epsilon_PA=Fraction(1, 10) * unit,
        )

    def total(self) -> Fraction:
        """Composable security parameter of the protocol."""
        return self.epsilon_EC + max(
            Fraction(1, 2) * self.epsilon_PA + self.epsilon_bar,
            self.epsilon_ET + self.epsilon_AT,
        )

    def secrecy(self, epsilon_PA_impl: Fraction | None = None) -> Fraction:
        """Secrecy parameter; pass the implemented eps_PA when the hash
        subtracts more than the budget requires."""
        eps_pa = self.epsilon_PA if epsilon_PA_impl is None else _as_fraction(epsilon_PA_impl)
        return max(
            Fraction(1, 2) * eps_pa + self.epsilon_bar,
            self.epsilon_ET + self.epsilon_AT,
        )

    def min_pa_bits(self) -> float:
        """Smallest subtraction 2*log2(1/eps_PA) the budget requires."""
        return 2.0 * math.log2(1.0 / float(self.epsilon_PA))

    def to_json(self) -> dict:
        return {
            "epsilon_ET": str(self.epsilon_ET),
            "epsilon_AT": str(self.epsilon_AT),
            "epsilon_bar": str(self.epsilon_bar),
            "epsilon_EC": str(self.epsilon_EC),
            "epsilon_PA": str(self.epsilon_PA),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "EpsilonBudget":
        return cls(**{k: _as_fraction(obj[k]) for k in (
            "epsilon_ET", "epsilon_AT", "epsilon_bar", "epsilon_EC", "epsilon_PA")})

    def as_floats(self) -> dict:
        return {k: float(v) for k, v in (
            ("epsilon_ET", self.epsilon_ET),
            ("epsilon_AT", self.epsilon_AT),
            ("epsilon_bar", self.epsilon_bar),
            ("epsilon_EC", self.epsilon_EC),
            ("epsilon_PA", self.epsilon_PA),
        )}


def epsilon_pa_implemented(pa_bits: int = 100) -> Fraction:
    """eps_PA actually achieved by subtracting pa_bits: 2^(-pa_bits/2)."""
    if pa_bits < 2 or pa_bits % 2:
        raise ValueError("subtraction must be a positive even bit count")
    return Fraction(1, 2 ** (pa_bits // 2))


def epsilon_correct(raw_bits: int, disclosed_bits: int, t: int = 128) -> Fraction:
    """Correctness failure probability (m/t) * 2^-t of the t-bit
    confirmation hash, m = retained bits entering confirmation."""
    if t <= 0:
        raise ValueError("hash size must be positive")
    m = raw_bits - disclosed_bits
    if m < 0:
        raise ValueError("disclosed bits exceed raw bits")
    return Fraction(m, t) * Fraction(1, 2**t)


def epsilon_auth(transcript_bits: int, tag_bits: int = 96) -> Fraction:
    """Authentication failure probability (c/a) * 2^-a for a transcript of
    c bits hashed to an a-bit tag."""
    if tag_bits <= 0:
        raise ValueError("tag size must be positive")
    if transcript_bits < 0:
        raise ValueError("transcript size must be nonnegative")
    return Fraction(transcript_bits, tag_bits) * Fraction(1, 2**tag_bits)


EPSILON_Q = Fraction(1, 2**100)


@dataclass(frozen=True)
class EpsilonLedger:
    """Implemented security parameters of a finished session."""

    epsilon_cor: Fraction
    epsilon_sec: Fraction
    epsilon_auth: Fraction
    epsilon_q: Fraction
    epsilon_total: Fraction

    @property
    def epsilon_implemented(self) -> Fraction:
        return self.epsilon_q + self.epsilon_sec + self.epsilon_cor

    def to_json(self) -> dict:
        return {
            "epsilon_cor": float(self.epsilon_cor),
            "epsilon_sec": float(self.epsilon_sec),
            "epsilon_auth": float(self.epsilon_auth),
            "epsilon_q": float(self.epsilon_q),
            "epsilon_total": float(self.epsilon_total),
            "epsilon_implemented": float(self.epsilon_implemented),
        }


def epsilon_ledger(
    budget: EpsilonBudget,
    raw_bits: int,
    disclosed_bits: int,
    transcript_bits: int,
    pa_bits: int = 100,
    t: int = 128,
    tag_bits: int = 96,
    epsilon_q: Fraction = EPSILON_Q,
) -> EpsilonLedger:
    """Evaluate every composition formula for one session."""
    return EpsilonLedger(
        epsilon_cor=epsilon_correct(raw_bits, disclosed_bits, t),
        epsilon_sec=budget.secrecy(epsilon_pa_implemented(pa_bits)),
        epsilon_auth=epsilon_auth(transcript_bits, tag_bits),
        epsilon_q=epsilon_q,
        epsilon_total=budget.total(),
    )


@dataclass(frozen=True)
class KeyLengthReport:
    """Every term of the key-length evaluation.

    entropy_lb, delta_aep, delta_w are bits per retained symbol; leak_ec
    and l are bits; n is the retained-symbol count, n_total the number of
    transmitted symbols.  rate = l / n_total.  A negative right-hand side
    clamps l to 0 and sets aborted.
    """

    entropy_lb: float
    delta_aep: float
    delta_w: float
    leak_ec: int
    n: float
    n_total: float
    pa_bits: int
    budget: EpsilonBudget
    l: int
    rate: float
    aborted: bool
    solver: dict | None = None
    l_raw: int = 0  # floor of the RHS before the zero clamp; negative on abort

    @property
    def per_symbol_rate(self) -> float:
        """Per-symbol form: (n/N)(h - d_aep - d_w - leak_EC/n) - pa/N."""
        return (self.n / self.n_total) * (
            self.entropy_lb - self.delta_aep - self.delta_w - self.leak_ec / self.n
        ) - self.pa_bits / self.n_total

    def to_json(self) -> dict:
        out = {
            "entropy_lb": self.entropy_lb,
            "delta_aep": self.delta_aep,
            "delta_w": self.delta_w,
            "leak_ec": self.leak_ec,
            "n": self.n,
            "n_total": self.n_total,
            "pa_bits": self.pa_bits,
            "budget": self.budget.to_json(),
            "l": self.l,
            "l_raw": self.l_raw,
            "rate": self.rate,
            "aborted": self.aborted,
        }
        if self.solver is not None:
            out["solver"] = self.solver
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "KeyLengthReport":
        return cls(
            entropy_lb=float(obj["entropy_lb"]),
            delta_aep=float(obj["delta_aep"]),
            delta_w=float(obj["delta_w"]),
            leak_ec=int(obj["leak_ec"]),
            n=float(obj["n"]),
            n_total=float(obj["n_total"]),
            pa_bits=int(obj["pa_bits"]),
            budget=EpsilonBudget.from_json(obj["budget"]),
            l=int(obj["l"]),
            rate=float(obj["rate"]),
            aborted=bool(obj["aborted"]),
            solver=obj.get("solver"),
            l_raw=int(obj.get("l_raw", obj["l"])),
        )


def key_length(
    entropy_lb: float,
    delta_aep_bits: float,
    delta_w_bits: float,
    leak_ec: int,
    budget: EpsilonBudget,
    n: float,
    n_total: float,
    pa_bits: int = 100,
    solver: dict | None = None,
) -> KeyLengthReport:
    """Evaluate the leftover-hashing key length.

    l = floor(n * (entropy_lb - delta_aep_bits - delta_w_bits) - leak_ec
    - pa_bits), clamped at zero with the abort flag set when negative.
    The subtraction pa_bits must dominate the budget's 2*log2(1/eps_PA)
    for the stated budget to hold; callers check min_pa_bits().
    """
    if n <= 0 or n_total <= 0 or n > n_total:
        raise ValueError("need 0 < retained count <= total count")
    for name, val in (("entropy_lb", entropy_lb), ("delta_aep", delta_aep_bits),
                      ("delta_w", delta_w_bits)):
        if not math.isfinite(val):
            raise ValueError(f"{name} must be finite")
    if leak_ec < 0:
        raise ValueError("leakage must be nonnegative")
    rhs = n * (entropy_lb - delta_aep_bits - delta_w_bits) - leak_ec - pa_bits
    l_raw = math.floor(rhs)
    aborted = l_raw < 0
    l = 0 if aborted else l_raw
    return KeyLengthReport(
        entropy_lb=entropy_lb,
        delta_aep=delta_aep_bits,
        delta_w=delta_w_bits,
        leak_ec=leak_ec,
        n=n,
        n_total=n_total,
        pa_bits=pa_bits,
        budget=budget,
        l=l,
        rate=l / n_total,
        aborted=aborted,
        solver=solver,
        l_raw=l_raw,
    )
