"""Run configuration: schema-validated JSON profiles for the whole stack.

A ProtocolConfig carries everything a run needs: state preparation, frame
layout, channel and detector models, test parameters, the epsilon budget,
error-correction code choice, and seeds.  Two standard profiles ship with
the package:

desk   1e6 symbols on a short bench channel (T = 0.80) at the 0.754
       working point.  Key-rate solves run in "characterized" mode: the
       moment constraints are pinned to the declared observable means
       instead of being widened by the statistical acceptance-test term
       mu, which at 7.84e4 test rounds would be ~0.3 SNU against
       observables of ~1e-3 and leave the optimization unconstrained.
       This mirrors the deployed practice of computing key rates offline
       from the characterization campaign; a desk run therefore
       demonstrates the pipeline at a design key rate rather than making
       a standalone composable claim at N = 1e6.
paper  the 1.2e9-symbol campaign shape (statistics enter via fixtures,
       not simulation); "composable" mode with the full mu widening.

Epsilon entries are exact fractions serialized as strings.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import jsonschema

from .accounting import EpsilonBudget
from .channel import ChannelModel, DetectorModel
from .constellation import QpskConstellation, qpsk_constellation
from .pulse import FrameLayout
from .security_tests import EnergyTestParams

_FRACTION = {"type": "string", "pattern": r"^[0-9]+(/[0-9]+)?$"}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": [
        "profile", "amplitude", "phase_offset", "n_signal", "r_test",
        "T", "xi_A", "eta", "nu_el", "bound_m", "keymap_radius",
        "beta_test", "n_c", "w", "i_t_threshold", "epsilons",
        "epsilon_total", "keyrate_mode", "ecc_id", "seed_simulation",
        "seed_session", "auth_secret_hex",
    ],
    "properties": {
        "profile": {"type": "string", "minLength": 1},
        "amplitude": {"type": "number", "exclusiveMinimum": 0},
        "phase_offset": {"type": "number"},
        "n_signal": {"type": "integer", "minimum": 4},
        "r_test": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "n_reference": {"type": "integer", "minimum": 0},
        "n_guard": {"type": "integer", "minimum": 0},
        "n_frame_signal": {"type": "integer", "minimum": 1},
        "n_vacuum": {"type": "integer", "minimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "xi_A": {"type": "number", "minimum": 0},
        "eta": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "nu_el": {"type": "number", "minimum": 0},
        "bound_m": {"type": "number", "exclusiveMinimum": 0},
        "keymap_radius": {"type": "number", "minimum": 0},
        "beta_test": {"type": "number", "exclusiveMinimum": 0},
        "n_c": {"type": "integer", "minimum": 1},
        "w": {"type": "number", "minimum": 0, "maximum": 1},
        "i_t_threshold": {"type": "number", "minimum": 0},
        "epsilons": {
            "type": "object",
            "additionalProperties": False,
            "required": ["epsilon_ET", "epsilon_AT", "epsilon_bar",
                         "epsilon_EC", "epsilon_PA"],
            "properties": {k: _FRACTION for k in (
                "epsilon_ET", "epsilon_AT", "epsilon_bar",
                "epsilon_EC", "epsilon_PA")},
        },
        "epsilon_total": _FRACTION,
        "keyrate_mode": {"enum": ["composable", "characterized"]},
        "fw_tol": {"type": "number", "exclusiveMinimum": 0},
        "fw_max_iter": {"type": "integer", "minimum": 1},
        "ecc_id": {"type": "string"},
        "t_confirm": {"type": "integer", "minimum": 8},
        "pa_bits": {"type": "integer", "minimum": 1},
        "max_decode_iter": {"type": "integer", "minimum": 1},
        "seed_simulation": {"type": "integer", "minimum": 0},
        "seed_session": {"type": "integer", "minimum": 0},
        "auth_secret_hex": {"type": "string", "pattern": "^[0-9a-fA-F]{48,}$"},
    },
}

_BUDGET_KEYS = ("epsilon_ET", "epsilon_AT", "epsilon_bar",
                "epsilon_EC", "epsilon_PA")


@dataclass(frozen=True)
class ProtocolConfig:
    """One run's complete parameter set.  Frozen; derive with `replace`."""

    profile: str = "desk"
    # state preparation
    amplitude: float = 0.7540
    phase_offset: float = math.pi / 4
    # counts and frame layout
    n_signal: int = 1_000_000
    r_test: float = 0.0784
    n_reference: int = 20
    n_guard: int = 480
    n_frame_signal: int = 1000
    n_vacuum: int = 1000
    # channel and detector
    T: float = 0.80
    xi_A: float = 2.71e-3
    eta: float = 0.720
    nu_el: float = 0.135
    bound_m: float = 8.0
    # key map
    keymap_radius: float = 0.0
    # energy and acceptance tests
    beta_test: float = 5.0
    n_c: int = 10
    w: float = 1e-7
    i_t_threshold: float = 1e-8
    # failure-probability budget, exact fractions as strings
    epsilons: dict = field(default_factory=lambda: {
        "epsilon_ET": "1/100000000000",
        "epsilon_AT": "7/100000000000",
        "epsilon_bar": "7/100000000000",
        "epsilon_EC": "2/100000000000",
        "epsilon_PA": "1/100000000000",
    })
    epsilon_total: str = "1/10000000000"
    # key-rate engine
    keyrate_mode: str = "characterized"
    fw_tol: float = 1e-4
    fw_max_iter: int = 300
    # post-processing
    ecc_id: str = "ecc2"
    t_confirm: int = 128
    pa_bits: int = 100
    max_decode_iter: int = 400
    # determinism and authentication
    seed_simulation: int = 20260301
    seed_session: int = 20260302
    auth_secret_hex: str = bytes(range(32)).hex()

    def __post_init__(self):
        if self.n_signal % self.n_frame_signal != 0:
            raise ValueError(
                f"n_signal {self.n_signal} not divisible by the "
                f"{self.n_frame_signal}-state frame signal count")
        if self.keyrate_mode not in ("composable", "characterized"):
            raise ValueError(f"unknown keyrate mode {self.keyrate_mode!r}")
        if len(self.auth_secret_hex) < 48:
            raise ValueError("authentication secret must be at least 24 bytes")
        bytes.fromhex(self.auth_secret_hex)
        declared = Fraction(self.epsilon_total)
        composed = self.budget().total()
        if composed != declared:
            raise ValueError(
                f"epsilon budget composes to {composed}, config declares "
                f"{declared}")
        if self.keymap_radius > self.bound_m:
            raise ValueError("inner discard radius exceeds detection range")

    # ---------------------------------------------------------------- counts

    @property
    def k_test(self) -> int:
        k = int(round(self.r_test * self.n_signal))
        return k - k % 4

    @property
    def n_key(self) -> int:
        return self.n_signal - self.k_test

    # ------------------------------------------------------------ components

    def budget(self) -> EpsilonBudget:
        return EpsilonBudget(**{k: Fraction(self.epsilons[k])
                                for k in _BUDGET_KEYS})

    def constellation(self) -> QpskConstellation:
        return qpsk_constellation(self.amplitude, self.phase_offset)

    def channel_model(self) -> ChannelModel:
        return ChannelModel(T=self.T, xi_A=self.xi_A)

    def detector_model(self) -> DetectorModel:
        return DetectorModel(eta=self.eta, nu_el=self.nu_el,
                             bound_m=self.bound_m)

    def frame_layout(self) -> FrameLayout:
        return FrameLayout(n_reference=self.n_reference,
                           n_guard=self.n_guard,
                           n_signal=self.n_frame_signal,
                           n_vacuum=self.n_vacuum)

    def energy_params(self, k_T: int | None = None) -> EnergyTestParams:
        k = self.k_test if k_T is None else int(k_T)
        return EnergyTestParams.from_threshold(
            self.i_t_threshold, k, beta_test=self.beta_test, n_c=self.n_c,
            w=self.w, epsilon_ET=float(Fraction(self.epsilons["epsilon_ET"])))

    def auth_secret(self) -> bytes:
        return bytes.fromhex(self.auth_secret_hex)

    # --------------------------------------------------------- serialization

    def to_json(self) -> dict:
        out = asdict(self)
        out["epsilons"] = dict(self.epsilons)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ProtocolConfig":
        jsonschema.validate(obj, CONFIG_SCHEMA,
                            cls=jsonschema.Draft202012Validator)
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "ProtocolConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def digest(self) -> bytes:
        """Canonical 32-byte fingerprint; both peers must agree on it."""
        blob = json.dumps(self.to_json(), sort_keys=True,
                          separators=(",", ":")).encode()
        return hashlib.sha256(blob).digest()


def desk_profile(**overrides) -> ProtocolConfig:
    """Bench demo: 1e6 symbols, 9 blocks per stream, short channel."""
    return replace(ProtocolConfig(), **overrides) if overrides else ProtocolConfig()


def paper_profile(**overrides) -> ProtocolConfig:
    """Campaign-scale shape; statistics come from fixtures, not simulation."""
    base = ProtocolConfig(
        profile="paper",
        amplitude=0.7540,
        n_signal=1_198_200_000,
        r_test=0.25,
        T=0.4959,
        n_c=20,
        keyrate_mode="composable",
        ecc_id="ecc1",
    )
    return replace(base, **overrides) if overrides else base
