"""
Six-state and BB84 session engine.

Per pulse: Alice prepares a state, the channel optionally perturbs it, an
intercept-resend Eve optionally measures and resends it, and Bob measures
in his own random basis. Every pulse owns a fixed slot of eight draws in
the session's random stream, in this order:

    0 alice bit, 1 alice basis, 2 noise flip, 3 noise replacement state,
    4 eve basis, 5 eve Born draw, 6 bob basis, 7 bob Born draw

so a record depends only on (seed, pulse index) and never on how the
session is split across workers.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .config import DEFAULT_PULSES, DEFAULT_SEED, LOG_FORMAT
from .errors import ConfigurationError, NoDataError
from .polarization import (
    BASIS_ORDER,
    STATE_ORDER,
    STATE_TABLE,
    Basis,
    JonesVector,
    PolState,
    apply,
    apply_rows,
    basis_of,
    born_probabilities,
    measure_in_basis,
    rotator_matrix,
    state_name,
    state_of,
)
from .rng import RandomStream

logger = logging.getLogger(__name__)

# Stream index used when a recorded dataset is reprocessed with an emulated Eve.
REPROCESS_STREAM = 1
CHUNK_PULSES = 16384


class ProtocolKind(Enum):
    SIX_STATE = "six-state"
    BB84 = "bb84"

    @property
    def bases(self) -> Tuple[Basis, ...]:
        if self is ProtocolKind.BB84:
            return (Basis.HV, Basis.DA)
        return BASIS_ORDER

    def __str__(self):
        return self.value


class AttackModel(Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept-resend"

    def __str__(self):
        return self.value


class Detector(Enum):
    """PBS output ports; PD0 reports bit 0."""

    PD0 = "PD0"
    PD1 = "PD1"

    @classmethod
    def for_bit(cls, bit: int) -> "Detector":
        return cls.PD0 if bit == 0 else cls.PD1


@dataclass(frozen=True)
class NoiseModel:
    """
    Lumped channel noise applied once, before Eve (or Bob).

    Args:
        flip_prob: Probability the state is replaced by one of the six states
            drawn uniformly
        misalign_deg: Extra HWP-equivalent rotation applied to pulses that
            were not replaced
    """

    flip_prob: float = 0.0
    misalign_deg: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.flip_prob <= 1.0):
            raise ConfigurationError(f"flip_prob {self.flip_prob} not in [0, 1]")
        if not math.isfinite(self.misalign_deg):
            raise ConfigurationError(f"misalign_deg {self.misalign_deg} is not finite")

    @property
    def is_ideal(self) -> bool:
        return self.flip_prob == 0.0 and self.misalign_deg == 0.0


@dataclass(frozen=True)
class SessionConfig:
    n_pulses: int = DEFAULT_PULSES
    seed: int = DEFAULT_SEED
    protocol: ProtocolKind = ProtocolKind.SIX_STATE
    attack: AttackModel = AttackModel.NONE
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        if isinstance(self.n_pulses, bool) or not isinstance(self.n_pulses, int) or self.n_pulses < 1:
            raise ConfigurationError(f"n_pulses must be a positive integer, got {self.n_pulses!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError(f"seed {self.seed} is not a 64-bit unsigned integer")

    def to_dict(self) -> Dict[str, object]:
        return {
            "n_pulses": self.n_pulses,
            "seed": self.seed,
            "protocol": self.protocol.value,
            "attack": self.attack.value,
            "flip_prob": self.noise.flip_prob,
            "misalign_deg": self.noise.misalign_deg,
        }


@dataclass(frozen=True)
class PulseRecord:
    """One transmission event as both parties (and Eve) logged it."""

    index: int
    alice_bit: int
    alice_basis: Basis
    alice_state: PolState
    eve_basis: Optional[Basis]
    eve_bit: Optional[int]
    bob_basis: Basis
    bob_bit: int
    detector: Detector

    def __post_init__(self):
        if self.index < 0:
            raise ValueError(f"negative pulse index {self.index}")
        if self.alice_state is not state_name(self.alice_basis, self.alice_bit):
            raise ValueError(
                f"pulse {self.index}: state {self.alice_state} does not encode bit "
                f"{self.alice_bit} in basis {self.alice_basis}"
            )
        if (self.eve_basis is None) != (self.eve_bit is None):
            raise ValueError(f"pulse {self.index}: eve_basis and eve_bit must be set together")
        if self.eve_bit not in (None, 0, 1) or self.bob_bit not in (0, 1):
            raise ValueError(f"pulse {self.index}: bits must be 0 or 1")
        if self.detector is not Detector.for_bit(self.bob_bit):
            raise ValueError(f"pulse {self.index}: detector {self.detector} disagrees with bit {self.bob_bit}")

    @property
    def sifted(self) -> bool:
        return self.alice_basis is self.bob_basis


@dataclass(frozen=True)
class SiftSummary:
    """Counts and fractions after basis comparison.

    ``qber`` is None when nothing survived sifting.
    """

    n_total: int
    n_sifted: int
    n_errors_sifted: int
    n_undisturbed: int
    n_compromised: int
    sift_fraction: float
    qber: Optional[float]
    undisturbed_fraction: float
    compromised_fraction: float

    @classmethod
    def from_counts(cls, n_total: int, n_sifted: int, n_errors_sifted: int, n_compromised: int) -> "SiftSummary":
        if n_total <= 0:
            raise NoDataError("cannot summarize an empty session")
        n_undisturbed = n_sifted - n_errors_sifted
        return cls(
            n_total=n_total,
            n_sifted=n_sifted,
            n_errors_sifted=n_errors_sifted,
            n_undisturbed=n_undisturbed,
            n_compromised=n_compromised,
            sift_fraction=n_sifted / n_total,
            qber=(n_errors_sifted / n_sifted) if n_sifted else None,
            undisturbed_fraction=n_undisturbed / n_total,
            compromised_fraction=n_compromised / n_total,
        )

    @property
    def errors_fraction(self) -> float:
        """Sifted-and-wrong events over all pulses."""
        return self.n_errors_sifted / self.n_total

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(frozen=True)
class ExpectedFractions:
    sift_fraction: Fraction
    undisturbed_fraction: Fraction
    compromised_fraction: Fraction
    qber: Fraction

    def as_floats(self) -> Dict[str, float]:
        return {name: float(value) for name, value in asdict(self).items()}


class Preparation(NamedTuple):
    bit: int
    basis: Basis
    state: JonesVector
    state_name: PolState


class Interception(NamedTuple):
    eve_basis: Basis
    eve_bit: int
    resent: JonesVector


class BobResult(NamedTuple):
    basis: Basis
    bit: int
    detector: Detector


# --- per-pulse operations ---

def alice_prepare(protocol: ProtocolKind, rng: RandomStream) -> Preparation:
    """Uniform bit and basis; two draws."""
    bit = rng.choice_index(2)
    bases = protocol.bases
    basis = bases[rng.choice_index(len(bases))]
    name = state_name(basis, bit)
    return Preparation(bit, basis, state_of(name), name)


def channel_apply(state: JonesVector, noise: NoiseModel, rng: RandomStream) -> JonesVector:
    """Lumped channel noise; always consumes two draws."""
    u_flip, u_choice = rng.uniforms(2)
    if u_flip < noise.flip_prob:
        return state_of(STATE_ORDER[min(int(u_choice * 6), 5)])
    if noise.misalign_deg != 0.0:
        return apply(rotator_matrix(noise.misalign_deg), state)
    return state


def eve_intercept_resend(
    state: JonesVector,
    rng: RandomStream,
    protocol: ProtocolKind = ProtocolKind.SIX_STATE,
) -> Interception:
    """
    Measure in a random basis and resend the observed eigenstate.

    Eve picks among the bases of ``protocol`` (all three for the six-state
    protocol). Consumes two draws.
    """
    bases = protocol.bases
    basis = bases[rng.choice_index(len(bases))]
    bit, resent = measure_in_basis(state, basis, rng)
    return Interception(basis, bit, resent)


def bob_measure(state: JonesVector, protocol: ProtocolKind, rng: RandomStream) -> BobResult:
    bases = protocol.bases
    basis = bases[rng.choice_index(len(bases))]
    bit, _ = measure_in_basis(state, basis, rng)
    return BobResult(basis, bit, Detector.for_bit(bit))


def run_pulse(config: SessionConfig, index: int) -> PulseRecord:
    """Scalar reference pipeline for one pulse of ``config``."""
    rng = RandomStream(config.seed).pulse(index)
    prep = alice_prepare(config.protocol, rng)
    state = channel_apply(prep.state, config.noise, rng)
    eve_basis, eve_bit = None, None
    if config.attack is AttackModel.INTERCEPT_RESEND:
        eve_basis, eve_bit, state = eve_intercept_resend(state, rng, config.protocol)
    else:
        rng.skip(2)
    bob = bob_measure(state, config.protocol, rng)
    return PulseRecord(
        index=index,
        alice_bit=prep.bit,
        alice_basis=prep.basis,
        alice_state=prep.state_name,
        eve_basis=eve_basis,
        eve_bit=eve_bit,
        bob_basis=bob.basis,
        bob_bit=bob.bit,
        detector=bob.detector,
    )


# --- vectorized session kernel ---

def _pick(u: np.ndarray, k: int) -> np.ndarray:
    return np.minimum((u * k).astype(np.int64), k - 1)


@dataclass
class SessionArrays:
    """A session as numpy columns. Basis/state columns hold indices into
    BASIS_ORDER/STATE_ORDER; Eve's columns are -1 when there is no Eve."""

    config: SessionConfig
    index: np.ndarray
    alice_bit: np.ndarray
    alice_basis: np.ndarray
    alice_state: np.ndarray
    eve_basis: np.ndarray
    eve_bit: np.ndarray
    bob_basis: np.ndarray
    bob_bit: np.ndarray

    @classmethod
    def concatenate(cls, config: SessionConfig, parts: Sequence[Dict[str, np.ndarray]]) -> "SessionArrays":
        columns = {name: np.concatenate([p[name] for p in parts]) for name in parts[0]}
        return cls(config=config, **columns)

    def __len__(self) -> int:
        return len(self.index)

    def records(self) -> List[PulseRecord]:
        has_eve = self.config.attack is AttackModel.INTERCEPT_RESEND
        out = []
        for i, ab, abas, ast, eb, ebit, bb, bbit in zip(
            self.index.tolist(),
            self.alice_bit.tolist(),
            self.alice_basis.tolist(),
            self.alice_state.tolist(),
            self.eve_basis.tolist(),
            self.eve_bit.tolist(),
            self.bob_basis.tolist(),
            self.bob_bit.tolist(),
        ):
            out.append(
                PulseRecord(
                    index=i,
                    alice_bit=ab,
                    alice_basis=BASIS_ORDER[abas],
                    alice_state=STATE_ORDER[ast],
                    eve_basis=BASIS_ORDER[eb] if has_eve else None,
                    eve_bit=ebit if has_eve else None,
                    bob_basis=BASIS_ORDER[bb],
                    bob_bit=bbit,
                    detector=Detector.for_bit(bbit),
                )
            )
        return out


def _simulate_range(config: SessionConfig, start: int, stop: int) -> Dict[str, np.ndarray]:
    u = RandomStream(config.seed).pulse_block(start, stop)
    n = stop - start
    k = len(config.protocol.bases)

    alice_bit = _pick(u[:, 0], 2)
    alice_basis = _pick(u[:, 1], k)
    alice_state = 2 * alice_basis + alice_bit
    psi = STATE_TABLE[alice_state]

    noise = config.noise
    flipped = u[:, 2] < noise.flip_prob
    if flipped.any():
        psi[flipped] = STATE_TABLE[_pick(u[flipped, 3], 6)]
    if noise.misalign_deg != 0.0:
        kept = ~flipped
        psi[kept] = apply_rows(rotator_matrix(noise.misalign_deg).m, psi[kept])

    eve_basis = np.full(n, -1, dtype=np.int64)
    eve_bit = np.full(n, -1, dtype=np.int64)
    if config.attack is AttackModel.INTERCEPT_RESEND:
        eve_basis = _pick(u[:, 4], k)
        p0 = born_probabilities(psi, STATE_TABLE[2 * eve_basis])
        eve_bit = np.where(u[:, 5] < p0, 0, 1)
        psi = STATE_TABLE[2 * eve_basis + eve_bit]

    bob_basis = _pick(u[:, 6], k)
    p0 = born_probabilities(psi, STATE_TABLE[2 * bob_basis])
    bob_bit = np.where(u[:, 7] < p0, 0, 1)

    return {
        "index": np.arange(start, stop, dtype=np.int64),
        "alice_bit": alice_bit,
        "alice_basis": alice_basis,
        "alice_state": alice_state,
        "eve_basis": eve_basis,
        "eve_bit": eve_bit,
        "bob_basis": bob_basis,
        "bob_bit": bob_bit.astype(np.int64),
    }


class SessionRunner:
    """
    Runs sessions, optionally split across worker threads.

    Thread count never changes a result: every pulse reads its own slot of
    the session stream.
    """

    def __init__(
        self,
        workers: int = 1,
        log_file: Optional[str] = None,
        progress: bool = False,
        chunk_pulses: int = CHUNK_PULSES,
    ):
        """
        Args:
            workers: Number of worker threads
            log_file: Optional file to log session results
            progress: Show a progress bar on stderr
            chunk_pulses: Pulses per unit of work
        """
        if workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {workers}")
        if chunk_pulses < 1:
            raise ConfigurationError(f"chunk_pulses must be >= 1, got {chunk_pulses}")
        self.workers = workers
        self.progress = progress
        self.chunk_pulses = chunk_pulses

        self.logger = logging.getLogger(__name__)
        self._handler: Optional[logging.FileHandler] = None
        if log_file:
            path = os.path.abspath(log_file)
            attached = any(
                isinstance(h, logging.FileHandler) and h.baseFilename == path for h in self.logger.handlers
            )
            if not attached:
                self._handler = logging.FileHandler(path)
                self._handler.setFormatter(logging.Formatter(LOG_FORMAT))
                self.logger.addHandler(self._handler)

    def close(self) -> None:
        """Detach and close the log file handler this runner opened."""
        if self._handler is not None:
            self.logger.removeHandler(self._handler)
            self._handler.close()
            self._handler = None

    def __enter__(self) -> "SessionRunner":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def run_arrays(self, config: SessionConfig) -> SessionArrays:
        n = config.n_pulses
        bounds = [(s, min(s + self.chunk_pulses, n)) for s in range(0, n, self.chunk_pulses)]
        bar = tqdm(total=n, desc="Pulses", unit="pulse", disable=not self.progress)

        def work(span: Tuple[int, int]) -> Dict[str, np.ndarray]:
            part = _simulate_range(config, *span)
            bar.update(span[1] - span[0])
            return part

        try:
            if self.workers == 1 or len(bounds) == 1:
                parts = [work(span) for span in bounds]
            else:
                with ThreadPoolExecutor(max_workers=self.workers) as pool:
                    parts = list(pool.map(work, bounds))
        finally:
            bar.close()

        arrays = SessionArrays.concatenate(config, parts)
        self.logger.info(
            f"Session seed={config.seed} protocol={config.protocol} attack={config.attack} "
            f"pulses={n} workers={self.workers}"
        )
        return arrays

    def run(self, config: SessionConfig) -> List[PulseRecord]:
        records = self.run_arrays(config).records()
        if self.logger.isEnabledFor(logging.INFO):
            summary = sift(records)
            self.logger.info(
                f"Sifted {summary.n_sifted}/{summary.n_total} "
                f"(fraction={summary.sift_fraction:.4f}, qber={summary.qber})"
            )
        return records

    def batch_run(self, configs: Iterable[SessionConfig]) -> List[List[PulseRecord]]:
        """Run several sessions in order."""
        return [self.run(config) for config in configs]


def run_session(config: SessionConfig, workers: int = 1) -> List[PulseRecord]:
    """Exactly ``config.n_pulses`` records, bit-identical for identical configs."""
    return SessionRunner(workers=workers).run(config)


def session_arrays(config: SessionConfig, workers: int = 1) -> SessionArrays:
    return SessionRunner(workers=workers).run_arrays(config)


# --- sifting ---

def sift(records: Sequence[PulseRecord]) -> SiftSummary:
    """Compare bases and count sifted, erroneous and compromised events.

    Raises:
        NoDataError: If ``records`` is empty
    """
    if not records:
        raise NoDataError("no pulse records to sift")
    n_sifted = n_errors = n_compromised = 0
    for r in records:
        if r.alice_basis is r.bob_basis:
            n_sifted += 1
            if r.alice_bit != r.bob_bit:
                n_errors += 1
            if r.eve_basis is r.alice_basis:
                n_compromised += 1
    return SiftSummary.from_counts(len(records), n_sifted, n_errors, n_compromised)


def sift_arrays(arrays: SessionArrays) -> SiftSummary:
    """``sift`` over numpy columns."""
    if len(arrays) == 0:
        raise NoDataError("no pulse records to sift")
    sifted = arrays.alice_basis == arrays.bob_basis
    errors = sifted & (arrays.alice_bit != arrays.bob_bit)
    compromised = sifted & (arrays.eve_basis == arrays.alice_basis)
    return SiftSummary.from_counts(
        len(arrays), int(sifted.sum()), int(errors.sum()), int(compromised.sum())
    )


def merge_summaries(parts: Iterable[SiftSummary]) -> SiftSummary:
    """Combine summaries of disjoint record sets; order does not matter."""
    parts = list(parts)
    if not parts:
        raise NoDataError("no summaries to merge")
    return SiftSummary.from_counts(
        sum(p.n_total for p in parts),
        sum(p.n_sifted for p in parts),
        sum(p.n_errors_sifted for p in parts),
        sum(p.n_compromised for p in parts),
    )


# --- analytic benchmarks ---

_THEORY = {
    (ProtocolKind.SIX_STATE, AttackModel.NONE): (Fraction(1, 3), Fraction(1, 3), Fraction(0), Fraction(0)),
    (ProtocolKind.SIX_STATE, AttackModel.INTERCEPT_RESEND): (
        Fraction(1, 3),
        Fraction(2, 9),
        Fraction(1, 9),
        Fraction(1, 3),
    ),
    (ProtocolKind.BB84, AttackModel.NONE): (Fraction(1, 2), Fraction(1, 2), Fraction(0), Fraction(0)),
    (ProtocolKind.BB84, AttackModel.INTERCEPT_RESEND): (
        Fraction(1, 2),
        Fraction(3, 8),
        Fraction(1, 4),
        Fraction(1, 4),
    ),
}


def theoretical_benchmarks(protocol: ProtocolKind, attack: AttackModel) -> ExpectedFractions:
    """Expected fractions for an ideal channel."""
    return ExpectedFractions(*_THEORY[(protocol, attack)])


def _exact_born(psi: PolState, outcome: PolState) -> Fraction:
    if basis_of(psi) is not basis_of(outcome):
        return Fraction(1, 2)
    return Fraction(1) if psi is outcome else Fraction(0)


def exact_benchmarks(protocol: ProtocolKind, attack: AttackModel) -> ExpectedFractions:
    """
    Expected fractions by enumerating every discrete choice with exact
    rational weights: Alice's basis and bit, Eve's basis and outcome, Bob's
    basis and outcome.
    """
    bases = protocol.bases
    p_basis = Fraction(1, len(bases))
    eve_bases = bases if attack is AttackModel.INTERCEPT_RESEND else (None,)
    p_eve_basis = Fraction(1, len(eve_bases))

    sifted = errors = compromised = Fraction(0)
    for a_basis in bases:
        for a_bit in (0, 1):
            sent = state_name(a_basis, a_bit)
            w_alice = p_basis * Fraction(1, 2)
            for e_basis in eve_bases:
                if e_basis is None:
                    branches = [(Fraction(1), sent)]
                else:
                    branches = [
                        (p_eve_basis * _exact_born(sent, state_name(e_basis, e_bit)), state_name(e_basis, e_bit))
                        for e_bit in (0, 1)
                    ]
                for w_eve, arriving in branches:
                    for b_basis in bases:
                        if b_basis is not a_basis:
                            continue
                        w = w_alice * w_eve * p_basis
                        sifted += w
                        errors += w * _exact_born(arriving, state_name(b_basis, 1 - a_bit))
                        if e_basis is a_basis:
                            compromised += w
    return ExpectedFractions(
        sift_fraction=sifted,
        undisturbed_fraction=sifted - errors,
        compromised_fraction=compromised,
        qber=errors / sifted,
    )


# --- dataset reprocessing ---

def reprocess_with_eve(
    records: Sequence[PulseRecord],
    seed: int,
    protocol: ProtocolKind = ProtocolKind.SIX_STATE,
) -> List[PulseRecord]:
    """
    Emulate an intercept-resend Eve on a recorded no-Eve dataset.

    Each pulse gets an independent Eve basis; Eve measures Alice's recorded
    state and Bob's outcome is re-sampled in his recorded basis from the
    state Eve resends. Draws come from stream ``REPROCESS_STREAM`` at the
    pulse's own index (slot 4 eve basis, 5 eve Born draw, 7 bob Born draw).

    Raises:
        NoDataError: If ``records`` is empty
    """
    if not records:
        raise NoDataError("no pulse records to reprocess")
    u = RandomStream(seed, REPROCESS_STREAM).pulse_rows([r.index for r in records])

    bases = protocol.bases
    sent = np.array([STATE_ORDER.index(r.alice_state) for r in records], dtype=np.int64)
    bob_basis = np.array([BASIS_ORDER.index(r.bob_basis) for r in records], dtype=np.int64)

    eve_basis = np.array([BASIS_ORDER.index(b) for b in bases], dtype=np.int64)[_pick(u[:, 4], len(bases))]
    p0 = born_probabilities(STATE_TABLE[sent], STATE_TABLE[2 * eve_basis])
    eve_bit = np.where(u[:, 5] < p0, 0, 1)
    resent = STATE_TABLE[2 * eve_basis + eve_bit]
    p0 = born_probabilities(resent, STATE_TABLE[2 * bob_basis])
    bob_bit = np.where(u[:, 7] < p0, 0, 1)

    out = []
    for r, eb, ebit, bbit in zip(records, eve_basis.tolist(), eve_bit.tolist(), bob_bit.tolist()):
        out.append(
            PulseRecord(
                index=r.index,
                alice_bit=r.alice_bit,
                alice_basis=r.alice_basis,
                alice_state=r.alice_state,
                eve_basis=BASIS_ORDER[eb],
                eve_bit=ebit,
                bob_basis=r.bob_basis,
                bob_bit=bbit,
                detector=Detector.for_bit(bbit),
            )
        )
    logger.info(f"Reprocessed {len(out)} pulses with an emulated intercept-resend Eve (seed={seed})")
    return out
