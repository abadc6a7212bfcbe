"""
Correlation matrices, aggregate fractions and benchmark tests.

Correlation cells use the signed-agreement metric: for the cell
(Alice's state, Bob's basis),

    100 * (N_agree - N_disagree) / n_total

where N_agree counts pulses in the cell with Bob's bit equal to Alice's. A
matched cell (state in Bob's basis) holds 100/18 % for an ideal six-state
channel and 100/54 % under intercept-resend; mismatched cells average 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import DEFAULT_Z_MAX, PROB_SUM_TOL
from .errors import NoDataError
from .polarization import BASIS_ORDER, STATE_ORDER, basis_of
from .protocol import (
    AttackModel,
    ProtocolKind,
    PulseRecord,
    SessionArrays,
    SiftSummary,
    theoretical_benchmarks,
)

logger = logging.getLogger(__name__)

# Upper 0.001 critical values of the chi-square distribution, by dof.
CHI2_CRITICAL_0001: Dict[int, float] = {
    1: 10.828,
    2: 13.816,
    3: 16.266,
    4: 18.467,
    5: 20.515,
    6: 22.458,
    7: 24.322,
    8: 26.124,
    9: 27.877,
    10: 29.588,
}

# Measured fractions of a 2363-pulse tabletop run, scored by ``lab_points``.
LAB_PULSES = 2363
LAB_SIFT_FRACTION = 0.313
LAB_COMPROMISED_FRACTION = 0.104

# matched[s, b]: Alice's state s lies in Bob's basis b.
MATCHED = np.array(
    [[basis_of(s) is b for b in BASIS_ORDER] for s in STATE_ORDER],
    dtype=bool,
)
MATCHED.setflags(write=False)


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """6x3 signed-agreement map; rows H,V,D,A,R,L and columns HV,DA,RL."""

    agree: np.ndarray
    disagree: np.ndarray
    n_total: int

    @property
    def cells(self) -> np.ndarray:
        """Cell values in percent of all pulses."""
        return 100.0 * (self.agree - self.disagree) / self.n_total

    @property
    def occupancy(self) -> np.ndarray:
        return self.agree + self.disagree

    def cell(self, state, basis) -> float:
        return float(self.cells[STATE_ORDER.index(state), BASIS_ORDER.index(basis)])

    def to_rows(self) -> List[Dict[str, object]]:
        cells = self.cells
        return [
            {"state": str(s), **{str(b): float(cells[i, j]) for j, b in enumerate(BASIS_ORDER)}}
            for i, s in enumerate(STATE_ORDER)
        ]

    def to_dict(self) -> Dict[str, object]:
        return {
            "rows": [str(s) for s in STATE_ORDER],
            "columns": [str(b) for b in BASIS_ORDER],
            "units": "percent",
            "n_total": self.n_total,
            "cells": [float(v) for v in self.cells.ravel()],
        }


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    measured: Optional[float]
    expected: float
    stderr: float
    z: Optional[float]
    passed: bool

    def to_dict(self) -> Dict[str, object]:
        z = self.z if self.z is not None and math.isfinite(self.z) else None
        return {
            "name": self.name,
            "measured": self.measured,
            "expected": self.expected,
            "stderr": self.stderr,
            "z": z,
            "pass": self.passed,
        }


@dataclass(frozen=True)
class BenchmarkReport:
    entries: Tuple[BenchmarkEntry, ...]
    z_max: float = DEFAULT_Z_MAX

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def failures(self) -> List[BenchmarkEntry]:
        return [e for e in self.entries if not e.passed]

    def entry(self, name: str) -> BenchmarkEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> Dict[str, object]:
        return {
            "z_max": self.z_max,
            "pass": self.passed,
            "entries": [e.to_dict() for e in self.entries],
        }


@dataclass(frozen=True)
class AggregateFractions:
    kept: float
    rest: float
    labels: Tuple[str, str]

    def to_dict(self) -> Dict[str, object]:
        return {"kept": self.kept, "rest": self.rest, "kept_label": self.labels[0], "rest_label": self.labels[1]}


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    # Some expected count is below 5; the chi-square approximation is shaky.
    low_expected: bool = field(default=False)

    def exceeds(self, critical: Dict[int, float] = CHI2_CRITICAL_0001) -> bool:
        return self.statistic > critical[self.dof]


# --- correlation matrices ---

def correlation_matrix(records: Union[Sequence[PulseRecord], SessionArrays]) -> CorrelationMatrix:
    """
    Signed-agreement correlation matrix.

    Raises:
        NoDataError: If there are no records
    """
    if isinstance(records, SessionArrays):
        return _correlation_matrix_arrays(records)
    if not records:
        raise NoDataError("no pulse records for a correlation matrix")
    agree = np.zeros((len(STATE_ORDER), len(BASIS_ORDER)), dtype=np.int64)
    disagree = np.zeros_like(agree)
    for r in records:
        cell = (STATE_ORDER.index(r.alice_state), BASIS_ORDER.index(r.bob_basis))
        if r.bob_bit == r.alice_bit:
            agree[cell] += 1
        else:
            disagree[cell] += 1
    return CorrelationMatrix(agree=agree, disagree=disagree, n_total=len(records))


def _correlation_matrix_arrays(arrays: SessionArrays) -> CorrelationMatrix:
    if len(arrays) == 0:
        raise NoDataError("no pulse records for a correlation matrix")
    shape = (len(STATE_ORDER), len(BASIS_ORDER))
    same = arrays.bob_bit == arrays.alice_bit
    agree = np.zeros(shape, dtype=np.int64)
    disagree = np.zeros(shape, dtype=np.int64)
    np.add.at(agree, (arrays.alice_state[same], arrays.bob_basis[same]), 1)
    np.add.at(disagree, (arrays.alice_state[~same], arrays.bob_basis[~same]), 1)
    return CorrelationMatrix(agree=agree, disagree=disagree, n_total=len(arrays))


def merge_matrices(parts: Sequence[CorrelationMatrix]) -> CorrelationMatrix:
    if not parts:
        raise NoDataError("no matrices to merge")
    return CorrelationMatrix(
        agree=sum((p.agree for p in parts), np.zeros_like(parts[0].agree)),
        disagree=sum((p.disagree for p in parts), np.zeros_like(parts[0].disagree)),
        n_total=sum(p.n_total for p in parts),
    )


def expected_cells(protocol: ProtocolKind, attack: AttackModel) -> Tuple[np.ndarray, np.ndarray]:
    """
    Expected cell values and per-pulse variances for an ideal channel.

    Returns:
        (expected, variance) as fractions of all pulses (not percent).
        A pulse adds +1 to its cell on agreement and -1 on disagreement, so
        the per-pulse variance of a cell is P_agree + P_disagree - mean^2.
    """
    k = len(protocol.bases)
    occupancy = 1.0 / (2 * k * k)
    qber = float(theoretical_benchmarks(protocol, attack).qber)
    in_protocol = np.array(
        [[basis_of(s) in protocol.bases and b in protocol.bases for b in BASIS_ORDER] for s in STATE_ORDER]
    )

    p_agree = np.where(MATCHED, occupancy * (1.0 - qber), occupancy / 2.0)
    p_disagree = np.where(MATCHED, occupancy * qber, occupancy / 2.0)
    p_agree = np.where(in_protocol, p_agree, 0.0)
    p_disagree = np.where(in_protocol, p_disagree, 0.0)

    expected = p_agree - p_disagree
    variance = p_agree + p_disagree - expected**2
    return expected, variance


# --- fractions and tests ---

def binomial_stderr(p: float, n: int) -> float:
    """sqrt(p(1-p)/n)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return math.sqrt(p * (1.0 - p) / n)


def aggregate_fractions(summary: SiftSummary, attack: AttackModel) -> AggregateFractions:
    """Stacked kept/rest split of all transmissions."""
    if attack is AttackModel.INTERCEPT_RESEND:
        kept = summary.compromised_fraction
        labels = ("undisturbed-and-compromised", "disturbed")
    else:
        kept = summary.undisturbed_fraction
        labels = ("undisturbed/sifted", "disturbed/mismatched")
    return AggregateFractions(kept=kept, rest=1.0 - kept, labels=labels)


def stacked_fractions(no_attack: SiftSummary, intercepted: SiftSummary) -> List[Dict[str, object]]:
    """Plot-ready rows for both attack settings."""
    rows = []
    for attack, summary in ((AttackModel.NONE, no_attack), (AttackModel.INTERCEPT_RESEND, intercepted)):
        rows.append({"attack": attack.value, **aggregate_fractions(summary, attack).to_dict()})
    return rows


def benchmark_entry(
    name: str,
    measured: Optional[float],
    expected: float,
    stderr: float,
    z_max: float = DEFAULT_Z_MAX,
) -> BenchmarkEntry:
    """Score one measurement; a zero stderr demands an exact match."""
    if measured is None:
        return BenchmarkEntry(name, None, expected, stderr, None, False)
    diff = measured - expected
    if stderr > 0:
        z = diff / stderr
    elif diff == 0:
        z = 0.0
    else:
        z = math.copysign(math.inf, diff)
    return BenchmarkEntry(name, measured, expected, stderr, z, abs(z) <= z_max)


def fraction_entry(name: str, measured: Optional[float], expected: float, n: int, z_max: float = DEFAULT_Z_MAX) -> BenchmarkEntry:
    stderr = binomial_stderr(expected, n) if n >= 1 else 0.0
    return benchmark_entry(name, measured, expected, stderr, z_max)


def compare_to_benchmarks(
    summary: SiftSummary,
    matrix: CorrelationMatrix,
    protocol: ProtocolKind,
    attack: AttackModel,
    z_max: float = DEFAULT_Z_MAX,
) -> BenchmarkReport:
    """
    Score a session against the analytic benchmarks.

    One entry per fraction (sift, undisturbed, compromised, qber) and one per
    matrix cell. The qber stderr uses the sifted count; the others use all
    pulses.

    Raises:
        ValueError: If summary and matrix cover different pulse counts
    """
    if summary.n_total != matrix.n_total:
        raise ValueError(f"summary covers {summary.n_total} pulses but the matrix covers {matrix.n_total}")
    n = summary.n_total
    theory = theoretical_benchmarks(protocol, attack).as_floats()

    entries = [
        fraction_entry("sift_fraction", summary.sift_fraction, theory["sift_fraction"], n, z_max),
        fraction_entry("undisturbed_fraction", summary.undisturbed_fraction, theory["undisturbed_fraction"], n, z_max),
        fraction_entry("compromised_fraction", summary.compromised_fraction, theory["compromised_fraction"], n, z_max),
        fraction_entry("qber", summary.qber, theory["qber"], summary.n_sifted, z_max),
    ]

    expected, variance = expected_cells(protocol, attack)
    measured = matrix.cells
    for i, s in enumerate(STATE_ORDER):
        for j, b in enumerate(BASIS_ORDER):
            entries.append(
                benchmark_entry(
                    f"cell[{s},{b}]",
                    float(measured[i, j]),
                    100.0 * float(expected[i, j]),
                    100.0 * math.sqrt(variance[i, j] / n),
                    z_max,
                )
            )

    report = BenchmarkReport(entries=tuple(entries), z_max=z_max)
    for e in report.failures():
        logger.warning(f"Benchmark {e.name} failed: measured={e.measured} expected={e.expected:.6f} z={e.z}")
    return report


def lab_points(z_max: float = DEFAULT_Z_MAX) -> List[BenchmarkEntry]:
    """The tabletop run's sifted and compromised fractions against theory."""
    six = ProtocolKind.SIX_STATE
    return [
        fraction_entry(
            "lab_sift_fraction",
            LAB_SIFT_FRACTION,
            float(theoretical_benchmarks(six, AttackModel.NONE).sift_fraction),
            LAB_PULSES,
            z_max,
        ),
        fraction_entry(
            "lab_compromised_fraction",
            LAB_COMPROMISED_FRACTION,
            float(theoretical_benchmarks(six, AttackModel.INTERCEPT_RESEND).compromised_fraction),
            LAB_PULSES,
            z_max,
        ),
    ]


def chi_square_uniformity(counts: Sequence[int], expected_probs: Sequence[float]) -> ChiSquareResult:
    """
    Pearson goodness-of-fit statistic.

    Args:
        counts: Observed counts per category
        expected_probs: Category probabilities, summing to 1

    Returns:
        Statistic, degrees of freedom and a flag for expected counts below 5

    Raises:
        ValueError: On mismatched lengths, fewer than two categories or
            probabilities that do not sum to 1
    """
    observed = np.asarray(counts, dtype=np.float64).ravel()
    probs = np.asarray(expected_probs, dtype=np.float64).ravel()
    if observed.shape != probs.shape:
        raise ValueError(f"{observed.size} counts but {probs.size} probabilities")
    if observed.size < 2:
        raise ValueError("need at least two categories")
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_SUM_TOL:
        raise ValueError(f"probabilities must be non-negative and sum to 1, got sum {probs.sum()}")

    expected = observed.sum() * probs
    low = bool(np.any(expected < 5))
    if low:
        logger.warning("Chi-square test has expected counts below 5")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(expected > 0, (observed - expected) ** 2 / expected, np.where(observed > 0, np.inf, 0.0))
    return ChiSquareResult(statistic=float(terms.sum()), dof=observed.size - 1, low_expected=low)


def basis_pair_counts(records: Union[Sequence[PulseRecord], SessionArrays]) -> np.ndarray:
    """3x3 counts of (Alice's basis, Eve's basis) over intercepted pulses."""
    counts = np.zeros((len(BASIS_ORDER), len(BASIS_ORDER)), dtype=np.int64)
    if isinstance(records, SessionArrays):
        seen = records.eve_basis >= 0
        np.add.at(counts, (records.alice_basis[seen], records.eve_basis[seen]), 1)
        return counts
    for r in records:
        if r.eve_basis is not None:
            counts[BASIS_ORDER.index(r.alice_basis), BASIS_ORDER.index(r.eve_basis)] += 1
    return counts
