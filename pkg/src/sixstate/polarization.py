"""
Jones-vector algebra for the six polarization states.

Conventions:
    * Vectors are (a_h, a_v) in the {|H>, |V>} basis; matrices are row-major
      in the same order.
    * States are defined up to global phase. Equality always goes through
      ``fidelity``, never a componentwise comparison.
    * |D> = (|H> + |V>)/sqrt2, |A> = (|H> - |V>)/sqrt2,
      |R> = (|H> + i|V>)/sqrt2, |L> = (|H> - i|V>)/sqrt2.
    * Bits: H, D, R -> 0 and V, A, L -> 1.
    * Angles are degrees at every interface.
    * ``hwp_matrix(t)`` = [[cos 2t, sin 2t], [sin 2t, -cos 2t]].
    * ``qwp_matrix(t)`` carries global phase 1, so ``qwp_matrix(0) = diag(1, i)``.
      With it, ``qwp_matrix(45)|H> = |L>`` and ``qwp_matrix(45)|V> = |R>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .config import ATOL, CLASSIFY_TOL
from .rng import RandomStream

_SQRT_HALF = 1.0 / math.sqrt(2.0)


class Basis(Enum):
    """The three mutually unbiased polarization bases."""

    HV = "HV"
    DA = "DA"
    RL = "RL"

    def __str__(self):
        return self.value


class PolState(Enum):
    """The six named polarization states."""

    H = "H"
    V = "V"
    D = "D"
    A = "A"
    R = "R"
    L = "L"

    def __str__(self):
        return self.value


BASIS_ORDER: Tuple[Basis, ...] = (Basis.HV, Basis.DA, Basis.RL)
# Row order of every state-indexed table: index = 2 * basis index + bit.
STATE_ORDER: Tuple[PolState, ...] = (
    PolState.H,
    PolState.V,
    PolState.D,
    PolState.A,
    PolState.R,
    PolState.L,
)

STATE_TABLE = np.array(
    [
        [1.0, 0.0],
        [0.0, 1.0],
        [_SQRT_HALF, _SQRT_HALF],
        [_SQRT_HALF, -_SQRT_HALF],
        [_SQRT_HALF, 1j * _SQRT_HALF],
        [_SQRT_HALF, -1j * _SQRT_HALF],
    ],
    dtype=np.complex128,
)
STATE_TABLE.setflags(write=False)


@dataclass(frozen=True, eq=False)
class JonesVector:
    """Normalized polarization state; equality ignores global phase."""

    a_h: complex
    a_v: complex

    def __post_init__(self):
        for value in (self.a_h, self.a_v):
            if not (math.isfinite(value.real) and math.isfinite(value.imag)):
                raise ValueError(f"non-finite Jones amplitude {value!r}")
        object.__setattr__(self, "a_h", complex(self.a_h))
        object.__setattr__(self, "a_v", complex(self.a_v))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> JonesVector:
        return cls(complex(arr[0]), complex(arr[1]))

    @property
    def array(self) -> np.ndarray:
        return np.array([self.a_h, self.a_v], dtype=np.complex128)

    def norm(self) -> float:
        return math.sqrt(abs(self.a_h) ** 2 + abs(self.a_v) ** 2)

    def __eq__(self, other):
        if not isinstance(other, JonesVector):
            return NotImplemented
        return fidelity(self, other) >= 1.0 - ATOL

    __hash__ = None

    def __repr__(self) -> str:
        return f"JonesVector(a_h={self.a_h:.6g}, a_v={self.a_v:.6g})"


@dataclass(frozen=True, eq=False)
class JonesMatrix:
    """2x2 complex operator acting on Jones vectors."""

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValueError(f"Jones matrix must be 2x2, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("non-finite Jones matrix entry")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def __matmul__(self, other):
        if isinstance(other, JonesMatrix):
            return JonesMatrix(self.m @ other.m)
        if isinstance(other, JonesVector):
            return apply(self, other)
        return NotImplemented

    def __repr__(self) -> str:
        return f"JonesMatrix({self.m.tolist()})"


# --- state tables ---

def state_of(s: PolState) -> JonesVector:
    """Jones vector of a named state."""
    return JonesVector.from_array(STATE_TABLE[STATE_ORDER.index(s)])


def state_name(basis: Basis, bit: int) -> PolState:
    """Named state carrying ``bit`` in ``basis``."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    return STATE_ORDER[2 * BASIS_ORDER.index(basis) + bit]


def states(basis: Basis) -> Tuple[JonesVector, JonesVector]:
    """Ordered (bit-0, bit-1) eigenstates of ``basis``."""
    return state_of(state_name(basis, 0)), state_of(state_name(basis, 1))


def basis_of(s: PolState) -> Basis:
    return BASIS_ORDER[STATE_ORDER.index(s) // 2]


def bit_of(s: PolState) -> int:
    return STATE_ORDER.index(s) % 2


# --- operators ---

def _check_angle(theta_deg: float) -> float:
    if not math.isfinite(theta_deg):
        raise ValueError(f"non-finite wave-plate angle {theta_deg!r}")
    return float(np.deg2rad(theta_deg))


def identity() -> JonesMatrix:
    return JonesMatrix(np.eye(2, dtype=np.complex128))


def hwp_matrix(theta_deg: float) -> JonesMatrix:
    """
    Half-wave plate with its fast axis at ``theta_deg`` from H.

    Hermitian and unitary with determinant -1; maps linear polarization at
    angle phi to 2*theta - phi.
    """
    t = _check_angle(theta_deg)
    c, s = math.cos(2 * t), math.sin(2 * t)
    return JonesMatrix([[c, s], [s, -c]])


def qwp_matrix(theta_deg: float) -> JonesMatrix:
    """Quarter-wave plate with its fast axis at ``theta_deg``; global phase 1."""
    t = _check_angle(theta_deg)
    c, s = math.cos(t), math.sin(t)
    off = (1 - 1j) * s * c
    return JonesMatrix([[c**2 + 1j * s**2, off], [off, s**2 + 1j * c**2]])


def rotator_matrix(theta_deg: float) -> JonesMatrix:
    """
    Polarization rotation by ``2 * theta_deg``.

    Turns |H> into linear polarization at 2*theta like a half-wave plate at
    theta, but reduces to the identity at 0. Circular states only pick up a
    phase.
    """
    t = _check_angle(theta_deg)
    c, s = math.cos(2 * t), math.sin(2 * t)
    return JonesMatrix([[c, -s], [s, c]])


def dagger(m: JonesMatrix) -> JonesMatrix:
    return JonesMatrix(m.m.conj().T)


def compose(*ms: JonesMatrix) -> JonesMatrix:
    """Product of operators in the order light meets them (first argument first)."""
    out = identity()
    for m in ms:
        out = m @ out
    return out


def is_unitary(m: JonesMatrix, atol: float = ATOL) -> bool:
    return bool(np.allclose(m.m.conj().T @ m.m, np.eye(2), rtol=0.0, atol=atol))


def same_operator(a: JonesMatrix, b: JonesMatrix, atol: float = ATOL) -> bool:
    """True when two unitaries differ only by a global phase."""
    overlap = abs(np.trace(a.m.conj().T @ b.m)) / 2.0
    return bool(abs(overlap - 1.0) <= atol)


def apply_rows(m: np.ndarray, psi: np.ndarray) -> np.ndarray:
    """Apply a 2x2 matrix to one vector or to each row of an (n, 2) array."""
    h, v = psi[..., 0], psi[..., 1]
    return np.stack((m[0, 0] * h + m[0, 1] * v, m[1, 0] * h + m[1, 1] * v), axis=-1)


def apply(m: JonesMatrix, v: JonesVector) -> JonesVector:
    """Matrix-vector product."""
    out = apply_rows(m.m, v.array)
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite result applying Jones matrix")
    return JonesVector.from_array(out)


# --- overlaps and measurement ---

def born_probabilities(psi: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    """
    |<outcome|psi>|^2 over the last axis.

    Shared by the scalar API and the vectorized session kernel so both
    produce the same floating-point values.
    """
    ov = np.conj(outcome[..., 0]) * psi[..., 0] + np.conj(outcome[..., 1]) * psi[..., 1]
    return ov.real * ov.real + ov.imag * ov.imag


def fidelity(u: JonesVector, v: JonesVector) -> float:
    """|<u|v>|^2, independent of either vector's global phase."""
    return float(min(born_probabilities(v.array, u.array), 1.0))


def born_probability(psi: JonesVector, outcome: JonesVector) -> float:
    """Probability that ``psi`` is found in ``outcome``."""
    return float(np.clip(born_probabilities(psi.array, outcome.array), 0.0, 1.0))


def measure_in_basis(psi: JonesVector, b: Basis, rng: RandomStream) -> Tuple[int, JonesVector]:
    """
    Projective measurement; consumes one draw.

    Returns:
        (bit, post_state) where post_state is the eigenstate observed
    """
    p0 = born_probabilities(psi.array, STATE_TABLE[2 * BASIS_ORDER.index(b)])
    bit = 0 if rng.uniform() < p0 else 1
    return bit, state_of(state_name(b, bit))


def classify(v: JonesVector, tol: float = CLASSIFY_TOL) -> Optional[PolState]:
    """The unique named state with fidelity >= 1 - tol, or None."""
    p = born_probabilities(STATE_TABLE, v.array[np.newaxis, :])
    hits = np.flatnonzero(p >= 1.0 - tol)
    if len(hits) != 1:
        return None
    return STATE_ORDER[int(hits[0])]
