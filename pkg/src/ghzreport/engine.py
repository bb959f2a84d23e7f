"""Exact statevector engine for small qubit registers.

Conventions used throughout the package:

- A register of ``n`` qubits (``1 <= n <= 16``) is a dense vector of
  ``2**n`` complex128 amplitudes.
- Qubit 0 is the *most significant* bit of the amplitude index, so the
  ket written ``|q0 q1 ... q_{n-1}>`` lives at index
  ``int("q0q1...", 2)`` and ``tensor(a, b)`` places ``a``'s qubits
  first.  Only this module knows that; everything above it addresses
  qubits through role/position bookkeeping.
- X- and Y-basis measurements rotate the qubit into the Z frame
  (``H`` for X, ``H @ S^dagger`` for Y), measure, and rotate back, so
  the collapsed register is expressed in the original frame and
  re-measuring reproduces the same bit.
- Eigenvalue +1 maps to bit 0 in every basis (``|+x>`` measures as 0).

All operations take the state by value and return fresh states; nothing
here mutates an existing :class:`StateVector`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_QUBITS = 16
NORM_ATOL = 1e-9

BASES = ("Z", "X", "Y")
BELL_OUTCOMES = ("phi+", "phi-", "psi+", "psi-")

_SQ2 = math.sqrt(2.0)

GATES: dict[str, np.ndarray] = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / _SQ2,
    "S": np.array([[1, 0], [0, 1j]], dtype=complex),
}

# Rotation taking a basis' +1/-1 eigenstates to |0>/|1>; Z needs none.
_TO_Z_FRAME: dict[str, np.ndarray] = {
    "Z": np.eye(2, dtype=complex),
    "X": GATES["H"],
    "Y": GATES["H"] @ GATES["S"].conj().T,
}
_FROM_Z_FRAME = {b: m.conj().T for b, m in _TO_Z_FRAME.items()}

# Bell coefficient tensors indexed (bit of first qubit, bit of second).
_BELL_COEFFS: dict[str, np.ndarray] = {
    "phi+": np.array([[1, 0], [0, 1]], dtype=complex) / _SQ2,
    "phi-": np.array([[1, 0], [0, -1]], dtype=complex) / _SQ2,
    "psi+": np.array([[0, 1], [1, 0]], dtype=complex) / _SQ2,
    "psi-": np.array([[0, 1], [-1, 0]], dtype=complex) / _SQ2,
}

_SINGLE_QUBIT_STATES: dict[str, np.ndarray] = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+x": np.array([1, 1], dtype=complex) / _SQ2,
    "-x": np.array([1, -1], dtype=complex) / _SQ2,
    "+y": np.array([1, 1j], dtype=complex) / _SQ2,
    "-y": np.array([1, -1j], dtype=complex) / _SQ2,
}


@dataclass(frozen=True)
class StateVector:
    """Immutable pure state of ``num_qubits`` qubits."""

    amps: np.ndarray
    num_qubits: int

    def __post_init__(self) -> None:
        amps = np.asarray(self.amps, dtype=complex)
        if self.num_qubits < 0 or self.num_qubits > MAX_QUBITS:
            raise ValueError(f"num_qubits must be in [0, {MAX_QUBITS}], got {self.num_qubits}")
        if amps.shape != (1 << self.num_qubits,):
            raise ValueError(
                f"amplitude vector has shape {amps.shape}, expected ({1 << self.num_qubits},)"
            )
        amps = amps.copy()
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    @property
    def dim(self) -> int:
        return 1 << self.num_qubits

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass
class MeasureOutcome:
    """Result of a projective single-qubit measurement."""

    bit: int
    basis: str
    state: StateVector  # post-measurement state of the full register


def _check_qubit(state: StateVector, qubit: int) -> None:
    if not 0 <= qubit < state.num_qubits:
        raise ValueError(f"qubit {qubit} out of range for {state.num_qubits}-qubit state")


def _check_basis(basis: str) -> None:
    if basis not in BASES:
        raise ValueError(f"unknown basis {basis!r}; expected one of {BASES}")


def make_basis_state(num_qubits: int, bits: str) -> StateVector:
    """Computational-basis state |bits>, first character = qubit 0."""
    if not 1 <= num_qubits <= MAX_QUBITS:
        raise ValueError(f"num_qubits must be in [1, {MAX_QUBITS}], got {num_qubits}")
    if len(bits) != num_qubits or any(c not in "01" for c in bits):
        raise ValueError(f"bits must be a length-{num_qubits} string over '01', got {bits!r}")
    amps = np.zeros(1 << num_qubits, dtype=complex)
    amps[int(bits, 2)] = 1.0
    return StateVector(amps, num_qubits)


def single_qubit_state(name: str) -> StateVector:
    """One-qubit state by name: '0', '1', '+x', '-x', '+y', '-y'."""
    if name not in _SINGLE_QUBIT_STATES:
        raise ValueError(f"unknown single-qubit state {name!r}")
    return StateVector(_SINGLE_QUBIT_STATES[name].copy(), 1)


def bell_state(kind: str) -> StateVector:
    """Two-qubit Bell state: 'phi+', 'phi-', 'psi+', 'psi-'."""
    if kind not in _BELL_COEFFS:
        raise ValueError(f"unknown Bell state {kind!r}; expected one of {BELL_OUTCOMES}")
    return StateVector(_BELL_COEFFS[kind].reshape(4).copy(), 2)


def _apply_matrix(state: StateVector, qubit: int, matrix: np.ndarray) -> StateVector:
    n = state.num_qubits
    tensor_shape = (1 << qubit, 2, 1 << (n - qubit - 1))
    amps = state.amps.reshape(tensor_shape)
    out = np.einsum("ab,ibj->iaj", matrix, amps).reshape(state.dim)
    return StateVector(out, n)


def apply_single(state: StateVector, qubit: int, gate: str) -> StateVector:
    """Apply a named single-qubit gate (X, Z, H or S)."""
    _check_qubit(state, qubit)
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}; expected one of {tuple(GATES)}")
    return _apply_matrix(state, qubit, GATES[gate])


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """CNot: flip `target` on every amplitude whose `control` bit is 1."""
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise ValueError("control and target must differ")
    n = state.num_qubits
    idx = np.arange(state.dim)
    cbit = (idx >> (n - 1 - control)) & 1
    flipped = idx ^ (cbit << (n - 1 - target))
    out = np.empty_like(state.amps)
    out[flipped] = state.amps[idx]
    return StateVector(out, n)


def measurement_probabilities(state: StateVector, qubit: int, basis: str) -> tuple[float, float]:
    """(p0, p1) for measuring `qubit` in `basis`, without collapsing."""
    _check_qubit(state, qubit)
    _check_basis(basis)
    rotated = _apply_matrix(state, qubit, _TO_Z_FRAME[basis])
    n = state.num_qubits
    tensor = np.abs(rotated.amps.reshape(1 << qubit, 2, 1 << (n - qubit - 1))) ** 2
    p0 = float(tensor[:, 0, :].sum())
    return p0, 1.0 - p0


def measure(state: StateVector, qubit: int, basis: str, rng: np.random.Generator) -> MeasureOutcome:
    """Projectively measure one qubit; collapse the full register.

    Returns a :class:`MeasureOutcome` whose ``state`` is expressed in
    the original frame, so the measured qubit sits in the `basis`
    eigenstate selected by ``bit``.
    """
    _check_qubit(state, qubit)
    _check_basis(basis)
    rotated = _apply_matrix(state, qubit, _TO_Z_FRAME[basis])
    n = state.num_qubits
    tensor = rotated.amps.reshape(1 << qubit, 2, 1 << (n - qubit - 1)).copy()
    p0 = min(1.0, max(0.0, float((np.abs(tensor[:, 0, :]) ** 2).sum())))
    bit = 0 if rng.random() < p0 else 1
    prob = p0 if bit == 0 else 1.0 - p0
    if prob <= 0.0:
        raise ValueError("attempted to collapse onto a zero-probability branch")
    tensor[:, 1 - bit, :] = 0.0
    collapsed = StateVector(tensor.reshape(state.dim) / math.sqrt(prob), n)
    collapsed = _apply_matrix(collapsed, qubit, _FROM_Z_FRAME[basis])
    return MeasureOutcome(bit=bit, basis=basis, state=collapsed)


def measure_bell(
    state: StateVector, qubit_a: int, qubit_b: int, rng: np.random.Generator
) -> tuple[str, StateVector]:
    """Two-qubit Bell-basis measurement.

    Projects qubits (qubit_a, qubit_b) onto one of the four Bell states,
    removes them from the register, and returns the outcome name plus
    the renormalized remainder on the other ``n - 2`` qubits (original
    relative order preserved).
    """
    _check_qubit(state, qubit_a)
    _check_qubit(state, qubit_b)
    if qubit_a == qubit_b:
        raise ValueError("Bell measurement needs two distinct qubits")
    n = state.num_qubits
    tensor = state.amps.reshape((2,) * n)
    tensor = np.moveaxis(tensor, (qubit_a, qubit_b), (0, 1)).reshape(2, 2, -1)
    remainders = {}
    probs = {}
    for name, coeffs in _BELL_COEFFS.items():
        rem = np.einsum("ab,abk->k", coeffs.conj(), tensor)
        remainders[name] = rem
        probs[name] = float((np.abs(rem) ** 2).sum())
    total = 0.0
    for name in BELL_OUTCOMES:
        total += probs[name]
    draw = rng.random() * total
    cumulative = 0.0
    outcome = BELL_OUTCOMES[-1]
    for name in BELL_OUTCOMES:
        cumulative += probs[name]
        if draw < cumulative:
            outcome = name
            break
    if probs[outcome] <= 0.0:
        raise ValueError("attempted to collapse onto a zero-probability Bell branch")
    remainder = remainders[outcome] / math.sqrt(probs[outcome])
    return outcome, StateVector(remainder, n - 2)


def tensor(a: StateVector, b: StateVector) -> StateVector:
    """Kronecker product; `a`'s qubits become positions 0..a.n-1."""
    n = a.num_qubits + b.num_qubits
    if n > MAX_QUBITS:
        raise ValueError(f"tensor product would exceed {MAX_QUBITS} qubits")
    return StateVector(np.kron(a.amps, b.amps), n)


def remove_qubit(state: StateVector, qubit: int, atol: float = NORM_ATOL) -> StateVector:
    """Drop a qubit that sits in a definite Z eigenstate, unentangled.

    Used to detach a travelling qubit after it has been measured in Z.
    Raises ValueError if the qubit is not cleanly |0> or |1>.
    """
    _check_qubit(state, qubit)
    n = state.num_qubits
    tensor_view = state.amps.reshape(1 << qubit, 2, 1 << (n - qubit - 1))
    for bit in (0, 1):
        if float((np.abs(tensor_view[:, 1 - bit, :]) ** 2).sum()) <= atol:
            return StateVector(tensor_view[:, bit, :].reshape(-1), n - 1)
    raise ValueError(f"qubit {qubit} is not in a definite Z eigenstate; cannot remove")


def states_equal(a: StateVector, b: StateVector, atol: float = NORM_ATOL) -> bool:
    """Amplitude equality up to a global phase.

    The phase is aligned on `a`'s largest-magnitude amplitude, then the
    vectors are compared elementwise at tolerance `atol`.
    """
    if a.num_qubits != b.num_qubits:
        return False
    k = int(np.argmax(np.abs(a.amps)))
    if abs(a.amps[k]) < atol or abs(b.amps[k]) < atol:
        return bool(np.allclose(a.amps, b.amps, atol=atol))
    phase = (b.amps[k] / a.amps[k])
    phase /= abs(phase)
    return bool(np.allclose(a.amps * phase, b.amps, atol=atol))
