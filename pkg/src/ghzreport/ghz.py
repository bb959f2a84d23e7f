"""GHZ-family key states shared by a boss (Alice) and M agents.

A key state on qubits ordered (A, B1, ..., BM) is

    (|0 c1..cM> + sign * |1 ~c1..~cM>) / sqrt(2)

where ``corr_bits = c1..cM`` says which agents are anti-correlated with
Alice in Z and ``sign`` is the relative phase (+1 or -1).  The label is
Alice's private bookkeeping; it never travels on the classical bus.

The X/Y parity checks work because each such state is a +-1 eigenstate
of every product of X/Y measurements containing an even number of Y
factors.  ``expected_parity`` computes the eigenvalue analytically;
``projected_parities`` is the brute-force definition (enumerate all
outcome strings, keep the ones with nonzero probability) that the
analytic rule is tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    MAX_QUBITS,
    NORM_ATOL,
    StateVector,
    _TO_Z_FRAME,
    _apply_matrix,
)

EVEN = "even"
ODD = "odd"

FRESH = "fresh"
USED_FOR_MESSAGE = "used-for-message"
CONSUMED_FOR_CHECK = "consumed-for-check"

_ALLOWED_TRANSITIONS = {
    (FRESH, USED_FOR_MESSAGE),
    (FRESH, CONSUMED_FOR_CHECK),
    (USED_FOR_MESSAGE, CONSUMED_FOR_CHECK),
}


@dataclass(frozen=True)
class GhzLabel:
    """Which GHZ-family state a key entry is in."""

    corr_bits: str
    sign: int = 1

    def __post_init__(self) -> None:
        if not self.corr_bits or any(c not in "01" for c in self.corr_bits):
            raise ValueError(f"corr_bits must be a nonempty string over '01', got {self.corr_bits!r}")
        if len(self.corr_bits) > MAX_QUBITS - 1:
            raise ValueError(f"too many agents: {len(self.corr_bits)}")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")

    @property
    def num_agents(self) -> int:
        return len(self.corr_bits)


def make_ghz(label: GhzLabel) -> StateVector:
    """Build the (M+1)-qubit key state for `label`, Alice's qubit first."""
    m = label.num_agents
    amps = np.zeros(1 << (m + 1), dtype=complex)
    lead = int(label.corr_bits, 2)
    flipped = lead ^ ((1 << m) - 1)
    amps[lead] = 1.0 / math.sqrt(2.0)
    amps[(1 << m) | flipped] = label.sign / math.sqrt(2.0)
    return StateVector(amps, m + 1)


def label_from_state(state: StateVector, atol: float = NORM_ATOL) -> GhzLabel | None:
    """Recover the label of a GHZ-family state, or None if outside the family.

    Accepts an arbitrary global phase; everything else (wrong support,
    unbalanced amplitudes, relative phase other than +-1) is rejected.
    """
    if state.num_qubits < 2:
        return None
    m = state.num_qubits - 1
    half = 1.0 / math.sqrt(2.0)
    support = np.flatnonzero(np.abs(state.amps) > atol)
    if support.shape != (2,):
        return None
    lo, hi = int(support[0]), int(support[1])
    if lo >> m != 0 or hi >> m != 1:
        return None
    if (hi ^ lo) != (1 << (m + 1)) - 1:  # lower m bits must be complementary
        return None
    a, b = state.amps[lo], state.amps[hi]
    if abs(abs(a) - half) > atol or abs(abs(b) - half) > atol:
        return None
    ratio = b / a
    if abs(ratio - 1.0) <= atol:
        sign = 1
    elif abs(ratio + 1.0) <= atol:
        sign = -1
    else:
        return None
    return GhzLabel(corr_bits=format(lo, f"0{m}b"), sign=sign)


def alice_basis_choice(label: GhzLabel, agent_bases: list[str]) -> str:
    """Alice's measuring basis: X when the agents' Y count is even, else Y."""
    if len(agent_bases) != label.num_agents:
        raise ValueError(
            f"expected {label.num_agents} agent bases, got {len(agent_bases)}"
        )
    for b in agent_bases:
        if b not in ("X", "Y"):
            raise ValueError(f"agents measure in X or Y only, got {b!r}")
    return "X" if agent_bases.count("Y") % 2 == 0 else "Y"


def expected_parity(label: GhzLabel, all_bases: list[str]) -> str:
    """Deterministic joint outcome parity for an X/Y product measurement.

    ``all_bases[0]`` is Alice's basis, ``all_bases[1:]`` the agents', in
    qubit order.  Valid only for assignments with an even total number
    of Y factors (those are exactly the deterministic ones); raises
    ValueError otherwise.
    """
    if len(all_bases) != label.num_agents + 1:
        raise ValueError(
            f"expected {label.num_agents + 1} bases, got {len(all_bases)}"
        )
    for b in all_bases:
        if b not in ("X", "Y"):
            raise ValueError(f"parity checks use X or Y only, got {b!r}")
    y_total = all_bases.count("Y")
    if y_total % 2 != 0:
        raise ValueError("odd number of Y factors: outcome parity is not deterministic")
    parity = 0 if label.sign == 1 else 1
    parity ^= (y_total // 2) % 2
    parity ^= 1 if all_bases[0] == "Y" else 0
    for bit, basis in zip(label.corr_bits, all_bases[1:]):
        if basis == "Y" and bit == "0":
            parity ^= 1
    return EVEN if parity == 0 else ODD


def projected_parities(label: GhzLabel, all_bases: list[str], atol: float = 1e-12) -> set[str]:
    """Brute-force parity support: which parities occur with nonzero probability.

    Enumerates all 2^(M+1) outcome strings of the product measurement by
    rotating every qubit into the Z frame and reading off amplitudes.
    This is the defining computation that `expected_parity` must agree
    with whenever it claims determinism.
    """
    if len(all_bases) != label.num_agents + 1:
        raise ValueError(
            f"expected {label.num_agents + 1} bases, got {len(all_bases)}"
        )
    state = make_ghz(label)
    for qubit, basis in enumerate(all_bases):
        if basis not in ("X", "Y", "Z"):
            raise ValueError(f"unknown basis {basis!r}")
        state = _apply_matrix(state, qubit, _TO_Z_FRAME[basis])
    probs = np.abs(state.amps) ** 2
    parities: set[str] = set()
    for index in np.flatnonzero(probs > atol):
        parities.add(EVEN if bin(int(index)).count("1") % 2 == 0 else ODD)
    return parities


@dataclass
class KeyEntry:
    """One shared GHZ system in Alice's ledger."""

    position: int
    label: GhzLabel
    status: str = FRESH
    encrypted_sample: bool = False  # carried an in-flight check bit this round

    def transition(self, new_status: str) -> None:
        if (self.status, new_status) not in _ALLOWED_TRANSITIONS:
            raise ValueError(f"illegal status transition {self.status!r} -> {new_status!r}")
        self.status = new_status


@dataclass
class KeyLedger:
    """Alice's private record of every key entry and its lifecycle.

    Status machine: fresh -> used-for-message -> consumed-for-check, or
    fresh -> consumed-for-check; never out of consumed-for-check.  An
    entry used for messages may return to fresh only through the S3
    reuse-check gate (`revert_after_check`).
    """

    entries: dict[int, KeyEntry] = field(default_factory=dict)

    def add(self, position: int, label: GhzLabel) -> KeyEntry:
        if position in self.entries:
            raise ValueError(f"duplicate key position {position}")
        entry = KeyEntry(position=position, label=label)
        self.entries[position] = entry
        return entry

    def entry(self, position: int) -> KeyEntry:
        if position not in self.entries:
            raise ValueError(f"unknown key position {position}")
        return self.entries[position]

    def alive_positions(self) -> list[int]:
        return [p for p, e in sorted(self.entries.items()) if e.status != CONSUMED_FOR_CHECK]

    def consumed_positions(self) -> list[int]:
        return [p for p, e in sorted(self.entries.items()) if e.status == CONSUMED_FOR_CHECK]

    def mark_used(self, position: int) -> None:
        entry = self.entry(position)
        if entry.status == CONSUMED_FOR_CHECK:
            raise ValueError(f"key position {position} already consumed for a check")
        if entry.status == FRESH:
            entry.transition(USED_FOR_MESSAGE)

    def consume_for_check(self, position: int) -> None:
        self.entry(position).transition(CONSUMED_FOR_CHECK)

    def revert_after_check(self) -> None:
        """S3 gate: surviving used-for-message entries become fresh again."""
        for entry in self.entries.values():
            if entry.status == USED_FOR_MESSAGE:
                entry.status = FRESH
            entry.encrypted_sample = False
