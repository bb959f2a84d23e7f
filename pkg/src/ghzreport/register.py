"""Live quantum systems with named qubit roles.

The protocol's "physics world" is a set of Register objects, one per
independently evolving system (a shared GHZ system, a decoy photon, a
substituted Bell pair...).  Parties never hold amplitudes; they hold
(register, role) references, and the register maps roles like "A",
"B2", "T", "b1" to concrete qubit indices.  Every physical operation
funnels through here, so only the engine's index conventions and this
bookkeeping know where a particle lives.
"""

from __future__ import annotations

import numpy as np

from . import engine
from .engine import StateVector


class Register:
    """One evolving pure state plus role -> qubit-index bookkeeping."""

    def __init__(self, state: StateVector, roles: list[str]):
        if len(roles) != state.num_qubits:
            raise ValueError(
                f"{state.num_qubits}-qubit state needs {state.num_qubits} roles, got {len(roles)}"
            )
        if len(set(roles)) != len(roles):
            raise ValueError("role names must be unique")
        self.state = state
        self._roles: dict[str, int] = {name: i for i, name in enumerate(roles)}

    @property
    def roles(self) -> dict[str, int]:
        return dict(self._roles)

    def qubit(self, role: str) -> int:
        if role not in self._roles:
            raise ValueError(f"register has no role {role!r}; has {sorted(self._roles)}")
        return self._roles[role]

    def has_role(self, role: str) -> bool:
        return role in self._roles

    def apply(self, gate: str, role: str) -> None:
        self.state = engine.apply_single(self.state, self.qubit(role), gate)

    def apply_cnot(self, control_role: str, target_role: str) -> None:
        self.state = engine.apply_cnot(self.state, self.qubit(control_role), self.qubit(target_role))

    def attach(self, other: StateVector, new_roles: list[str]) -> None:
        """Tensor `other` onto the right of this register."""
        offset = self.state.num_qubits
        for name in new_roles:
            if name in self._roles:
                raise ValueError(f"role {name!r} already present")
        if len(new_roles) != other.num_qubits:
            raise ValueError("one role name per attached qubit")
        self.state = engine.tensor(self.state, other)
        for i, name in enumerate(new_roles):
            self._roles[name] = offset + i

    def measure(self, role: str, basis: str, rng: np.random.Generator) -> int:
        """Projective measurement of one role; register collapses in place."""
        outcome = engine.measure(self.state, self.qubit(role), basis, rng)
        self.state = outcome.state
        return outcome.bit

    def measure_bell(self, role_a: str, role_b: str, rng: np.random.Generator) -> str:
        """Bell measurement of two roles; both qubits leave the register."""
        qa, qb = self.qubit(role_a), self.qubit(role_b)
        outcome, remainder = engine.measure_bell(self.state, qa, qb, rng)
        self.state = remainder
        self._drop_roles((role_a, role_b), (qa, qb))
        return outcome

    def remove(self, role: str) -> None:
        """Detach a role whose qubit is in a definite Z eigenstate."""
        q = self.qubit(role)
        self.state = engine.remove_qubit(self.state, q)
        self._drop_roles((role,), (q,))

    def _drop_roles(self, names: tuple[str, ...], qubits: tuple[int, ...]) -> None:
        for name in names:
            del self._roles[name]
        for name, q in list(self._roles.items()):
            self._roles[name] = q - sum(1 for dropped in qubits if dropped < q)
