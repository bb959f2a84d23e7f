"""Exact desk-scale simulator of a GHZ-keyed multiparty secret-report protocol.

A boss (Alice) shares GHZ-entangled systems with M agents as a reusable
quantum key; agents report secret bits by CNot-encrypting them onto
travelling qubits, and the shared systems double as an eavesdropping
tripwire through X/Y parity checks and decoy photons.
"""

from .adversary import AdversaryStrategy, DishonestAgent, InterceptResend
from .engine import (
    StateVector,
    apply_cnot,
    apply_single,
    bell_state,
    make_basis_state,
    measure,
    measure_bell,
    single_qubit_state,
    states_equal,
    tensor,
)
from .ghz import GhzLabel, KeyLedger, alice_basis_choice, expected_parity, label_from_state, make_ghz
from .harness import ExperimentSpec, MetricsRow, compute_efficiency, run_experiment
from .protocol import ProtocolConfig, ProtocolRun, RoundTranscript, distribute_key, run_protocol

__version__ = "0.1.0"

__all__ = [
    "AdversaryStrategy",
    "DishonestAgent",
    "ExperimentSpec",
    "GhzLabel",
    "InterceptResend",
    "KeyLedger",
    "MetricsRow",
    "ProtocolConfig",
    "ProtocolRun",
    "RoundTranscript",
    "StateVector",
    "alice_basis_choice",
    "apply_cnot",
    "apply_single",
    "bell_state",
    "compute_efficiency",
    "distribute_key",
    "expected_parity",
    "label_from_state",
    "make_basis_state",
    "make_ghz",
    "measure",
    "measure_bell",
    "run_experiment",
    "run_protocol",
    "single_qubit_state",
    "states_equal",
    "tensor",
    "__version__",
]
