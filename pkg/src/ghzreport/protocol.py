"""Orchestration of the secret-report protocol.

One boss (Alice) shares N GHZ systems with M agents (S1), each agent
encrypts report bits onto travelling qubits with a CNot against its key
particle (S2), and the surviving key is parity-checked before reuse
(S3); S2+S3 repeat for a configured number of rounds (S4).

Physical state lives in a "world" of :class:`~ghzreport.register.Register`
objects keyed by position; party objects hold only (register, role)
references.  All classical information flows over a :class:`MessageBus`
whose message schema can carry positions, bases, bits and verdicts —
but never amplitudes or key labels — and every message increments the
transcript's classical-bit counter ``b_t``:

- basis announcement: 1 bit,
- result announcement: 1 bit,
- position reveal: ceil(log2(sequence length)) bits,
- verdict/abort: 1 bit.

Qubit accounting: ``q_t`` counts every GHZ qubit prepared (M+1 per
system), every decoy photon and every travelling qubit, exactly once;
``q_u`` counts the travelling qubits whose recovered bits are actual
message payload (in-flight check samples are overhead).  A compromised
verdict withholds the recovered bits and zeroes ``q_u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adversary import AdversaryStrategy
from .engine import single_qubit_state
from .ghz import (
    CONSUMED_FOR_CHECK,
    EVEN,
    ODD,
    GhzLabel,
    KeyLedger,
    alice_basis_choice,
    expected_parity,
    make_ghz,
)
from .register import Register

SECURE = "secure"
COMPROMISED = "compromised"

MESSAGE_KINDS = ("basis", "result", "position", "verdict", "abort")

CHECK_KINDS = ("decoy", "e1", "e3", "reuse")

_DECOY_STATES = ("+x", "-x", "+y", "-y")
_DECOY_EXPECTED_BIT = {"+x": 0, "-x": 1, "+y": 0, "-y": 1}
_DECOY_BASIS = {"+x": "X", "-x": "X", "+y": "Y", "-y": "Y"}


@dataclass(frozen=True)
class ProtocolConfig:
    """Run parameters; validation happens at construction."""

    num_agents: int
    key_len: int
    decoy_rate: float = 0.1
    sample_rate_e1: float = 0.25
    sample_rate_e3: float = 0.1
    reuse_check_rate: float = 0.1
    error_threshold: float = 0.02
    rng_seed: int = 0
    include_minus_labels: bool = False
    retry_limit: int = 3

    def __post_init__(self) -> None:
        if not 1 <= self.num_agents <= 14:
            raise ValueError(f"num_agents must be in [1, 14], got {self.num_agents}")
        if self.key_len < 1:
            raise ValueError(f"key_len must be >= 1, got {self.key_len}")
        for name in ("decoy_rate", "sample_rate_e1", "sample_rate_e3", "reuse_check_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {rate}")
        if not 0.0 <= self.error_threshold <= 1.0:
            raise ValueError(f"error_threshold must be in [0, 1], got {self.error_threshold}")
        if self.retry_limit < 0:
            raise ValueError(f"retry_limit must be >= 0, got {self.retry_limit}")
        if self.key_len - math.ceil(self.sample_rate_e1 * self.key_len) < 1:
            raise ValueError(
                "key too short: sample_rate_e1 leaves no key entries after the S1 check"
            )


def _check_payload(payload: dict) -> None:
    for key, value in payload.items():
        if not isinstance(key, str):
            raise TypeError(f"payload keys must be str, got {type(key).__name__}")
        if isinstance(value, bool) or isinstance(value, int) or isinstance(value, str):
            continue
        raise TypeError(
            f"payload value {value!r} of type {type(value).__name__} is not allowed on "
            "the classical bus (ints and strings only)"
        )


@dataclass(frozen=True)
class ClassicalMessage:
    """One classical announcement; payload is ints/strings only."""

    kind: str
    sender: str
    payload: dict
    bits: int

    def __post_init__(self) -> None:
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if self.bits < 1:
            raise ValueError("every message costs at least one bit")
        _check_payload(self.payload)


@dataclass
class RoundTranscript:
    """Counters, check tallies and the raw event log of one protocol run."""

    num_agents: int
    key_len: int
    q_u: int = 0
    q_t: int = 0
    b_t: int = 0
    check_errors: dict = field(default_factory=lambda: {k: 0 for k in CHECK_KINDS})
    check_totals: dict = field(default_factory=lambda: {k: 0 for k in CHECK_KINDS})
    verdict: str = SECURE
    retries: int = 0
    rounds_completed: int = 0
    sent_bits: dict = field(default_factory=dict)       # agent -> [message bits sent]
    recovered_bits: dict = field(default_factory=dict)  # agent -> [bits Alice recovered]
    events: list = field(default_factory=list)

    def error_rate(self, kind: str) -> float:
        total = self.check_totals[kind]
        return self.check_errors[kind] / total if total else 0.0

    def fidelity(self) -> float | None:
        """Fraction of message bits recovered intact; None when withheld."""
        if self.verdict == COMPROMISED:
            return None
        sent = [b for bits in self.sent_bits.values() for b in bits]
        got = [b for bits in self.recovered_bits.values() for b in bits]
        if not sent:
            return None
        return sum(1 for s, g in zip(sent, got) if s == g) / len(sent)

    def as_dict(self) -> dict:
        return {
            "num_agents": self.num_agents,
            "key_len": self.key_len,
            "q_u": self.q_u,
            "q_t": self.q_t,
            "b_t": self.b_t,
            "check_errors": dict(self.check_errors),
            "check_totals": dict(self.check_totals),
            "verdict": self.verdict,
            "retries": self.retries,
            "rounds_completed": self.rounds_completed,
            "fidelity": self.fidelity(),
        }


class MessageBus:
    """Classical broadcast channel; every post costs classical bits."""

    def __init__(self, transcript: RoundTranscript):
        self.transcript = transcript
        self.messages: list[ClassicalMessage] = []

    def post(self, kind: str, sender: str, payload: dict, bits: int) -> None:
        msg = ClassicalMessage(kind=kind, sender=sender, payload=payload, bits=bits)
        self.messages.append(msg)
        self.transcript.b_t += bits
        self.transcript.events.append(("msg", kind, bits))

    def announce_basis(self, sender: str, basis: str) -> None:
        self.post("basis", sender, {"basis": basis}, 1)

    def announce_result(self, sender: str, bit: int) -> None:
        self.post("result", sender, {"bit": int(bit)}, 1)

    def reveal_position(self, sender: str, position: int, sequence_length: int) -> None:
        bits = max(1, math.ceil(math.log2(sequence_length))) if sequence_length > 1 else 1
        self.post(
            "position",
            sender,
            {"position": int(position), "sequence_length": int(sequence_length)},
            bits,
        )

    def post_verdict(self, sender: str, secure: bool) -> None:
        self.post("verdict", sender, {"secure": int(secure)}, 1)

    def post_abort(self, sender: str) -> None:
        self.post("abort", sender, {}, 1)


@dataclass
class DecoyRecord:
    """What Alice remembers about one decoy photon she inserted."""

    agent: int
    seq_pos: int
    state_name: str


@dataclass
class Alice:
    key_ledger: KeyLedger = field(default_factory=KeyLedger)
    decoy_ledger: list = field(default_factory=list)


@dataclass
class Agent:
    ident: int
    received: dict = field(default_factory=dict)  # key position -> (Register, role)
    decoys: list = field(default_factory=list)    # (seq_pos, Register, role)


class ProtocolRun:
    """One seeded execution of the protocol against one adversary."""

    def __init__(self, config: ProtocolConfig, adversary: AdversaryStrategy | None = None):
        self.config = config
        self.adversary = adversary if adversary is not None else AdversaryStrategy()
        self.rng = np.random.default_rng(config.rng_seed)
        self.transcript = RoundTranscript(num_agents=config.num_agents, key_len=config.key_len)
        self.bus = MessageBus(self.transcript)
        self.world: dict = {}
        self.alice = Alice()
        self.agents: dict[int, Agent] = {}
        for r in range(1, config.num_agents + 1):
            self.transcript.sent_bits[r] = []
            self.transcript.recovered_bits[r] = []

    # ---------------------------------------------------------------- S1

    def distribute_key(self) -> bool:
        """Prepare and transmit the GHZ key; run decoy and e1 checks.

        Returns True when both checks pass the error threshold.
        """
        cfg = self.config
        m, n = cfg.num_agents, cfg.key_len
        self.world.clear()
        self.alice = Alice()
        self.agents = {r: Agent(r) for r in range(1, m + 1)}
        self.adversary.reset()

        roles = ["A"] + [f"B{r}" for r in range(1, m + 1)]
        for i in range(n):
            corr = "".join(str(int(b)) for b in self.rng.integers(0, 2, size=m))
            sign = 1
            if cfg.include_minus_labels and self.rng.integers(0, 2) == 1:
                sign = -1
            label = GhzLabel(corr_bits=corr, sign=sign)
            self.alice.key_ledger.add(i, label)
            self.world[("key", i)] = Register(make_ghz(label), list(roles))
            self.transcript.q_t += m + 1
            self.transcript.events.append(("ghz", m + 1))

        num_decoys = math.ceil(cfg.decoy_rate * n)
        seq_len = n + num_decoys
        for r in range(1, m + 1):
            decoy_slots = set(
                int(s) for s in self.rng.choice(seq_len, size=num_decoys, replace=False)
            )
            key_iter = iter(range(n))
            for seq_pos in range(seq_len):
                if seq_pos in decoy_slots:
                    name = _DECOY_STATES[int(self.rng.integers(0, 4))]
                    reg = Register(single_qubit_state(name), ["decoy"])
                    self.world[("decoy", r, seq_pos)] = reg
                    self.alice.decoy_ledger.append(DecoyRecord(r, seq_pos, name))
                    self.transcript.q_t += 1
                    self.transcript.events.append(("send", "decoy"))
                    delivered = self.adversary.tap_key_particle(reg, "decoy", r, None, self.rng)
                    self.agents[r].decoys.append((seq_pos, reg, delivered))
                else:
                    i = next(key_iter)
                    reg = self.world[("key", i)]
                    self.transcript.events.append(("send", "key"))
                    delivered = self.adversary.tap_key_particle(reg, f"B{r}", r, i, self.rng)
                    self.agents[r].received[i] = (reg, delivered)

        decoy_ok = self._decoy_check(seq_len)
        if not decoy_ok:
            self.bus.post_verdict("alice", False)
            return False

        num_samples = math.ceil(cfg.sample_rate_e1 * n)
        sample_positions = sorted(
            int(p) for p in self.rng.choice(n, size=num_samples, replace=False)
        )
        for position in sample_positions:
            self._ghz_parity_check(position, "e1", reveal_length=seq_len)
        e1_ok = self.transcript.error_rate("e1") <= cfg.error_threshold
        self.bus.post_verdict("alice", e1_ok)
        return e1_ok

    def _decoy_check(self, seq_len: int) -> bool:
        errors = 0
        for record in self.alice.decoy_ledger:
            self.bus.reveal_position("alice", record.seq_pos, seq_len)
            basis = _DECOY_BASIS[record.state_name]
            self.bus.announce_basis("alice", basis)
            agent = self.agents[record.agent]
            reg, role = next(
                (reg, role) for (pos, reg, role) in agent.decoys if pos == record.seq_pos
            )
            bit = reg.measure(role, basis, self.rng)
            self.bus.announce_result(f"bob{record.agent}", bit)
            if bit != _DECOY_EXPECTED_BIT[record.state_name]:
                errors += 1
        total = len(self.alice.decoy_ledger)
        self.transcript.check_errors["decoy"] += errors
        self.transcript.check_totals["decoy"] += total
        self.transcript.events.append(("check", "decoy", errors, total))
        return self.transcript.error_rate("decoy") <= self.config.error_threshold

    def _ghz_parity_check(self, position: int, kind: str, reveal_length: int) -> None:
        """S1(b)-style X/Y parity check of one shared system; consumes it."""
        cfg = self.config
        entry = self.alice.key_ledger.entry(position)
        reg: Register = self.world[("key", position)]
        self.bus.reveal_position("alice", position, reveal_length)
        agent_bases: dict[int, str] = {}
        for r in range(1, cfg.num_agents + 1):
            basis = "X" if self.rng.integers(0, 2) == 0 else "Y"
            agent_bases[r] = basis
            self.bus.announce_basis(f"bob{r}", basis)
        ordered = [agent_bases[r] for r in range(1, cfg.num_agents + 1)]
        alice_basis = alice_basis_choice(entry.label, ordered)
        parity = reg.measure("A", alice_basis, self.rng)
        for r in range(1, cfg.num_agents + 1):
            _, role = self.agents[r].received[position]
            published = self.adversary.publish_for_check(
                r, position, reg, role, agent_bases[r], agent_bases, self.rng
            )
            if published is None:
                published = reg.measure(role, agent_bases[r], self.rng)
            self.bus.announce_result(f"bob{r}", published)
            parity ^= published
        expected = expected_parity(entry.label, [alice_basis] + ordered)
        observed = EVEN if parity == 0 else ODD
        errors = int(observed != expected)
        self.alice.key_ledger.consume_for_check(position)
        self.transcript.check_errors[kind] += errors
        self.transcript.check_totals[kind] += 1
        self.transcript.events.append(("check", kind, errors, 1))

    # ---------------------------------------------------------------- S2

    def report_bit(self, agent: int, position: int, alpha: int, is_sample: bool = False) -> int:
        """One agent encrypts one bit onto a travelling qubit; Alice decrypts.

        The agent CNots a fresh |alpha> qubit against its key particle,
        the qubit travels (tap point), and Alice — after a sigma_x on her
        particle when this agent is anti-correlated — CNots it against A
        and measures it in Z.  The sigma_x is undone afterwards so the
        shared system returns to its original state.
        """
        if alpha not in (0, 1):
            raise ValueError(f"alpha must be 0 or 1, got {alpha!r}")
        entry = self.alice.key_ledger.entry(position)
        if entry.status == CONSUMED_FOR_CHECK:
            raise ValueError(f"key position {position} was consumed by a check")
        reg, control_role = self.agents[agent].received[position]
        reg.attach(single_qubit_state("1" if alpha else "0"), ["T"])
        reg.apply_cnot(control_role, "T")
        self.transcript.q_t += 1
        self.transcript.events.append(("send", "travel"))
        self.adversary.tap_travelling(reg, "T", agent, position, self.rng)
        anti_correlated = entry.label.corr_bits[agent - 1] == "1"
        if anti_correlated:
            reg.apply("X", "A")
        reg.apply_cnot("A", "T")
        recovered = reg.measure("T", "Z", self.rng)
        if anti_correlated:
            reg.apply("X", "A")
        reg.remove("T")
        self.alice.key_ledger.mark_used(position)
        if is_sample:
            entry.encrypted_sample = True
        self.transcript.events.append(("recover", agent, int(is_sample), alpha, recovered))
        if not is_sample:
            self.transcript.q_u += 1
        return recovered

    def run_message_round(self) -> bool:
        """Every agent reports over all alive entries; e3 checks follow."""
        cfg = self.config
        for r in range(1, cfg.num_agents + 1):
            usable = self.alice.key_ledger.alive_positions()
            if not usable:
                break
            k = len(usable)
            num_samples = math.ceil(cfg.sample_rate_e3 * k)
            sample_idx = set(
                int(i) for i in self.rng.choice(k, size=num_samples, replace=False)
            )
            samples = []
            for t_idx, position in enumerate(usable):
                if t_idx in sample_idx:
                    alpha = int(self.rng.integers(0, 2))
                    got = self.report_bit(r, position, alpha, is_sample=True)
                    samples.append((t_idx, alpha, got))
                else:
                    alpha = int(self.rng.integers(0, 2))
                    got = self.report_bit(r, position, alpha, is_sample=False)
                    self.transcript.sent_bits[r].append(alpha)
                    self.transcript.recovered_bits[r].append(got)
            if not self._e3_check(r, samples, k):
                return False
        return True

    def _e3_check(self, agent: int, samples: list, seq_len: int) -> bool:
        """Agent announces sample positions/values after Alice's measurements."""
        errors = 0
        for t_idx, alpha, got in samples:
            self.bus.reveal_position(f"bob{agent}", t_idx, seq_len)
            self.bus.announce_result(f"bob{agent}", alpha)
            if got != alpha:
                errors += 1
        self.transcript.check_errors["e3"] += errors
        self.transcript.check_totals["e3"] += len(samples)
        self.transcript.events.append(("check", "e3", errors, len(samples)))
        ok = self.transcript.error_rate("e3") <= self.config.error_threshold
        self.bus.post_verdict("alice", ok)
        return ok

    # ---------------------------------------------------------------- S3

    def reuse_check(self) -> bool:
        """Parity-check a fraction of alive entries before the key is reused.

        Entries that encrypted this round's e3 samples are checked first
        (consuming them wastes the least); survivors revert to fresh.
        """
        cfg = self.config
        alive = self.alice.key_ledger.alive_positions()
        if alive:
            count = math.ceil(cfg.reuse_check_rate * len(alive))
            preferred = [p for p in alive if self.alice.key_ledger.entry(p).encrypted_sample]
            rest = [p for p in alive if not self.alice.key_ledger.entry(p).encrypted_sample]
            self.rng.shuffle(preferred)
            self.rng.shuffle(rest)
            chosen = (preferred + rest)[:count]
            for position in chosen:
                self._ghz_parity_check(position, "reuse", reveal_length=cfg.key_len)
        ok = self.transcript.error_rate("reuse") <= cfg.error_threshold
        self.bus.post_verdict("alice", ok)
        if ok:
            self.alice.key_ledger.revert_after_check()
        return ok

    # ---------------------------------------------------------------- S4

    def run(self, rounds: int = 1) -> RoundTranscript:
        """Full protocol: S1 (with bounded retries), then `rounds` x (S2, S3)."""
        if rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {rounds}")
        attempts = 0
        while True:
            if self.distribute_key():
                break
            if attempts >= self.config.retry_limit:
                return self._abort()
            attempts += 1
            self.transcript.retries = attempts
            self.transcript.events.append(("retry", attempts))
        for round_no in range(1, rounds + 1):
            if not self.alice.key_ledger.alive_positions():
                break
            self.transcript.events.append(("round", round_no))
            if not self.run_message_round():
                return self._abort()
            if not self.reuse_check():
                return self._abort()
            self.transcript.rounds_completed = round_no
        self.transcript.verdict = SECURE
        self.transcript.events.append(("verdict", SECURE))
        return self.transcript

    def _abort(self) -> RoundTranscript:
        self.bus.post_abort("alice")
        self.transcript.verdict = COMPROMISED
        self.transcript.q_u = 0
        self.transcript.events.append(("verdict", COMPROMISED))
        return self.transcript


def distribute_key(config: ProtocolConfig, adversary: AdversaryStrategy | None = None) -> ProtocolRun:
    """Run S1 once and return the ProtocolRun carrying ledger, stores, transcript."""
    run = ProtocolRun(config, adversary)
    ok = run.distribute_key()
    if not ok:
        run.transcript.verdict = COMPROMISED
        run.transcript.q_u = 0
        run.transcript.events.append(("verdict", COMPROMISED))
    else:
        run.transcript.events.append(("verdict", SECURE))
    return run


def run_protocol(
    config: ProtocolConfig,
    adversary: AdversaryStrategy | None = None,
    rounds: int = 1,
) -> RoundTranscript:
    """Full S1..S4 execution; returns the aggregate transcript."""
    return ProtocolRun(config, adversary).run(rounds)
