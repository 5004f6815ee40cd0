"""Deterministic discrete-event network with a scheduling adversary.

Every run is a pure function of (config, genesis, workload, policy, seed).
Messages become envelopes in a pending set; each step the adversary policy
picks which envelope to deliver next.  The policy sees only (src, dst,
size) of traffic between correct nodes, plus full payloads touching
corrupted nodes.  It may corrupt up to ``f`` validators (instantly and
irreversibly) and any number of clients, inject envelopes from corrupted
nodes, and drop envelopes with a corrupted endpoint.  It cannot drop or
forge correct-to-correct traffic, so a run always drains to quiescence
unless it exhausts the step budget, which is reported as a liveness
failure.

The workload is a list of phases; ops within a phase run concurrently and
the queue drains to quiescence between phases, which is also the timeout
model: nodes finalize whatever is still pending when the queue is empty.
"""

from __future__ import annotations

import os
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from .ledger import TracePay, Verdict, conformance_check
from .messages import Fund, RedeemMsg, Transaction, wire_size
from .nodes import ClientNode, PreconditionError, ValidatorNode
from .params import SystemConfig, vrf_threshold
from .quorum import CandidateIndex, select_candidates, validation_seed
from .rvrf import KeyStore, RvrfProvider

DEFAULT_STEP_BUDGET = 10**6
_M64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _M64
    return x ^ (x >> 31)


def derive_seed(base: int, *indices: int) -> int:
    """Per-trial / per-component seed stream: fold indices through splitmix64.

    The base is mixed before the first index is folded in.  Folding the raw
    base would make the stream a function of ``base + index``, and nearby
    bases would then share most of their derived seeds (seed 5 trial 0 would
    equal seed 4 trial 1), which quietly correlates seed sweeps.
    """
    state = splitmix64(base & _M64)
    for index in indices:
        state = splitmix64((state + index) & _M64)
    return state


class StepBudgetExceeded(Exception):
    """The run did not reach quiescence within the step budget."""


@dataclass(frozen=True)
class Envelope:
    seq: int
    src: str
    dst: str
    msg: object
    size: int
    op_id: str
    depth: int


@dataclass(frozen=True)
class Observation:
    """What a policy sees of an envelope: metadata, payload only if corrupted."""

    seq: int
    src: str
    dst: str
    size: int
    payload: object | None


# Workload ops

@dataclass(frozen=True)
class OpPay:
    buyer: str
    fund: str
    seller: str


@dataclass(frozen=True)
class OpSettle:
    caller: str
    funds: tuple[str, ...]
    alias: str | None = None


@dataclass(frozen=True)
class OpRedeem:
    caller: str
    funds: tuple[str, ...]


@dataclass(frozen=True)
class OpPayUntil:
    """Sequential pays, one quiesced attempt at a time, until the target.

    mode "accepted" counts quorum acceptances of the fund across attempts;
    mode "confirmed" counts distinct payments the sellers hold proofs for.
    """

    buyer: str
    fund: str
    target: int
    sellers: tuple[str, ...]
    mode: str = "accepted"


@dataclass(frozen=True)
class OpInjectOverspend:
    """Synthetic trace poisoning: pretend `count` extra pays were accepted.

    Negative control for the conformance checker; no protocol messages.
    """

    fund: str
    buyer: str
    count: int


@dataclass
class RunMetrics:
    seed: int = 0
    steps: int = 0
    non_quiescent: bool = False
    messages_by_kind: dict = field(default_factory=dict)
    messages_by_op: dict = field(default_factory=dict)
    outcomes: list = field(default_factory=list)       # (op_id, kind, status, detail)
    pay_paths: dict = field(default_factory=dict)      # op_id -> {"seller": d, "buyer": d}
    accepted_by_fund: dict = field(default_factory=dict)
    selection_counts: dict = field(default_factory=dict)  # tx_id -> distinct signers
    corrupted_validators: list = field(default_factory=list)
    corrupted_clients: list = field(default_factory=list)
    adversary_log: list = field(default_factory=list)
    policy_data: dict = field(default_factory=dict)
    conformance: Verdict | None = None

    def op_kind(self, op_id: str) -> str:
        return op_id.split("#", 1)[0]


@dataclass
class RunResult:
    metrics: RunMetrics
    trace: list
    simulation: "Simulation"


class PolicyApi:
    """Capability surface handed to adversary policies."""

    def __init__(self, sim: "Simulation"):
        self._sim = sim

    @property
    def cfg(self) -> SystemConfig:
        return self._sim.cfg

    @property
    def validator_ids(self) -> tuple[str, ...]:
        return self._sim.validator_ids

    @property
    def client_ids(self) -> tuple[str, ...]:
        return tuple(self._sim.clients)

    @property
    def threshold(self) -> int:
        return self._sim.threshold

    @property
    def provider(self):
        """Evaluation oracle; useful only with a corrupted node's secret key."""
        return self._sim.provider

    def pk(self, node_id: str) -> bytes:
        """Public keys are directory information."""
        return self._sim.keys.pk(node_id)

    def node_for_pk(self, pk: bytes) -> str:
        return self._sim.keys.node_for_pk(pk)

    def corrupt(self, node_id: str, mode: str = "silent") -> bool:
        return self._sim._corrupt(node_id, mode)

    def corrupted(self) -> frozenset[str]:
        return frozenset(self._sim.corrupted_validators | self._sim.corrupted_clients)

    def node_state(self, node_id: str):
        """Memory of a corrupted node; correct nodes are out of reach."""
        if node_id not in self.corrupted():
            raise PermissionError(f"{node_id} is not corrupted")
        return self._sim.nodes[node_id]

    def secret_key(self, node_id: str) -> bytes:
        if node_id not in self.corrupted():
            raise PermissionError(f"{node_id} is not corrupted")
        return self._sim.keys.keypair(node_id).sk

    def peek(self, seq: int):
        """Payload of a pending envelope if either endpoint is corrupted."""
        env = self._sim._pending.get(seq)
        if env is None:
            return None
        if env.src in self.corrupted() or env.dst in self.corrupted():
            return env.msg
        return None

    def inject(self, src: str, dst: str, msg, op_id: str = "adv#0") -> bool:
        if src not in self.corrupted():
            return False
        self._sim.send(src, dst, msg, op_id, 0)
        return True

    def drop(self, seq: int) -> bool:
        env = self._sim._pending.get(seq)
        if env is None:
            return False
        if env.src in self.corrupted() or env.dst in self.corrupted():
            del self._sim._pending[seq]
            return True
        return False

    def log(self, entry: str) -> None:
        self._sim.metrics.adversary_log.append(entry)

    def data(self) -> dict:
        return self._sim.metrics.policy_data


class AdversaryPolicy:
    """Base policy: FIFO delivery, no observation, no corruption."""

    name = "passive"
    observes = False

    def setup(self, api: PolicyApi, rng: random.Random, params: dict) -> None:
        self.api = api
        self.rng = rng
        self.params = params

    def on_send(self, obs: Observation) -> None:
        pass

    def choose(self, pending) -> int | None:
        """Seq of the envelope to deliver next; None defers to oldest-first."""
        return None


class PassivePolicy(AdversaryPolicy):
    name = "passive"


class RushingReorderPolicy(AdversaryPolicy):
    """Delivers newest-first: a rushing adversary that inverts arrival order."""

    name = "rushing_reorder"
    observes = True

    def choose(self, pending) -> int | None:
        return max(pending) if pending else None


class OverspenderPolicy(AdversaryPolicy):
    """Corrupted buyer floods concurrent pays from one fund (workload-driven).

    Only clients are corrupted; validators stay honest, so the per-fund
    signature capacity they enforce is what the run measures.
    """

    name = "overspender"

    def setup(self, api, rng, params):
        super().setup(api, rng, params)
        for client in params.get("clients", "").split(","):
            client = client.strip()
            if client:
                api.corrupt(client)


class QuorumEraserPolicy(AdversaryPolicy):
    """Watches for a redeem broadcast, then corrupts f validators it accuses
    of being the hidden signers, silencing them to erase their state.

    Accusations draw on the only signal available: apparent sources of the
    earlier validation responses (uniform relays) filtered to the candidate
    ring read from a corrupted validator's copy of the redeem request.
    """

    name = "quorum_eraser"
    observes = True

    def setup(self, api, rng, params):
        super().setup(api, rng, params)
        self._relay_sources: list[str] = []
        self._triggered = False
        self._response_size: int | None = None

    def on_send(self, obs: Observation) -> None:
        validator_set = set(self.api.validator_ids)
        if obs.src in validator_set and obs.dst not in validator_set and obs.size == 80:
            # size-80 validator-to-client traffic is a validation response;
            # its src is the relay, the real signer stays hidden
            self._relay_sources.append(obs.src)

    def choose(self, pending) -> int | None:
        if not self._triggered:
            # one redeem item carries at least a quorum of signatures, which
            # dwarfs every other client-to-validator message kind
            redeem_floor = 48 + 96 + 48 * self.api.cfg.q
            validator_set = set(self.api.validator_ids)
            for seq in sorted(pending):
                obs = pending[seq]
                if (
                    obs.src not in validator_set
                    and obs.dst in validator_set
                    and obs.size >= redeem_floor
                ):
                    self._trigger(seq, obs)
                    break
        return None

    def _trigger(self, seq: int, obs: Observation) -> None:
        self._triggered = True
        api = self.api
        f = api.cfg.f
        api.corrupt(obs.dst)
        payload = api.peek(seq)
        candidates: list[str] = []
        if isinstance(payload, RedeemMsg) and payload.items:
            tx = payload.items[0][0]
            api.data()["eraser_tx"] = tx.tx_id
            cand_set = select_candidates(
                tx.to_bytes(), [api.pk(v) for v in api.validator_ids], api.cfg.V
            )
            candidates = [api.node_for_pk(pk) for pk in cand_set.members]
        pool = candidates or list(api.validator_ids)
        accused: list[str] = [obs.dst] if obs.dst in pool else []
        for relay in self._relay_sources:
            if len(accused) >= f:
                break
            if relay in pool and relay not in accused:
                accused.append(relay)
        remaining = [vid for vid in pool if vid not in accused]
        while len(accused) < f and remaining:
            pick = self.rng.choice(remaining)
            remaining.remove(pick)
            accused.append(pick)
        for vid in accused:
            api.corrupt(vid)
        api.data()["accused"] = sorted(accused)
        api.log(f"eraser corrupted {len(accused)} accused validators")


class NonceGrinderPolicy(AdversaryPolicy):
    """Corrupted seller grinds the validation nonce to maximize how many
    corrupted validators fall inside the selected quorum."""

    name = "nonce_grinder"

    def setup(self, api, rng, params):
        super().setup(api, rng, params)
        self.tries = int(params.get("grind", 256))
        for client in params.get("clients", "").split(","):
            client = client.strip()
            if client:
                api.corrupt(client)
        count = int(params.get("corrupt_validators", api.cfg.f))
        # lurking mode: corrupted for key access, behaviour unchanged
        self._moles = []
        for vid in api.validator_ids[:count]:
            if api.corrupt(vid, mode="lurking"):
                self._moles.append(vid)

    def pick_nonce(self, node_id: str, tx: Transaction) -> bytes | None:
        api = self.api
        d = tx.to_bytes()
        cands = select_candidates(d, [api.pk(v) for v in api.validator_ids], api.cfg.V)
        mole_keys = [
            api.secret_key(vid) for vid in self._moles
            if api.pk(vid) in cands.members
        ]
        best_nonce, best_count = None, -1
        for _ in range(self.tries):
            nonce = self.rng.getrandbits(256).to_bytes(32, "big")
            seed = validation_seed(d, nonce)
            count = sum(
                1 for sk in mole_keys
                if api.provider.eval(sk, seed) <= api.threshold
            )
            if count > best_count:
                best_nonce, best_count = nonce, count
        data = api.data().setdefault("grinder", [])
        data.append({"tx": tx.tx_id, "moles_in_ring": len(mole_keys), "best": best_count})
        return best_nonce


BUILTIN_POLICIES = {
    "passive": PassivePolicy,
    "rushing_reorder": RushingReorderPolicy,
    "quorum_eraser": QuorumEraserPolicy,
    "overspender": OverspenderPolicy,
    "nonce_grinder": NonceGrinderPolicy,
}


class Simulation:
    """One deterministic run over a fixed roster, genesis and workload."""

    def __init__(
        self,
        cfg: SystemConfig,
        genesis: dict[str, tuple[int, tuple[str, ...]]],
        phases: list[list],
        policy: AdversaryPolicy | None = None,
        seed: int = 0,
        step_budget: int | None = None,
        policy_params: dict | None = None,
    ):
        self.cfg = cfg
        self.seed = seed
        if step_budget is None:
            step_budget = int(os.environ.get("SIM_STEP_BUDGET", DEFAULT_STEP_BUDGET))
        self.step_budget = step_budget
        self.rng = random.Random(derive_seed(seed, 1))
        self.provider = RvrfProvider(cfg.max_out, salt_seed=derive_seed(seed, 2))
        self.threshold = vrf_threshold(cfg)

        self.validator_ids = tuple(f"v{i:03d}" for i in range(cfg.n))
        client_ids = set()
        for _fid, (_bal, owners) in genesis.items():
            client_ids.update(owners)
        for phase in phases:
            for op in phase:
                if isinstance(op, OpPay):
                    client_ids.update((op.buyer, op.seller))
                elif isinstance(op, (OpSettle, OpRedeem)):
                    client_ids.add(op.caller)
                elif isinstance(op, OpPayUntil):
                    client_ids.add(op.buyer)
                    client_ids.update(op.sellers)
        self.clients = tuple(sorted(client_ids))
        self.keys = KeyStore(list(self.validator_ids) + list(self.clients))
        self.index = CandidateIndex([self.keys.pk(v) for v in self.validator_ids], cfg.V)
        self.genesis = genesis
        self.genesis_funds = {
            fid: Fund(fid=fid, balance=Fraction(balance), owners=frozenset(owners))
            for fid, (balance, owners) in genesis.items()
        }

        self.nodes: dict[str, object] = {}
        for vid in self.validator_ids:
            self.nodes[vid] = ValidatorNode(vid, self)
        for cid in self.clients:
            self.nodes[cid] = ClientNode(cid, self)

        self.phases = phases
        self.trace: list = []
        self.metrics = RunMetrics(seed=seed)
        self.tx_signers: dict[str, set[str]] = {}
        self.tx_registry: dict[str, Transaction] = {}
        self.corrupted_validators: set[str] = set()
        self.corrupted_clients: set[str] = set()

        self._seq = 0
        self._fifo: deque[int] = deque()
        self._pending: dict[int, Envelope] = {}
        self._observations: dict[int, Observation] = {}

        self.policy = policy if policy is not None else PassivePolicy()
        self.policy.setup(PolicyApi(self), random.Random(derive_seed(seed, 3)), policy_params or {})

    # plumbing used by nodes

    def _enqueue(self, src: str, dst: str, msg, op_id: str, depth: int) -> None:
        if dst not in self.nodes:
            raise KeyError(f"send to unknown node {dst}")
        self._seq += 1
        env = Envelope(
            seq=self._seq, src=src, dst=dst, msg=msg,
            size=wire_size(msg), op_id=op_id, depth=depth,
        )
        self._pending[env.seq] = env
        self._fifo.append(env.seq)
        if self.policy.observes:
            corrupted = self.corrupted_validators | self.corrupted_clients
            obs = Observation(
                seq=env.seq, src=src, dst=dst, size=env.size,
                payload=msg if (src in corrupted or dst in corrupted) else None,
            )
            self._observations[env.seq] = obs
            self.policy.on_send(obs)

    def send(self, src: str, dst: str, msg, op_id: str, parent_depth: int) -> None:
        self._enqueue(src, dst, msg, op_id, parent_depth + 1)

    def gossip(self, src: str, dst: str, msg, op_id: str, parent_depth: int) -> None:
        """Send with a uniformly random validator as apparent source.

        The relay hop is folded into the envelope, so gossip delivery costs
        one critical-path step and exposes only the relay identity.
        """
        relay = self.rng.choice(self.validator_ids)
        self._enqueue(relay, dst, msg, op_id, parent_depth + 1)

    def nonce_for(self, node_id: str, tx: Transaction) -> bytes:
        if node_id in self.corrupted_clients and hasattr(self.policy, "pick_nonce"):
            nonce = self.policy.pick_nonce(node_id, tx)
            if nonce is not None:
                return nonce
        return self.rng.getrandbits(256).to_bytes(32, "big")

    def note_signed(self, tx: Transaction, validator_id: str) -> None:
        signers = self.tx_signers.setdefault(tx.tx_id, set())
        if validator_id in signers:
            return
        signers.add(validator_id)
        self.tx_registry.setdefault(tx.tx_id, tx)
        self.metrics.selection_counts[tx.tx_id] = len(signers)
        if len(signers) == self.cfg.q:
            # quorum reached: the payment is accepted from here on
            self.trace.append(
                TracePay(fund=tx.fund, buyer=tx.buyer, seller=tx.seller, accepted=True)
            )
            self.metrics.accepted_by_fund[tx.fund] = (
                self.metrics.accepted_by_fund.get(tx.fund, 0) + 1
            )

    def note_pay_path(self, op_id: str, side: str, depth: int) -> None:
        entry = self.metrics.pay_paths.setdefault(op_id, {})
        entry.setdefault(side, depth)

    def note_outcome(self, op_id: str, kind: str, status: str, detail: str = "") -> None:
        self.metrics.outcomes.append((op_id, kind, status, detail))

    def _corrupt(self, node_id: str, mode: str = "silent") -> bool:
        node = self.nodes.get(node_id)
        if node is None:
            return False
        if isinstance(node, ValidatorNode):
            if node_id in self.corrupted_validators:
                return True
            if len(self.corrupted_validators) >= self.cfg.f:
                self.metrics.adversary_log.append(
                    f"corruption of {node_id} refused: budget f={self.cfg.f} spent"
                )
                return False
            self.corrupted_validators.add(node_id)
            node.corrupt_mode = None if mode == "lurking" else mode
            self.metrics.corrupted_validators.append(node_id)
            return True
        node.corrupted = True
        self.corrupted_clients.add(node_id)
        if node_id not in self.metrics.corrupted_clients:
            self.metrics.corrupted_clients.append(node_id)
        return True

    # event loop

    def _deliver(self, env: Envelope) -> None:
        self.metrics.steps += 1
        kind = type(env.msg).__name__
        self.metrics.messages_by_kind[kind] = self.metrics.messages_by_kind.get(kind, 0) + 1
        op_kind = self.metrics.op_kind(env.op_id)
        self.metrics.messages_by_op[op_kind] = self.metrics.messages_by_op.get(op_kind, 0) + 1
        self.nodes[env.dst].handle(env.src, env.msg, env.depth, env.op_id)

    def _drain(self) -> None:
        while self._pending:
            if self.metrics.steps >= self.step_budget:
                self.metrics.non_quiescent = True
                raise StepBudgetExceeded(
                    f"step budget {self.step_budget} exhausted with "
                    f"{len(self._pending)} envelopes in flight"
                )
            seq = None
            if self.policy.observes:
                view = {s: self._observations[s] for s in self._pending}
                seq = self.policy.choose(view)
                if seq is not None and seq not in self._pending:
                    seq = None
            if seq is None:
                while self._fifo and self._fifo[0] not in self._pending:
                    self._fifo.popleft()
                if not self._fifo:
                    break
                seq = self._fifo.popleft()
            env = self._pending.pop(seq)
            self._observations.pop(seq, None)
            self._deliver(env)

    def _quiesce_nodes(self) -> None:
        for vid in self.validator_ids:
            self.nodes[vid].on_quiescence()
        for cid in self.clients:
            self.nodes[cid].on_quiescence()

    def _start_op(self, op, op_id: str) -> None:
        try:
            if isinstance(op, OpPay):
                self.nodes[op.buyer].start_pay(op_id, op.fund, op.seller)
            elif isinstance(op, OpSettle):
                self.nodes[op.caller].start_settle(op_id, op.funds, op.alias)
            elif isinstance(op, OpRedeem):
                self.nodes[op.caller].start_redeem(op_id, op.funds)
            elif isinstance(op, OpInjectOverspend):
                for i in range(op.count):
                    self.trace.append(
                        TracePay(fund=op.fund, buyer=op.buyer,
                                 seller=f"ghost{i}", accepted=True)
                    )
                self.note_outcome(op_id, "inject", "poisoned", op.fund)
            else:
                raise TypeError(f"unknown op {op!r}")
        except PreconditionError as exc:
            self.note_outcome(op_id, "op", "precondition", str(exc))

    def _until_progress(self, op: OpPayUntil):
        fid = self.nodes[op.buyer].resolve(op.fund)
        if op.mode == "confirmed":
            def progress() -> int:
                return sum(
                    1
                    for seller in sorted(set(op.sellers))
                    for tx, _proof in self.nodes[seller].sales.values()
                    if tx.fund == fid
                )
        else:
            def progress() -> int:
                return self.metrics.accepted_by_fund.get(fid, 0)
        return progress

    def run(self) -> RunResult:
        op_counter = 0
        try:
            for phase in self.phases:
                until_ops = [op for op in phase if isinstance(op, OpPayUntil)]
                plain_ops = [op for op in phase if not isinstance(op, OpPayUntil)]
                for op in plain_ops:
                    kind = type(op).__name__.removeprefix("Op").lower()
                    self._start_op(op, f"{kind}#{op_counter}")
                    op_counter += 1
                if plain_ops:
                    self._drain()
                    self._quiesce_nodes()
                for op in until_ops:
                    progress = self._until_progress(op)
                    baseline = progress()
                    for seller in op.sellers:
                        if progress() - baseline >= op.target:
                            break
                        self._start_op(OpPay(op.buyer, op.fund, seller), f"payuntil#{op_counter}")
                        op_counter += 1
                        self._drain()
                        self._quiesce_nodes()
        except StepBudgetExceeded:
            self._quiesce_nodes()
        self.metrics.conformance = conformance_check(
            self.trace, self.genesis, self.cfg.s2
        )
        return RunResult(metrics=self.metrics, trace=self.trace, simulation=self)
