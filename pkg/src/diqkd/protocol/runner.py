"""Two-party protocol run over an in-process channel.

Alice and Bob are sequential state machines; every message they exchange is
framed with the wire format from :mod:`.framing` and recorded in order. All
randomness comes from named streams derived from a single root seed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..bounds import EstimationParams, invert_mu
from ..chsh import P_QUANTUM
from ..linalg import ValidationError
from .devices import DeviceModel
from .framing import (
    Message,
    MessageType,
    decode_frame,
    pack_bits,
    pack_u32_array,
    unpack_bits,
    unpack_u32_array,
)
from .postprocess import (
    asymptotic_key_length,
    estimate_S,
    final_key_length,
    privacy_amplify,
    reconcile,
    seed_bits,
    toeplitz_seed_length,
    verification_tag,
)

STREAMS = ("pe_positions", "settings", "devices", "symmetrization", "permutation", "hashing")
EC_MODELS = ("ideal-leakage",)

ABORT_PE = "parameter estimation below threshold"
ABORT_QBER = "error rate above q_max"
ABORT_VERIFY = "verification failed"


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    m: int
    eps: float = 1e-6
    p_thres: float = 0.8
    q_max: float = 0.11
    r: int = 0
    ec_model: str = "ideal-leakage"
    seed: int = 0
    verification_tag_bits: int = 64
    symmetrize: bool = True

    def __post_init__(self):
        for name in ("n", "m"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ValidationError(f"{name} >= 1", repr(v))
        if not 0.75 < self.p_thres <= P_QUANTUM + 1e-15:
            raise ValidationError("p_thres in (0.75, cos^2(pi/8)]", repr(self.p_thres))
        if not 0.0 < self.eps < 1.0:
            raise ValidationError("eps in (0, 1)", repr(self.eps))
        if not 0.0 <= self.q_max <= 1.0:
            raise ValidationError("q_max in [0, 1]", repr(self.q_max))
        if not isinstance(self.r, (int, np.integer)) or not 0 <= self.r < self.m:
            raise ValidationError("0 <= r < m", repr(self.r))
        if self.ec_model not in EC_MODELS:
            raise ValidationError("ec_model is ideal-leakage", repr(self.ec_model))
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ValidationError("seed is a 64-bit value", repr(self.seed))
        if not isinstance(self.verification_tag_bits, (int, np.integer)) or not (
            1 <= self.verification_tag_bits <= 1024
        ):
            raise ValidationError("verification_tag_bits in [1, 1024]", repr(self.verification_tag_bits))

    @classmethod
    def from_dict(cls, doc: dict) -> "ProtocolConfig":
        if not isinstance(doc, dict):
            raise ValidationError("config is an object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ValidationError("config has no unknown fields", ", ".join(unknown))
        missing = sorted({"n", "m"} - set(doc))
        if missing:
            raise ValidationError("config has required fields n and m", ", ".join(missing))
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    def estimation_params(self) -> EstimationParams:
        return EstimationParams(self.n, self.m, 1, self.r, self.eps, self.p_thres)

    @property
    def preshared_bits(self) -> int:
        """Secret bits spent encrypting the estimation positions."""
        return self.m * math.ceil(math.log2(self.n + self.m))


def streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators keyed by purpose, all derived from ``seed``."""
    return {
        name: np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=int(seed), spawn_key=(i,)))
        )
        for i, name in enumerate(STREAMS)
    }


@dataclass(frozen=True)
class TrialRecord:
    index: int
    role: str  # "estimation" or "key"
    a: int
    b: int
    x: int
    y: int
    flip: int


@dataclass(frozen=True, eq=False)
class TrialTable:
    """Column store of trial records in post-permutation order.

    ``index`` is the trial's position before the permutation; ``role`` is 0
    for estimation and 1 for key trials.
    """

    index: np.ndarray
    role: np.ndarray
    a: np.ndarray
    b: np.ndarray
    x: np.ndarray
    y: np.ndarray
    flip: np.ndarray

    def __len__(self) -> int:
        return int(self.index.size)

    def select(self, mask) -> "TrialTable":
        return TrialTable(*(getattr(self, f.name)[mask] for f in fields(self)))

    def records(self) -> list[TrialRecord]:
        return [
            TrialRecord(int(i), "estimation" if r == 0 else "key", int(a), int(b), int(x), int(y), int(f))
            for i, r, a, b, x, y, f in zip(self.index, self.role, self.a, self.b, self.x, self.y, self.flip)
        ]


@dataclass(eq=False)
class ProtocolTranscript:
    config: ProtocolConfig
    device: dict
    messages: list[Message] = field(default_factory=list)
    trials: TrialTable | None = None
    mu: float = math.nan
    S_est: float = math.nan
    Y: int = -1
    q_est: float = math.nan
    aborted: bool = False
    abort_reason: str = ""
    verification_ok: bool | None = None
    leak_ec: int = 0
    final_length: int = 0
    asymptotic_length: int = 0
    alice_key: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))
    bob_key: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8))

    @property
    def preshared_bits(self) -> int:
        return self.config.preshared_bits

    @property
    def completed(self) -> bool:
        return not self.aborted

    def summary(self) -> dict:
        return {
            "kind": "summary",
            "config": self.config.to_dict(),
            "device": self.device,
            "mu": self.mu,
            "S_est": self.S_est,
            "Y": self.Y,
            "q_est": None if math.isnan(self.q_est) else self.q_est,
            "aborted": self.aborted,
            "abort_reason": self.abort_reason,
            "verification_ok": self.verification_ok,
            "leak_ec": self.leak_ec,
            "final_length": self.final_length,
            "asymptotic_length": self.asymptotic_length,
            "preshared_bits": self.preshared_bits,
            "alice_key": _bits_hex(self.alice_key),
            "bob_key": _bits_hex(self.bob_key),
            "n_messages": len(self.messages),
        }

    def to_jsonl(self) -> str:
        """One record per message, one per trial, then the summary."""
        lines = []
        for seq, msg in enumerate(self.messages):
            lines.append({
                "kind": "message",
                "seq": seq,
                "sender": msg.sender,
                "type": f"{int(msg.type):02x}",
                "confidential": msg.confidential,
                "frame": msg.frame().hex(),
            })
        if self.trials is not None:
            t = self.trials
            for i in range(len(t)):
                lines.append({
                    "kind": "trial",
                    "index": int(t.index[i]),
                    "role": "estimation" if t.role[i] == 0 else "key",
                    "a": int(t.a[i]), "b": int(t.b[i]),
                    "x": int(t.x[i]), "y": int(t.y[i]),
                    "flip": int(t.flip[i]),
                })
        lines.append(self.summary())
        return "".join(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n" for rec in lines)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


def _bits_hex(bits) -> dict:
    bits = np.asarray(bits, dtype=np.uint8)
    return {"len": int(bits.size), "hex": np.packbits(bits, bitorder="big").tobytes().hex()}


def _u64(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63, dtype=np.int64)) * 2 + int(rng.integers(0, 2))


class _Channel:
    """Ordered, loss-free duplex channel; records every frame sent."""

    def __init__(self):
        self.log: list[Message] = []
        self._queues = {"alice": [], "bob": []}

    def send(self, sender: str, mtype: MessageType, payload: bytes, confidential: bool = False):
        msg = Message(sender, mtype, payload, confidential)
        self.log.append(msg)
        receiver = "bob" if sender == "alice" else "alice"
        self._queues[receiver].append(msg.frame())

    def receive(self, who: str, expect: MessageType) -> bytes:
        frame = self._queues[who].pop(0)
        mtype, payload, _ = decode_frame(frame)
        if mtype != expect and mtype != MessageType.ABORT:
            raise RuntimeError(f"{who} expected {expect.name}, got {mtype.name}")
        return payload


class _Party:
    def __init__(self, name: str, config: ProtocolConfig, chan: _Channel):
        self.name = name
        self.config = config
        self.chan = chan

    def send(self, mtype, payload=b"", confidential=False):
        self.chan.send(self.name, mtype, payload, confidential)

    def receive(self, mtype) -> bytes:
        return self.chan.receive(self.name, mtype)


def run_protocol(
    config: ProtocolConfig, devices: DeviceModel, corrupt_bit: int | None = None
) -> ProtocolTranscript:
    """Execute one protocol instance and return its full transcript.

    ``corrupt_bit`` flips one bit of Alice's corrected string before the
    verification tags are compared (fault injection).
    """
    params = config.estimation_params()
    mu = invert_mu(params, 2.0 * config.eps / 9.0)
    rng = streams(config.seed)
    n, m = config.n, config.m
    total = n + m
    chan = _Channel()
    alice, bob = _Party("alice", config, chan), _Party("bob", config, chan)
    tr = ProtocolTranscript(config, devices.describe(), mu=mu)

    # (i) estimation positions, sent encrypted under the pre-shared key
    pe = np.sort(rng["pe_positions"].choice(total, size=m, replace=False))
    alice.send(MessageType.PE_INDICES, pack_u32_array(pe), confidential=True)
    pe_bob, _ = unpack_u32_array(bob.receive(MessageType.PE_INDICES))
    role = np.ones(total, dtype=np.uint8)
    role[pe_bob] = 0

    # (ii) settings and device invocation
    alice.send(MessageType.STATE_REQUEST, struct.pack(">I", total))
    bob.receive(MessageType.STATE_REQUEST)
    s_rng = rng["settings"]
    a = np.full(total, 2, dtype=np.uint8)
    b = np.zeros(total, dtype=np.uint8)
    est = role == 0
    a[est] = s_rng.integers(0, 2, size=m, dtype=np.uint8)
    b[est] = s_rng.integers(0, 2, size=m, dtype=np.uint8)
    d_rng = rng["devices"]
    comp = devices.schedule(total, d_rng)
    x, y = devices.sample(comp, a, b, d_rng)

    # (iii) settings announcement
    alice.send(MessageType.SETTINGS, a.tobytes())
    bob.send(MessageType.SETTINGS, pack_bits(b))
    a_seen = np.frombuffer(bob.receive(MessageType.SETTINGS), dtype=np.uint8)
    b_seen, _ = unpack_bits(alice.receive(MessageType.SETTINGS))
    if not (np.array_equal(a_seen, a) and np.array_equal(b_seen, b)):
        raise RuntimeError("settings corrupted on the channel")

    # (iv) symmetrization: both flip wherever Alice announces a flip
    if config.symmetrize:
        flips = rng["symmetrization"].integers(0, 2, size=total, dtype=np.uint8)
    else:
        flips = np.zeros(total, dtype=np.uint8)
    alice.send(MessageType.FLIPS, pack_bits(flips))
    flips_bob, _ = unpack_bits(bob.receive(MessageType.FLIPS))
    x = x ^ flips
    y = y ^ flips_bob

    # (v) public permutation
    perm_seed = _u64(rng["permutation"])
    alice.send(MessageType.PERMUTATION_SEED, struct.pack(">Q", perm_seed))
    (perm_seed_bob,) = struct.unpack(">Q", bob.receive(MessageType.PERMUTATION_SEED))
    perm = np.random.Generator(np.random.Philox(perm_seed_bob)).permutation(total)
    trials = TrialTable(perm.astype(np.int64), role[perm], a[perm], b[perm], x[perm], y[perm], flips[perm])
    tr.trials = trials
    est = trials.role == 0
    key = ~est

    # (vi) parameter estimation: Bob reveals his estimation outcomes
    bob.send(MessageType.ESTIMATE, pack_bits(trials.y[est]))
    y_pe, _ = unpack_bits(alice.receive(MessageType.ESTIMATE))
    pe_view = trials.select(est)
    pe_view = TrialTable(pe_view.index, pe_view.role, pe_view.a, pe_view.b, pe_view.x, y_pe, pe_view.flip)
    S_est, Y = estimate_S(pe_view)
    tr.S_est, tr.Y = S_est, Y
    passed = Y >= m * (config.p_thres + mu)
    alice.send(MessageType.ESTIMATE, struct.pack(">Id?", Y, S_est, passed))
    bob.receive(MessageType.ESTIMATE)
    if not passed:
        return _abort(tr, alice, bob, ABORT_PE)

    # (vii) reconciliation toward Bob's string, then verification
    alice_raw, bob_raw = trials.x[key], trials.y[key]
    errors = int(np.count_nonzero(alice_raw != bob_raw))
    q_est = errors / n
    tr.q_est = q_est
    eps_cor = 2.0 ** -config.verification_tag_bits
    tag_seed = _u64(rng["hashing"])
    rec = reconcile(alice_raw, bob_raw, q_est, eps_cor, tag_seed=tag_seed, corrupt_bit=corrupt_bit)
    tr.leak_ec = rec.leak
    bob.send(MessageType.RECONCILIATION, struct.pack(">II", rec.leak, errors))
    alice.receive(MessageType.RECONCILIATION)
    if q_est > config.q_max:
        return _abort(tr, alice, bob, ABORT_QBER)
    tag = verification_tag(rec.corrected, rec.tag_len, tag_seed)
    alice.send(MessageType.VERIFICATION_TAG, struct.pack(">Q", tag_seed) + pack_bits(tag))
    payload = bob.receive(MessageType.VERIFICATION_TAG)
    (seed_seen,) = struct.unpack_from(">Q", payload)
    tag_seen, _ = unpack_bits(payload, 8)
    ok = bool(np.array_equal(tag_seen, verification_tag(bob_raw, rec.tag_len, seed_seen)))
    bob.send(MessageType.VERIFICATION_TAG, bytes([ok]))
    alice.receive(MessageType.VERIFICATION_TAG)
    tr.verification_ok = ok
    if not ok:
        return _abort(tr, alice, bob, ABORT_VERIFY)

    # (viii) privacy amplification at the certified floor
    length = final_key_length(S_est, mu, q_est, n, rec.leak, config.eps)
    tr.final_length = length
    tr.asymptotic_length = asymptotic_key_length(S_est, mu, q_est, n, rec.leak)
    pa_seed = _u64(rng["hashing"])
    alice.send(MessageType.PA_SEED, struct.pack(">QI", pa_seed, length))
    pa_seed_bob, length_bob = struct.unpack(">QI", bob.receive(MessageType.PA_SEED))
    tr.alice_key = privacy_amplify(rec.corrected, length, seed_bits(pa_seed, toeplitz_seed_length(n, length)))
    tr.bob_key = privacy_amplify(bob_raw, length_bob, seed_bits(pa_seed_bob, toeplitz_seed_length(n, length_bob)))
    tr.messages = chan.log
    return tr


def _abort(tr: ProtocolTranscript, alice: _Party, bob: _Party, reason: str) -> ProtocolTranscript:
    alice.send(MessageType.ABORT, reason.encode())
    bob.receive(MessageType.ABORT)
    tr.aborted = True
    tr.abort_reason = reason
    tr.messages = alice.chan.log
    return tr


def read_jsonl(path_or_text) -> list[dict]:
    text = path_or_text
    if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
        text = Path(path_or_text).read_text()
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def replay(records: list[dict], devices: DeviceModel) -> ProtocolTranscript:
    """Re-run the protocol from the config stored in an exported transcript."""
    summary = records[-1]
    if summary.get("kind") != "summary":
        raise ValidationError("transcript ends with a summary record")
    return run_protocol(ProtocolConfig.from_dict(summary["config"]), devices)


def verify_replay(records: list[dict], devices: DeviceModel) -> bool:
    """True when re-running reproduces every exported record exactly."""
    again = read_jsonl(replay(records, devices).to_jsonl())
    return again == records
