"""Monte Carlo harnesses: estimation-phase tail frequencies, collective
attacks with explicit eavesdropper states, and batches of protocol runs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..bounds import EstimationParams, invert_mu, lemma1_bound
from ..chsh import ChshStrategy
from ..linalg import (
    BELL_BASIS,
    DensityOperator,
    ValidationError,
    as_matrix,
    bell_coefficients,
    partial_trace_matrix,
    shannon_entropy,
    von_neumann_entropy,
)
from .devices import DeviceModel
from .runner import ProtocolConfig, run_protocol


@dataclass(frozen=True)
class TailEstimate:
    mu_grid: np.ndarray
    frequency: np.ndarray
    runs: int
    p_ref: float

    def standard_error(self) -> np.ndarray:
        f = self.frequency
        return np.sqrt(np.maximum(f * (1 - f), 1.0 / self.runs) / self.runs)

    def bounds(self, params: EstimationParams) -> np.ndarray:
        return np.array([lemma1_bound(params, mu) for mu in self.mu_grid])


def monte_carlo_tail(
    devices: DeviceModel,
    m: int,
    runs: int,
    mu_grid,
    seed: int = 0,
    p_ref: float | None = None,
    chunk: int = 500,
) -> TailEstimate:
    """Frequency of ``Y/m > p_ref + mu`` over independent estimation phases.

    Each run draws uniform settings for ``m`` trials and samples a success
    bit per trial from the device's component at that trial. ``p_ref``
    defaults to the largest per-component CHSH success probability.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    succ = devices.success_probabilities()  # (K, 2, 2)
    if p_ref is None:
        p_ref = float(devices.chsh_success().max())
    rng = np.random.Generator(np.random.Philox(seed))
    thresholds = m * (p_ref + mu_grid)
    counts = np.zeros(mu_grid.size, dtype=np.int64)
    done = 0
    while done < runs:
        c = min(chunk, runs - done)
        if devices.assignment is not None:
            comp = np.broadcast_to(np.asarray(devices.assignment[:m]), (c, m))
        else:
            comp = rng.choice(devices.n_components, size=(c, m), p=devices.weights)
        a = rng.integers(0, 2, size=(c, m))
        b = rng.integers(0, 2, size=(c, m))
        y = (rng.random((c, m)) < succ[comp, a, b]).sum(axis=1)
        counts += (y[:, None] > thresholds[None, :]).sum(axis=0)
        done += c
    return TailEstimate(mu_grid, counts / runs, runs, p_ref)


def planted_tail_device(m: int, r: int, p_low: float, p_high: float) -> DeviceModel:
    """``m - r`` estimation trials at success ``p_low`` and ``r`` at ``p_high``.

    Components are classical mixtures of perfect and anti-correlated boxes
    chosen so every setting pair succeeds with the given probability.
    """
    tables = np.stack([_uniform_success_table(p_low), _uniform_success_table(p_high)])
    assignment = np.zeros(m, dtype=np.int64)
    assignment[m - r:] = 1
    return DeviceModel.planted(tables, assignment)


def _uniform_success_table(p: float) -> np.ndarray:
    """No-signalling box with uniform marginals and ``P(x xor y = ab) = p``."""
    t = np.zeros((3, 2, 2, 2))
    for a in range(3):
        for b in range(2):
            target = (a & b) if a < 2 else 0
            pa = p if a < 2 else 1.0
            for x in range(2):
                for y in range(2):
                    t[a, b, x, y] = 0.5 * (pa if (x ^ y) == target else 1.0 - pa)
    return t


@dataclass(frozen=True, eq=False)
class EveSideInfo:
    """Bob's key bits plus Eve's normalised state conditioned on each value."""

    bits: np.ndarray
    conditional: tuple[DensityOperator, DensityOperator]
    probabilities: np.ndarray = field(repr=False)

    def state(self, trial: int) -> DensityOperator:
        return self.conditional[int(self.bits[trial])]


def _bell_diagonal_weights(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    diag, off = bell_coefficients(rho)
    if off > tol:
        raise ValidationError("state is Bell-diagonal", f"off-diagonal weight {off:.3g}")
    return np.clip(diag, 0.0, None)


def simulate_collective_eve(strategy: ChshStrategy, n: int, seed: int = 0) -> EveSideInfo:
    """Sample Bob's setting-0 outcome on ``n`` copies; Eve holds the purification.

    The purification is ``sum_k sqrt(lam_k) |Bell_k>_AB |k>_E``; Eve's state
    given Bob's outcome is obtained by projecting B and tracing out A.
    """
    if strategy.d_A != 2 or strategy.d_B != 2:
        raise ValidationError("two-qubit strategy", f"d_A={strategy.d_A}, d_B={strategy.d_B}")
    rho = strategy.state.matrix
    lam = _bell_diagonal_weights(rho)
    psi = (BELL_BASIS * np.sqrt(lam)[None, :]).reshape(-1)  # index order (A, B, E)
    rho_abe = np.outer(psi, psi.conj())
    plus, minus = strategy.bob_obs[0].projectors()
    conditional, probs = [], []
    for proj in (plus, minus):
        op = np.kron(np.kron(np.eye(2), proj), np.eye(4))
        sub = partial_trace_matrix(op @ rho_abe @ op, (2, 2, 4), keep=(2,))
        p = float(np.trace(sub).real)
        probs.append(p)
        conditional.append(sub / p if p > 1e-15 else np.eye(4) / 4)
    probs = np.array(probs) / sum(probs)
    rng = np.random.Generator(np.random.Philox(seed))
    bits = (rng.random(n) >= probs[0]).astype(np.uint8)  # bit 0 <-> outcome +1
    states = tuple(DensityOperator(0.5 * (c + c.conj().T)) for c in conditional)
    return EveSideInfo(bits, states, probs)


def conditional_entropy_estimate(info: EveSideInfo) -> float:
    """``H(X|E) = H(p) + sum_x p_x S(rho_x) - S(sum_x p_x rho_x)`` with empirical ``p``."""
    p1 = float(info.bits.mean()) if info.bits.size else 0.0
    p = np.array([1.0 - p1, p1])
    rho_avg = sum(pi * as_matrix(s) for pi, s in zip(p, info.conditional))
    return (
        shannon_entropy(p)
        + sum(pi * von_neumann_entropy(s) for pi, s in zip(p, info.conditional))
        - von_neumann_entropy(rho_avg)
    )


@dataclass(frozen=True)
class RunStats:
    S_est: np.ndarray
    q_est: np.ndarray  # NaN where the run aborted before reconciliation
    aborted: np.ndarray
    reasons: tuple
    final_length: np.ndarray
    keys_equal: np.ndarray

    @property
    def abort_rate(self) -> float:
        return float(self.aborted.mean())


def _one_run(args):
    config, devices = args
    tr = run_protocol(config, devices)
    return (tr.S_est, tr.q_est, tr.aborted, tr.abort_reason, tr.final_length,
            bool(np.array_equal(tr.alice_key, tr.bob_key)))


def run_many(config: ProtocolConfig, devices: DeviceModel, runs: int, workers: int = 1) -> RunStats:
    """Independent protocol instances with seeds ``config.seed + i``."""
    jobs = [(replace(config, seed=(config.seed + i) % 2**64), devices) for i in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_one_run, jobs, chunksize=max(1, runs // (4 * workers))))
    else:
        out = [_one_run(j) for j in jobs]
    cols = list(zip(*out)) if out else [()] * 6
    return RunStats(
        S_est=np.array(cols[0], dtype=float),
        q_est=np.array(cols[1], dtype=float),
        aborted=np.array(cols[2], dtype=bool),
        reasons=tuple(cols[3]),
        final_length=np.array(cols[4], dtype=np.int64),
        keys_equal=np.array(cols[5], dtype=bool),
    )


def abort_soundness(config: ProtocolConfig, devices: DeviceModel, runs: int, workers: int = 1) -> dict:
    """Empirical pass rate against the tail bound for devices below threshold."""
    p_max = float(devices.chsh_success().max())
    if p_max > config.p_thres + 1e-12:
        raise ValidationError("every component has p_max <= p_thres", f"{p_max} > {config.p_thres}")
    stats = run_many(config, devices, runs, workers)
    params = config.estimation_params()
    mu = invert_mu(params, 2.0 * config.eps / 9.0)
    pass_rate = 1.0 - stats.abort_rate
    return {
        "pass_rate": pass_rate,
        "bound": lemma1_bound(params, mu),
        "mc_error": 3.0 * math.sqrt(max(pass_rate * (1 - pass_rate), 1.0 / runs) / runs),
        "p_max": p_max,
    }
