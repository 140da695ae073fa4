"""Closed-form security quantities: key rate, conditional entropy of the key
bit for Bell-diagonal states, the parameter-estimation tail bound and its
inversion, and the finite de Finetti bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chsh import TSIRELSON, s_max_horodecki
from .linalg import (
    BellDiagonal,
    ValidationError,
    bell_diagonal_to_density,
    binary_entropy,
    shannon_entropy,
)

COS4_PI8 = math.cos(math.pi / 8) ** 4
LN2 = math.log(2.0)
S_TOL = 1e-9


def _entropy_arg(S: float) -> float:
    """``(1 + sqrt((S/2)^2 - 1)) / 2`` with S clamped to [2, 2 sqrt2]."""
    s = min(max(S, 2.0), TSIRELSON)
    return min(1.0, 0.5 * (1.0 + math.sqrt(max((s / 2.0) ** 2 - 1.0, 0.0))))


def key_rate(S: float, q: float) -> float:
    """Asymptotic key rate ``1 - h((1 + sqrt((S/2)^2 - 1))/2) - h(q)`` in bits per trial.

    ``S`` below 2 is treated as 2. The result is not clamped at zero.
    """
    if not math.isfinite(S):
        raise ValueError(f"S must be finite, got {S!r}")
    if S > TSIRELSON + S_TOL:
        raise ValueError(f"S = {S!r} exceeds the quantum bound 2*sqrt(2)")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be a probability, got {q!r}")
    return 1.0 - binary_entropy(_entropy_arg(S)) - binary_entropy(q)


def lambda_pm(lam: BellDiagonal, phi: float) -> tuple[float, float]:
    """Doubly-degenerate eigenvalues of Eve's state joint with Bob's bit.

    Bob measures ``cos(phi) Z + sin(phi) X`` on his half of the Bell-diagonal
    state; Eve holds the purification.
    """
    l = lam.as_array()
    d1 = l[0] - l[1]
    d2 = l[2] - l[3]
    rad = math.sqrt(max(d1 * d1 + d2 * d2 + 2.0 * math.cos(2.0 * phi) * d1 * d2, 0.0))
    return 0.25 * (1.0 + rad), 0.25 * (1.0 - rad)


def h_x_given_e(lam: BellDiagonal) -> float:
    """``H(X|E) = 1 + h(l_Phi+ + l_Phi-) - H(lambda)`` for Bob measuring Z."""
    l = lam.as_array()
    p = float(np.clip(l[0] + l[2], 0.0, 1.0))
    return 1.0 + binary_entropy(p) - shannon_entropy(l)


def pironio_lemma4_gap(lam: BellDiagonal) -> tuple[float, float]:
    """Both sides of ``H(lambda) - h(l_Phi+ + l_Phi-) <= h((1 + sqrt((S_max/2)^2 - 1))/2)``.

    ``S_max`` comes from the correlation-matrix closed form; the right side
    is 1 when ``S_max <= 2``.
    """
    l = lam.as_array()
    lhs = shannon_entropy(l) - binary_entropy(float(np.clip(l[0] + l[2], 0.0, 1.0)))
    s = s_max_horodecki(bell_diagonal_to_density(lam))
    rhs = 1.0 if s <= 2.0 else binary_entropy(_entropy_arg(s))
    return lhs, rhs


@dataclass(frozen=True)
class EstimationParams:
    """Parameters of the parameter-estimation tail bound.

    n: key trials, m: estimation trials, k: discarded subsystems,
    r: de Finetti deviation count, eps: security parameter,
    p: CHSH success probability of the reference state.
    """

    n: int
    m: int
    k: int = 1
    r: int = 0
    eps: float = 1e-6
    p: float = 0.8

    def __post_init__(self):
        for name in ("n", "m", "k"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} positive", repr(getattr(self, name)))
        if not 0 <= self.r <= min(self.n, self.m):
            raise ValidationError("0 <= r <= min(n, m)", f"r={self.r}")
        if not 0.0 < self.eps < 1.0:
            raise ValidationError("eps in (0, 1)", repr(self.eps))
        if not 0.0 <= self.p <= 1.0:
            raise ValidationError("p in [0, 1]", repr(self.p))


@dataclass(frozen=True)
class TailBoundResult:
    mu: float
    bound: float
    exponent: float
    Y_threshold: float


def _counting_term(params: EstimationParams) -> float:
    nm = params.n + params.m
    return nm * binary_entropy(params.r / nm) * LN2


def lemma1_exponent(params: EstimationParams, mu: float) -> float:
    """Natural-log exponent of the tail bound; ``+inf`` when the bound is vacuous.

    Uses ``(m - r)`` in the denominator (the Hoeffding step runs over the
    first ``m - r`` estimation subsystems).
    """
    m, r, p = params.m, params.r, params.p
    if m <= r:
        raise ValidationError("m > r", f"m={m}, r={r}")
    slack = m * mu - r * (1.0 - p)
    if mu <= 0 or slack <= 0:
        return math.inf
    return -2.0 * slack * slack / ((m - r) * COS4_PI8) + _counting_term(params)


def lemma1_bound(params: EstimationParams, mu: float) -> float:
    """Upper bound on ``P(Y/m > p + mu)``, clamped to [0, 1]."""
    e = lemma1_exponent(params, mu)
    return 1.0 if e >= 0 else math.exp(e)


def tail_bound(params: EstimationParams, mu: float) -> TailBoundResult:
    return TailBoundResult(
        mu=mu,
        bound=lemma1_bound(params, mu),
        exponent=lemma1_exponent(params, mu),
        Y_threshold=params.m * (params.p + mu),
    )


class InfeasibleError(ValueError):
    """No admissible slack satisfies the requested failure probability."""


def invert_mu(params: EstimationParams, target: float, check_range: bool = True) -> float:
    """Smallest ``mu >= 0`` with ``lemma1_bound(params, mu) <= target``.

    Bisection on the monotone exponent, run until the bracket collapses to
    adjacent floats. With ``check_range`` the result must leave room for the
    test to pass at all (``p + mu <= 1``).
    """
    if not 0.0 < target <= 1.0:
        raise InfeasibleError(f"target must lie in (0, 1], got {target!r}")
    if params.m <= params.r:
        raise InfeasibleError(f"requires m > r (m={params.m}, r={params.r})")
    if target == 1.0:
        return 0.0
    log_t = math.log(target)
    lo = params.r * (1.0 - params.p) / params.m  # exponent is +inf at or below lo
    step = 1e-3
    hi = lo + step
    while lemma1_exponent(params, hi) > log_t:
        step *= 2.0
        hi = lo + step
        if hi > 1e12:
            raise InfeasibleError("tail bound cannot reach the target")
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if lemma1_exponent(params, mid) > log_t:
            lo = mid
        else:
            hi = mid
    if check_range and params.p + hi > 1.0:
        raise InfeasibleError(
            f"required slack mu={hi:.6g} violates p + mu <= 1 (p={params.p}); "
            "estimation could never pass"
        )
    return hi


def mu_closed_form(params: EstimationParams, target: float) -> float:
    """Algebraic inverse of the tail bound (valid whenever the root is real)."""
    m, r, p = params.m, params.r, params.p
    rad = (-math.log(target) + _counting_term(params)) * (m - r) * COS4_PI8 / 2.0
    return (r * (1.0 - p) + math.sqrt(rad)) / m


def mu_as_printed(params: EstimationParams, eps: float | None = None) -> float:
    """The slack formula exactly as displayed alongside the tail bound.

    Diagnostic only: ``(4r/m) sqrt((-ln(2eps/9) - (n+m) h(r/(n+m)) ln 2)(m-r) cos^4(pi/8))``.
    Returns NaN when the radicand is negative.
    """
    eps = params.eps if eps is None else eps
    m, r = params.m, params.r
    rad = (-math.log(2.0 * eps / 9.0) - _counting_term(params)) * (m - r) * COS4_PI8
    if rad < 0:
        return math.nan
    return 4.0 * r / m * math.sqrt(rad)


def definetti_bound(n: int, k: int, r: int, dim: int) -> float:
    """``2 exp(-k(r+1)/(2(n+k)) + dim ln(k) / 2)``, unclamped."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not 0 <= r <= n:
        raise ValueError(f"need 0 <= r <= n, got r={r}, n={n}")
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    return 2.0 * math.exp(-k * (r + 1) / (2.0 * (n + k)) + 0.5 * dim * math.log(k))


def min_h_x_given_e(S: float, n_starts: int = 24, seed: int = 0) -> tuple[float, np.ndarray]:
    """Numerically minimise ``h_x_given_e`` over Bell-diagonal states with ``S_max >= S``.

    Multi-start SLSQP over the simplex; the constraint uses the closed-form
    ``S_max`` of a Bell-diagonal state.
    """
    from scipy.optimize import minimize

    signs = np.array(
        [[1, -1, -1, 1], [-1, -1, 1, 1], [1, -1, 1, -1]], dtype=float
    )  # rows: t_xx, t_yy, t_zz in terms of (Phi+, Psi-, Phi-, Psi+)

    def smax(l):
        t2 = np.sort((signs @ l) ** 2)
        return 2.0 * math.sqrt(max(t2[1] + t2[2], 0.0))

    def objective(l):
        l = np.clip(l, 0.0, 1.0)
        l = l / l.sum()
        return h_x_given_e(BellDiagonal.from_array(l))

    rng = np.random.default_rng(seed)
    best_val, best_l = math.inf, None
    for _ in range(n_starts):
        x0 = rng.dirichlet(np.ones(4))
        res = minimize(
            objective,
            x0,
            method="SLSQP",
            bounds=[(0.0, 1.0)] * 4,
            constraints=[
                {"type": "eq", "fun": lambda l: l.sum() - 1.0},
                {"type": "ineq", "fun": lambda l: smax(np.clip(l, 0, 1)) - S},
            ],
            options={"ftol": 1e-15, "maxiter": 1000},
        )
        l = np.clip(res.x, 0.0, 1.0)
        l = l / l.sum()
        if smax(l) >= S - 1e-9 and res.fun < best_val:
            best_val, best_l = float(res.fun), l
    if best_l is None:
        raise RuntimeError(f"no feasible Bell-diagonal state found for S={S}")
    return best_val, best_l
