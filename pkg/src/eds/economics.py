"""Attacker and defender cost models and the leader/follower game.

Dollar amounts are floats. Time values are quoted per hour and delays in
seconds; :func:`per_second` is the single place the two meet.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .config import EdsConfig
from .errors import DomainError

SECONDS_PER_HOUR = 3600.0


def per_second(rate_per_hour: float) -> float:
    return rate_per_hour / SECONDS_PER_HOUR


@dataclass(frozen=True)
class Theta:
    """Defender strategy: difficulty, decoy ratio, per-request delay (s), tax factor."""

    d: int
    rho: float
    delay: float
    gamma: float

    @classmethod
    def from_config(cls, config: EdsConfig) -> "Theta":
        # a persistent attacker sits at the delay cap
        return cls(config.d_base, config.rho, config.delay_max, config.gamma)


@dataclass(frozen=True)
class CostParams:
    attempts: float = 10_000  # N
    hash_cost: float = 4.7e-11  # $/hash
    time_value: float = 50.0  # $/hour
    bandwidth_cost: float = 0.05  # $/GB
    data_size: float = 1.0  # GB per exfiltration context
    verify_seconds: float = 1e-6  # defender compute per verification
    defender_rate: float = 0.01  # $/hour of gateway compute
    state_cost: float = 0.005  # amortized $

    def __post_init__(self) -> None:
        for name, value in vars(self).items():
            if not value >= 0 or math.isinf(value):
                raise DomainError(f"{name} must be finite and non-negative, got {value!r}")


@dataclass(frozen=True)
class CostBreakdown:
    compute_cost: float
    time_cost: float
    bandwidth_cost: float
    total: float
    c1_puzzle: float
    c2_decoy: float
    c3_delay: float
    c4_tax: float
    defender: float
    asymmetry: float
    superlinearity: float

    @property
    def mechanism_sum(self) -> float:
        return self.c1_puzzle + self.c2_decoy + self.c3_delay + self.c4_tax


def total_attacker_cost(theta: Theta, params: CostParams = CostParams()) -> CostBreakdown:
    """Composed attacker cost ``N(1+rho)(2^(d-1) C_hash + delay V_time) gamma``.

    ``compute_cost`` and ``time_cost`` are the untaxed puzzle and delay
    shares across all ``(1+rho)N`` interactions; ``bandwidth_cost`` is what the
    tax factor adds on top, so the three sum to ``total``.
    """
    n = params.attempts
    work = 2.0 ** (theta.d - 1) * params.hash_cost
    wait = theta.delay * per_second(params.time_value)
    compute = n * (1 + theta.rho) * work
    time_ = n * (1 + theta.rho) * wait
    total = (compute + time_) * theta.gamma
    c1 = n * work
    c2 = n * theta.rho * work
    c3 = n * wait
    c4 = (theta.gamma - 1) * params.data_size * params.bandwidth_cost
    parts = c1 + c2 + c3 + c4
    defender = defender_cost(params, n)
    return CostBreakdown(
        compute_cost=compute,
        time_cost=time_,
        bandwidth_cost=(compute + time_) * (theta.gamma - 1),
        total=total,
        c1_puzzle=c1,
        c2_decoy=c2,
        c3_delay=c3,
        c4_tax=c4,
        defender=defender,
        asymmetry=total / defender if defender > 0 else math.inf,
        superlinearity=total / parts if parts > 0 else math.nan,
    )


def defender_cost(params: CostParams = CostParams(), attempts: Optional[float] = None) -> float:
    n = params.attempts if attempts is None else attempts
    return n * params.verify_seconds * per_second(params.defender_rate) + params.state_cost


# Figures often quoted for the worked example (d=20, rho=0.3, 8 s, $50/h,
# N=1e4); they sit about 10x away from what the formula gives.
QUOTED_EXAMPLE = {"compute_cost": 3.20, "time_cost": 144.0, "total": 147.0, "asymmetry": 29_000.0}
_QUOTED_THETA = Theta(20, 0.3, 8.0, 1.0)


def quoted_figure_check(theta: Theta, params: CostParams) -> Optional[str]:
    """Flag the commonly quoted worked-example figures as formula-inconsistent.

    Applies whenever ``theta`` shares the example's difficulty, decoy ratio
    and delay; the comparison itself is always made at the example's
    ``gamma = 1``.
    """
    ex = _QUOTED_THETA
    if (theta.d, theta.rho, theta.delay) != (ex.d, ex.rho, ex.delay):
        return None
    if params.attempts != 10_000 or params.time_value != 50.0 or params.hash_cost != 4.7e-11:
        return None
    b = total_attacker_cost(ex, params)
    rows = ", ".join(
        f"{k} quoted {v:,.2f} vs computed {getattr(b, k):,.2f} ({getattr(b, k) / v:.1f}x)"
        for k, v in QUOTED_EXAMPLE.items()
    )
    return ("NOTE: the widely quoted figures for this example (gamma=1) are inconsistent "
            f"with the cost formula and are not reproduced: {rows}")


def optimal_difficulty(benefit: float, attempts: float, hash_cost: float) -> int:
    """Smallest d with ``attempts * 2^(d-1) * hash_cost > benefit``.

    Closed form ``ceil(log2(benefit / (attempts * hash_cost)) + 1)``; when the
    logarithm is an exact integer the strict inequality needs one more bit,
    and the boundary is re-checked to absorb floating-point rounding.
    """
    if not (benefit > 0 and attempts > 0 and hash_cost > 0):
        raise DomainError("benefit, attempts and hash_cost must all be positive")
    if any(math.isinf(v) for v in (benefit, attempts, hash_cost)):
        raise DomainError("inputs must be finite")
    unit = attempts * hash_cost
    d = math.ceil(math.log2(benefit / unit) + 1)

    def deters(k: int) -> bool:
        return unit * math.ldexp(1.0, k - 1) > benefit

    while not deters(d):
        d += 1
    while deters(d - 1):
        d -= 1
    return d


@dataclass(frozen=True)
class PayoffInputs:
    success_prob: float  # P_s
    loss: float  # L, defender loss on success
    benefit: float  # B_A

    def __post_init__(self) -> None:
        if not 0 <= self.success_prob <= 1:
            raise DomainError("success probability must lie in [0, 1]")


def stackelberg_payoffs(theta: Theta, inputs: PayoffInputs, params: CostParams = CostParams()) -> tuple[float, float]:
    """Return ``(U_D, U_A)``; the attacker is deterred when ``U_A < 0``."""
    cost = total_attacker_cost(theta, params)
    u_d = -cost.defender - inputs.success_prob * inputs.loss
    u_a = inputs.success_prob * inputs.benefit - cost.total
    return u_d, u_a


@dataclass(frozen=True)
class AttackerProfile:
    name: str
    budget: float
    cpu_hash_rate: float = 0.0  # hashes/s per node
    gpu_hash_rate: float = 0.0
    node_count: int = 1
    time_value: float = 50.0
    reported_threshold: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.budget > 0:
            raise DomainError("budget must be positive")
        if not (self.cpu_hash_rate > 0 or self.gpu_hash_rate > 0):
            raise DomainError("profile needs a positive hash rate")

    def rates(self) -> list[float]:
        return [r * self.node_count for r in (self.cpu_hash_rate, self.gpu_hash_rate) if r > 0]


CPU_RATE = 500e6
GPU_RATE = 500e9

PROFILES = (
    AttackerProfile("script_kiddie", 50, cpu_hash_rate=CPU_RATE, reported_threshold=14),
    AttackerProfile("hobbyist", 500, cpu_hash_rate=8 * CPU_RATE, reported_threshold=18),
    AttackerProfile("cyber_criminal", 2_000, cpu_hash_rate=CPU_RATE, gpu_hash_rate=4 * GPU_RATE,
                    reported_threshold=20),
    AttackerProfile("organized_crime", 10_000, cpu_hash_rate=CPU_RATE, node_count=100, reported_threshold=22),
)


def profile_attack_cost(profile: AttackerProfile, d: int, attempts: float, hash_cost: float) -> float:
    """Cheapest expected cost over the profile's resources at difficulty d."""
    hashes = attempts * 2.0 ** (d - 1)
    return min(hashes / rate * per_second(profile.time_value) + hashes * hash_cost for rate in profile.rates())


def deterrence_threshold(
    profile: AttackerProfile,
    attempts: float,
    benefit: float = math.inf,
    hash_cost: float = CostParams.hash_cost,
    d_range: tuple[int, int] = (1, 32),
) -> Optional[int]:
    """Smallest d in ``d_range`` whose cost exceeds ``min(budget, benefit)``; None if none does."""
    limit = min(profile.budget, benefit)
    for d in range(d_range[0], d_range[1] + 1):
        if profile_attack_cost(profile, d, attempts, hash_cost) > limit:
            return d
    return None


def combined_mitigation(p_detect: float, asr: float) -> float:
    """Fraction of attacks stopped when detection and cost imposition stack."""
    if not (0 <= p_detect <= 1 and 0 <= asr <= 1):
        raise DomainError("p_detect and asr must lie in [0, 1]")
    return 1 - (1 - p_detect) * asr


@dataclass(frozen=True)
class SweepResult:
    fraction: float
    # (hash_cost multiplier, time_value multiplier) -> asymmetry
    grid: dict = field(default_factory=dict)

    @property
    def min_asymmetry(self) -> float:
        return min(self.grid.values())

    @property
    def baseline(self) -> float:
        return self.grid[(1.0, 1.0)]


def sensitivity_sweep(theta: Theta, params: CostParams = CostParams(), fraction: float = 0.5) -> SweepResult:
    if not 0 < fraction < 1:
        raise DomainError("fraction must lie in (0, 1)")
    steps = (1 - fraction, 1.0, 1 + fraction)
    grid = {}
    for hc in steps:
        for tv in steps:
            p = replace(params, hash_cost=params.hash_cost * hc, time_value=params.time_value * tv)
            grid[(hc, tv)] = total_attacker_cost(theta, p).asymmetry
    return SweepResult(fraction, grid)
