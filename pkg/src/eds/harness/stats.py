"""Trial summaries and Welch's unequal-variance t-test."""
from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

Z95 = 1.959963984540054


@dataclass(frozen=True)
class Summary:
    n: int
    mean: float
    stdev: float
    ci_low: float
    ci_high: float
    values: tuple[float, ...]

    @property
    def ci_width(self) -> float:
        return self.ci_high - self.ci_low


def summarize(values: Iterable[float]) -> Summary:
    """Mean, sample standard deviation and a normal-approximation 95% CI."""
    vals = tuple(float(v) for v in values)
    if len(vals) < 2:
        raise ValueError("need at least two values")
    mean = statistics.fmean(vals)
    sd = statistics.stdev(vals) if len(set(vals)) > 1 else 0.0
    half = Z95 * sd / math.sqrt(len(vals))
    return Summary(len(vals), mean, sd, mean - half, mean + half, vals)


def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz continued fraction for the incomplete beta function
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x in (0.0, 1.0):
        return x
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


def welch(a: Sequence[float], b: Sequence[float]) -> WelchResult:
    """Two-tailed Welch t-test. Two constant samples give p=1 if equal, else p=0."""
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two values")
    ma, mb = statistics.fmean(a), statistics.fmean(b)
    va, vb = statistics.variance(a), statistics.variance(b)
    sa, sb = va / len(a), vb / len(b)
    se2 = sa + sb
    if se2 == 0:
        return WelchResult(0.0 if ma == mb else math.copysign(math.inf, ma - mb), math.nan, 1.0 if ma == mb else 0.0)
    t = (ma - mb) / math.sqrt(se2)
    df = se2 ** 2 / ((sa ** 2 / (len(a) - 1) if sa else 0.0) + (sb ** 2 / (len(b) - 1) if sb else 0.0))
    return WelchResult(t, df, t_sf_two_sided(t, df))


def run_trials(trial: Callable[[int], float], n: int, seeds: Sequence[int] | None = None) -> Summary:
    """Run ``trial(seed)`` for ``n`` seeds (default 0..n-1) and summarize."""
    if n < 2:
        raise ValueError("need n >= 2 trials")
    seeds = list(range(n)) if seeds is None else list(seeds)[:n]
    if len(seeds) < n:
        raise ValueError("fewer seeds than trials")
    return summarize(trial(s) for s in seeds)
