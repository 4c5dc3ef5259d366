"""Online ordering policies sharing one step interface.

Each policy is a stateful engine driven once per period, in order:

    q_t = policy.step(t, prev_demand, prediction, rates)

``t`` runs 1..T, ``prev_demand`` is the realized demand of period t-1 (None
at t=1) and ``prediction`` is the period's mean forecast (None when the
instance carries no predictions).  Emitted quantities always belong to the
instance's quantity space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .demand import CostRates, DemandFamily, QuantitySpace

__all__ = [
    "ThresholdConstants",
    "CandidateGrid",
    "Policy",
    "FixedWindowPolicy",
    "ShrinkingWindowPolicy",
    "PredictionPolicy",
    "PerpPolicy",
    "Exp3Policy",
    "ConstantPolicy",
    "divide_into_cases_policy",
    "rolling_mean_estimate",
]

# Hoeffding constant bound: the concentration inequality holds with 1/rho <= 144e
RHO = 1.0 / (144.0 * math.e)


@dataclass(frozen=True)
class ThresholdConstants:
    """Scaling constants for the windowed policies.

    kappa scales window lengths, gamma the concentration thresholds, delta
    is the sub-Gaussian norm proxy of the demand family.  ``theory`` derives
    the smallest gamma meeting the concentration condition
    rho*kappa*gamma^2/delta^2 >= target (5/2 for the shrinking policy, 2 for
    the prediction-error-robust policy); experiments override to kappa=gamma=1.
    """

    kappa: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0

    def __post_init__(self) -> None:
        if self.kappa <= 0 or self.gamma <= 0 or self.delta <= 0:
            raise ValueError("kappa, gamma, delta must all be positive")

    @classmethod
    def theory(cls, kappa: float, delta: float, target: float) -> "ThresholdConstants":
        gamma = delta * math.sqrt(target / (RHO * kappa))
        return cls(kappa=kappa, gamma=gamma, delta=delta)

    @classmethod
    def theory_shrinking(cls, kappa: float = 1.0, delta: float = 1.0) -> "ThresholdConstants":
        return cls.theory(kappa, delta, 5.0 / 2.0)

    @classmethod
    def theory_perp(cls, kappa: float = 1.0, delta: float = 1.0) -> "ThresholdConstants":
        return cls.theory(kappa, delta, 2.0)


@dataclass(frozen=True)
class CandidateGrid:
    """Geometric grid of candidate variation exponents and their windows.

    v_j = (1 + 1/log T)^(j-1) / log T with k chosen so v_{k-1} < 1 <= v_k;
    n_j = ceil(kappa * T^((1-v_j)/2)).  Window ceilings can tie at desk
    scale, so windows are validated as nonincreasing rather than strictly
    decreasing.
    """

    exponents: tuple[float, ...]
    windows: tuple[int, ...]
    kappa: float

    @classmethod
    def for_horizon(cls, T: int, kappa: float) -> "CandidateGrid":
        if T < 3:
            raise ValueError("horizon too small for a candidate grid")
        log_t = math.log(T)
        ratio = 1.0 + 1.0 / log_t
        exps = [1.0 / log_t]
        while exps[-1] < 1.0:
            exps.append(exps[-1] * ratio)
        windows = [math.ceil(kappa * T ** ((1.0 - v) / 2.0)) for v in exps]
        return cls(exponents=tuple(exps), windows=tuple(windows), kappa=kappa)

    def __post_init__(self) -> None:
        v = self.exponents
        if len(v) < 2 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("exponent grid must be strictly increasing with >= 2 entries")
        if not (v[-2] < 1.0 <= v[-1]):
            raise ValueError("grid must end at the first exponent >= 1")
        if any(b > a for a, b in zip(self.windows, self.windows[1:])):
            raise ValueError("windows must be nonincreasing")

    def __len__(self) -> int:
        return len(self.exponents)


def rolling_mean_estimate(history, n: int, bounds: tuple[float, float]) -> float:
    """Mean of the last n demands, clamped into the mean bounds."""
    if len(history) < n or n < 1:
        raise ValueError(f"need at least n={n} observations, have {len(history)}")
    m = sum(history[-n:]) / n
    return min(max(m, bounds[0]), bounds[1])


class Policy:
    """Base: holds the instance context and maps mean estimates to orders."""

    def __init__(self, family: DemandFamily, Q: QuantitySpace):
        self.family = family
        self.Q = Q
        self._t = 0

    def _check_step(self, t: int) -> None:
        if t != self._t + 1:
            raise RuntimeError(f"steps must be called in order; expected t={self._t + 1}, got {t}")
        self._t = t

    def order_for(self, mu_hat: float, rates: CostRates) -> float:
        mu = self.family.clamp_mean(mu_hat)
        return self.Q.argmin_cost(self.family, mu, rates)

    def step(self, t: int, prev_demand: float | None, prediction: float | None, rates: CostRates) -> float:
        raise NotImplementedError


class _WindowedBase(Policy):
    """Shared demand buffer with prefix sums for O(1) window means."""

    def __init__(self, family: DemandFamily, Q: QuantitySpace):
        super().__init__(family, Q)
        self._prefix = [0.0]  # prefix[i] = sum of first i demands

    def _record(self, d: float | None) -> None:
        if d is not None:
            self._prefix.append(self._prefix[-1] + d)

    def _n_obs(self) -> int:
        return len(self._prefix) - 1

    def _window_mean(self, n: int) -> float:
        """Clamped mean of the last n recorded demands."""
        m = self._n_obs()
        s = self._prefix[m] - self._prefix[m - n]
        lo, hi = self.family.mean_bounds
        return min(max(s / n, lo), hi)

    def _warmup_order(self, rates: CostRates) -> float:
        # the warm-up order is formally arbitrary; ordering against the
        # expanding mean of what has been observed (bounds midpoint before
        # the first observation) keeps warm-up costs instance-scaled
        m = self._n_obs()
        if m == 0:
            lo, hi = self.family.mean_bounds
            return self.order_for((lo + hi) / 2.0, rates)
        return self.order_for(self._window_mean(m), rates)


class FixedWindowPolicy(_WindowedBase):
    """Orders against the rolling mean of the last n = ceil(kappa*T^((1-v)/2))
    demands; the warm-up orders against the midpoint of the mean bounds."""

    def __init__(
        self,
        family: DemandFamily,
        Q: QuantitySpace,
        T: int,
        v: float,
        consts: ThresholdConstants | None = None,
    ):
        if not (0.0 <= v <= 1.0):
            raise ValueError("variation exponent v must lie in [0, 1]")
        if T < 2:
            raise ValueError("horizon must be at least 2")
        super().__init__(family, Q)
        self.consts = consts or ThresholdConstants()
        self.T = T
        self.v = v
        self.n = math.ceil(self.consts.kappa * T ** ((1.0 - v) / 2.0))

    def step(self, t, prev_demand, prediction, rates):
        self._check_step(t)
        self._record(prev_demand)
        if t <= self.n:
            return self._warmup_order(rates)
        return self.order_for(self._window_mean(self.n), rates)


class ShrinkingWindowPolicy(_WindowedBase):
    """Tracks the smallest candidate variation exponent consistent with the
    observed demands, running the corresponding fixed window.

    The candidate index increments (by at most one per period, smallest
    triggering candidate first) whenever the cumulative gap between the
    current and a larger candidate's estimates crosses
    2*(gamma*sqrt(log T) + sqrt(kappa)) * T^((3+v_j)/4) since the last
    trigger.  Estimate terms with insufficient history count as zero.
    """

    def __init__(
        self,
        family: DemandFamily,
        Q: QuantitySpace,
        T: int,
        consts: ThresholdConstants | None = None,
    ):
        super().__init__(family, Q)
        self.consts = consts or ThresholdConstants()
        self.T = T
        self.grid = CandidateGrid.for_horizon(T, self.consts.kappa)
        self.warmup_end = math.ceil(T ** (3.0 / 4.0))
        if self.warmup_end < self.grid.windows[0]:
            raise ValueError(
                f"horizon {T} too small: warm-up {self.warmup_end} shorter than "
                f"largest window {self.grid.windows[0]}"
            )
        scale = 2.0 * (self.consts.gamma * math.sqrt(math.log(T)) + math.sqrt(self.consts.kappa))
        self.thresholds = tuple(scale * T ** ((3.0 + vj) / 4.0) for vj in self.grid.exponents)
        self.index = 0  # 0-based position in the candidate grid
        self.last_trigger = self.warmup_end + 1
        self._sums = [0.0] * len(self.grid)  # cumulative |mu^i - mu^j| since last trigger
        self.increments: list[tuple[int, int, int]] = []  # (t, new index, triggering j), 1-based

    def _estimates(self) -> list[float | None]:
        m = self._n_obs()
        return [self._window_mean(n) if m >= n else None for n in self.grid.windows]

    def current_window(self) -> int:
        return self.grid.windows[self.index]

    def step(self, t, prev_demand, prediction, rates):
        self._check_step(t)
        self._record(prev_demand)
        if t <= self.warmup_end:
            return self._warmup_order(rates)
        est = self._estimates()
        self._accumulate(est)
        trigger = self._find_trigger()
        if trigger is not None:
            self.index += 1
            self.last_trigger = t
            self.increments.append((t, self.index, trigger))
            self._sums = [0.0] * len(self.grid)
            self._accumulate(est)  # sums restart at the trigger period itself
        mu = est[self.index]
        if mu is None:  # unreachable after a T^(3/4) warm-up unless kappa is huge
            return self._warmup_order(rates)
        return self.order_for(mu, rates)

    def _accumulate(self, est: list[float | None]) -> None:
        cur = est[self.index]
        if cur is None:
            return
        for j in range(self.index + 1, len(self.grid)):
            if est[j] is not None:
                self._sums[j] += abs(cur - est[j])

    def _find_trigger(self) -> int | None:
        if self.index >= len(self.grid) - 1:
            return None
        for j in range(self.index + 1, len(self.grid)):
            if self._sums[j] >= self.thresholds[j]:
                return j
        return None


class PredictionPolicy(Policy):
    """Trusts the prediction outright: orders against the clamped forecast."""

    def __init__(self, family: DemandFamily, Q: QuantitySpace):
        super().__init__(family, Q)

    def step(self, t, prev_demand, prediction, rates):
        self._check_step(t)
        if prediction is None:
            raise ValueError("prediction policy requires a prediction each period")
        return self.order_for(prediction, rates)


class PerpPolicy(_WindowedBase):
    """Prediction-error-robust policy: follows predictions while tracking the
    cumulative gap between the raw forecasts and a fixed-window estimate;
    switches permanently to the fixed window once the gap crosses
    (gamma*sqrt(log T) + sqrt(kappa) + 1) * T^((3+v)/4) after min_follow."""

    def __init__(
        self,
        family: DemandFamily,
        Q: QuantitySpace,
        T: int,
        v: float,
        consts: ThresholdConstants | None = None,
        min_follow: int = 0,
    ):
        if not (0.0 <= v <= 1.0):
            raise ValueError("variation exponent v must lie in [0, 1]")
        super().__init__(family, Q)
        self.consts = consts or ThresholdConstants()
        self.T = T
        self.v = v
        self.min_follow = min_follow
        self.n = math.ceil(self.consts.kappa * T ** ((1.0 - v) / 2.0))
        c = self.consts
        self.threshold = (
            c.gamma * math.sqrt(math.log(T)) + math.sqrt(c.kappa) + 1.0
        ) * T ** ((3.0 + v) / 4.0)
        self.cum_gap = 0.0
        self.switch_t: int | None = None

    def step(self, t, prev_demand, prediction, rates):
        self._check_step(t)
        self._record(prev_demand)
        if self.switch_t is not None:
            return self._fixed_order(rates)
        if prediction is None:
            raise ValueError("PERP requires a prediction each period before any switch")
        if t <= self.n:
            return self.order_for(prediction, rates)
        mu_fixed = self._window_mean(self.n)
        self.cum_gap += abs(prediction - mu_fixed)
        if self.cum_gap >= self.threshold and t > self.min_follow:
            self.switch_t = t
            return self._fixed_order(rates)
        return self.order_for(prediction, rates)

    def _fixed_order(self, rates):
        if self._t <= self.n:  # switch cannot happen this early; guard anyway
            return self._warmup_order(rates)
        return self.order_for(self._window_mean(self.n), rates)


class ConstantPolicy(Policy):
    """Always orders the same quantity (dummy arm for the bandit wrapper)."""

    def __init__(self, family: DemandFamily, Q: QuantitySpace, quantity: float):
        super().__init__(family, Q)
        self.quantity = Q.clamp(quantity)

    def step(self, t, prev_demand, prediction, rates):
        self._check_step(t)
        return self.quantity


class Exp3Policy(Policy):
    """Adversarial two-arm bandit over two base policies.

    Both bases consume the full demand stream every period; only the sampled
    arm's quantity is emitted.  The sampled arm's realized cost, importance
    weighted by its probability, drives the exponential weight update.
    """

    def __init__(
        self,
        base_a: Policy,
        base_b: Policy,
        c_max: float,
        T: int,
        rng: np.random.Generator,
    ):
        if c_max <= 0:
            raise ValueError("c_max must be positive")
        super().__init__(base_a.family, base_a.Q)
        self.bases = (base_a, base_b)
        self.c_max = c_max
        self.T = T
        self.rng = rng
        self.mix = min(1.0, math.sqrt(2.0 * math.log(2.0) / ((math.e - 1.0) * c_max * T)))
        self.weights = [1.0, 1.0]
        self.arm_draws: list[int] = []
        self._pending: tuple[int, float, float, CostRates] | None = None  # arm, q, prob, rates

    def probabilities(self) -> tuple[float, float]:
        w = self.weights
        total = w[0] + w[1]
        g = self.mix
        return tuple((1.0 - g) * wi / total + g / 2.0 for wi in w)

    def _settle(self, d: float) -> None:
        if self._pending is None:
            return
        arm, q, prob, rates = self._pending
        cost = rates.b * max(d - q, 0.0) + rates.h * max(q - d, 0.0)
        loss = cost / prob
        self.weights[arm] *= math.exp(-self.mix * loss / 2.0)
        top = max(self.weights)
        if top < 1e-280:  # rescaling keeps probabilities intact
            self.weights = [w / top for w in self.weights]
        self._pending = None

    def step(self, t, prev_demand, prediction, rates):
        self._check_step(t)
        if prev_demand is not None:
            self._settle(prev_demand)
        orders = [base.step(t, prev_demand, prediction, rates) for base in self.bases]
        probs = self.probabilities()
        arm = 0 if self.rng.random() < probs[0] else 1
        self.arm_draws.append(arm)
        self._pending = (arm, orders[arm], probs[arm], rates)
        return orders[arm]


def divide_into_cases_policy(
    a: float,
    family: DemandFamily,
    Q: QuantitySpace,
    T: int,
    rng: np.random.Generator,
    consts: ThresholdConstants | None = None,
    c_max: float | None = None,
) -> Policy:
    """Routes on the known accuracy exponent: follow predictions when
    a <= 1/2, otherwise run Exp3 over (shrinking window, prediction)."""
    if not (0.0 <= a <= 1.0):
        raise ValueError("accuracy exponent a must lie in [0, 1]")
    if a <= 0.5:
        return PredictionPolicy(family, Q)
    if c_max is None:
        raise ValueError("Exp3 branch needs an explicit per-period cost cap c_max")
    shrinking = ShrinkingWindowPolicy(family, Q, T, consts)
    prediction = PredictionPolicy(family, Q)
    return Exp3Policy(shrinking, prediction, c_max, T, rng)
