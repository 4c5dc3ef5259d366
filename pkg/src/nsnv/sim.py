"""Episode execution, regret accounting against the clairvoyant, GAP metric,
seeded replication (optionally parallel), and regret-slope fitting.

Regret uses the expected per-period cost of the chosen quantity minus the
clairvoyant's; realized costs are recorded alongside for the GAP metric.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .demand import expected_cost, optimal_quantity, sample_path
from .instances import Instance
from .policies import (
    ConstantPolicy,
    Exp3Policy,
    FixedWindowPolicy,
    PerpPolicy,
    Policy,
    PredictionPolicy,
    ShrinkingWindowPolicy,
    ThresholdConstants,
    divide_into_cases_policy,
)

__all__ = [
    "PolicySpec",
    "Trajectory",
    "ReplicationReport",
    "seed_streams",
    "build_policy",
    "run_episode",
    "replicate",
    "total_regret",
    "gap",
    "fit_regret_slope",
]


def seed_streams(master_seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent (instance, demand, policy) random streams for one seed.

    Changing how one stream is consumed never perturbs the others, so e.g.
    policy randomness cannot shift the demand path.
    """
    children = np.random.SeedSequence(master_seed).spawn(3)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


@dataclass
class PolicySpec:
    """Declarative policy description used by the harness and the CLI.

    ``params['v']`` may be the string ``"meta"`` to resolve to the
    instance's recorded variation exponent at build time.
    """

    name: str
    params: dict = field(default_factory=dict)


def _resolve_v(params: dict, instance: Instance) -> float:
    v = params.get("v", "meta")
    if v == "meta":
        if instance.meta.v_true is None:
            raise ValueError("policy wants the instance's variation exponent, but none is recorded")
        return float(instance.meta.v_true)
    return float(v)


def _consts(params: dict, instance: Instance) -> ThresholdConstants:
    delta = float(params.get("delta", instance.family.delta))
    kappa = float(params.get("kappa", 1.0))
    gamma = params.get("gamma", 1.0)
    if gamma == "theory-shrinking":
        return ThresholdConstants.theory_shrinking(kappa, delta)
    if gamma == "theory-perp":
        return ThresholdConstants.theory_perp(kappa, delta)
    return ThresholdConstants(kappa=kappa, gamma=float(gamma), delta=delta)


def build_policy(spec: PolicySpec, instance: Instance, rng: np.random.Generator | None = None) -> Policy:
    """Instantiate a policy for an instance; randomized policies need rng."""
    name, p = spec.name, spec.params
    family, Q, T = instance.family, instance.Q, instance.T
    if name == "fixed_window":
        return FixedWindowPolicy(family, Q, T, _resolve_v(p, instance), _consts(p, instance))
    if name == "shrinking":
        return ShrinkingWindowPolicy(family, Q, T, _consts(p, instance))
    if name == "prediction":
        if not instance.has_predictions:
            raise ValueError("prediction policy requires an instance with predictions")
        return PredictionPolicy(family, Q)
    if name == "perp":
        if not instance.has_predictions:
            raise ValueError("PERP requires an instance with predictions")
        return PerpPolicy(
            family,
            Q,
            T,
            _resolve_v(p, instance),
            _consts(p, instance),
            min_follow=int(p.get("min_follow", 0)),
        )
    if name == "exp3":
        if rng is None:
            raise ValueError("Exp3 needs a policy random stream")
        base_a = _base_spec(p.get("base_a", {"name": "shrinking"}))
        base_b = _base_spec(p.get("base_b", {"name": "prediction"}))
        return Exp3Policy(
            build_policy(base_a, instance),
            build_policy(base_b, instance),
            c_max=float(p["c_max"]),
            T=T,
            rng=rng,
        )
    if name == "divide":
        if rng is None:
            raise ValueError("the divide-into-cases policy needs a policy random stream")
        return divide_into_cases_policy(
            a=float(p["a"]),
            family=family,
            Q=Q,
            T=T,
            rng=rng,
            consts=_consts(p, instance),
            c_max=p.get("c_max"),
        )
    if name == "constant":
        return ConstantPolicy(family, Q, float(p["quantity"]))
    raise ValueError(f"unknown policy {name!r}")


def _base_spec(raw) -> PolicySpec:
    if isinstance(raw, PolicySpec):
        return raw
    return PolicySpec(name=raw["name"], params=raw.get("params", {}))


@dataclass
class Trajectory:
    """Per-period record of an episode plus the policy's event log."""

    quantities: np.ndarray
    demands: np.ndarray
    expected_costs: np.ndarray
    clairvoyant_costs: np.ndarray
    realized_costs: np.ndarray
    events: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.quantities)

    @property
    def per_period_regret(self) -> np.ndarray:
        return self.expected_costs - self.clairvoyant_costs

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.per_period_regret)

    @property
    def total_regret(self) -> float:
        return float(np.sum(self.per_period_regret))

    @property
    def total_realized_cost(self) -> float:
        return float(np.sum(self.realized_costs))

    @property
    def total_expected_cost(self) -> float:
        return float(np.sum(self.expected_costs))


def total_regret(traj: Trajectory) -> float:
    return traj.total_regret


def run_episode(
    instance: Instance,
    policy: Policy | PolicySpec,
    seed: int = 0,
    *,
    demands: np.ndarray | None = None,
    demand_rng: np.random.Generator | None = None,
    policy_rng: np.random.Generator | None = None,
) -> Trajectory:
    """Run one episode: each period the policy sees only the past demands and
    the current prediction, then the demand realizes and costs accrue."""
    if demand_rng is None or (policy_rng is None and isinstance(policy, PolicySpec)):
        _, default_demand, default_policy = seed_streams(seed)
        demand_rng = demand_rng or default_demand
        policy_rng = policy_rng or default_policy
    if isinstance(policy, PolicySpec):
        policy = build_policy(policy, instance, policy_rng)

    if demands is None:
        if instance.fixed_demands is not None:
            demands = instance.fixed_demands
        else:
            demands = sample_path(instance.family, instance.means, demand_rng)
    demands = np.asarray(demands, dtype=float)
    if len(demands) != instance.T:
        raise ValueError("demand path length differs from horizon")

    T = instance.T
    family, Q = instance.family, instance.Q
    preds = instance.predictions
    quantities = np.empty(T)
    exp_costs = np.empty(T)
    clair_costs = np.empty(T)
    realized = np.empty(T)
    clair_cache: dict[tuple[float, float, float], tuple[float, float]] = {}

    prev: float | None = None
    for t in range(1, T + 1):
        i = t - 1
        rates = instance.rates_at(t)
        a_t = float(preds[i]) if preds is not None else None
        q = policy.step(t, prev, a_t, rates)
        mu = float(instance.means[i])
        d = float(demands[i])

        key = (mu, rates.b, rates.h)
        cached = clair_cache.get(key)
        if cached is None:
            q_star = optimal_quantity(family, mu, rates, Q)
            cached = (q_star, expected_cost(family, mu, rates, q_star))
            clair_cache[key] = cached
        q_star, c_star = cached

        quantities[i] = q
        exp_costs[i] = expected_cost(family, mu, rates, q)
        clair_costs[i] = c_star
        realized[i] = rates.b * max(d - q, 0.0) + rates.h * max(q - d, 0.0)
        prev = d

    events: dict = {}
    if isinstance(policy, ShrinkingWindowPolicy):
        events["shrinking_increments"] = list(policy.increments)
    if isinstance(policy, PerpPolicy):
        events["perp_switch"] = policy.switch_t
    if isinstance(policy, Exp3Policy):
        events["exp3_arms"] = list(policy.arm_draws)

    return Trajectory(
        quantities=quantities,
        demands=demands,
        expected_costs=exp_costs,
        clairvoyant_costs=clair_costs,
        realized_costs=realized,
        events=events,
    )


@dataclass
class ReplicationReport:
    """Per-seed totals for one (instance family, policy) cell."""

    seeds: list[int]
    total_regrets: np.ndarray
    total_realized_costs: np.ndarray
    total_expected_costs: np.ndarray

    @property
    def mean_regret(self) -> float:
        return float(np.mean(self.total_regrets))

    @property
    def stderr_regret(self) -> float:
        n = len(self.total_regrets)
        if n < 2:
            return 0.0
        return float(np.std(self.total_regrets, ddof=1) / math.sqrt(n))

    @property
    def mean_realized_cost(self) -> float:
        return float(np.mean(self.total_realized_costs))


def _replicate_one(args) -> tuple[float, float, float]:
    instance_factory, policy_spec, seed = args
    inst_rng, demand_rng, policy_rng = seed_streams(seed)
    instance = instance_factory(inst_rng) if callable(instance_factory) else instance_factory
    traj = run_episode(instance, policy_spec, demand_rng=demand_rng, policy_rng=policy_rng)
    return traj.total_regret, traj.total_realized_cost, traj.total_expected_cost


def replicate(instance_factory, policy_spec: PolicySpec, seeds, workers: int = 1) -> ReplicationReport:
    """Run one episode per seed; ``instance_factory`` is either a fixed
    Instance or a callable drawing one from the seed's instance stream.
    Results are identical whether run serially or across processes."""
    seeds = list(seeds)
    jobs = [(instance_factory, policy_spec, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_replicate_one, jobs))
    else:
        rows = [_replicate_one(j) for j in jobs]
    regrets = np.array([r[0] for r in rows])
    realized = np.array([r[1] for r in rows])
    expected = np.array([r[2] for r in rows])
    return ReplicationReport(
        seeds=seeds,
        total_regrets=regrets,
        total_realized_costs=realized,
        total_expected_costs=expected,
    )


def gap(cost_perp: float, cost_pred: float, cost_nopred: float) -> float:
    """Normalized excess of a policy's cost over the better baseline.

    Zero excess maps to 0, matching the worse baseline maps to 1; values
    outside [0, 1] are legitimate.  A zero denominator yields NaN, which
    aggregates must exclude and count as undefined.
    """
    denom = abs(cost_pred - cost_nopred)
    if denom == 0.0:
        return math.nan
    return (cost_perp - min(cost_pred, cost_nopred)) / denom


def fit_regret_slope(horizons, mean_regrets) -> float:
    """Least-squares slope of log regret against log horizon."""
    hs = np.asarray(horizons, dtype=float)
    rs = np.asarray(mean_regrets, dtype=float)
    if len(hs) < 3:
        raise ValueError("need at least 3 horizons")
    if np.any(np.diff(hs) <= 0):
        raise ValueError("horizons must be strictly increasing")
    if np.any(rs <= 0):
        raise ValueError("regrets must be positive to fit a log-log slope")
    slope, _ = np.polyfit(np.log(hs), np.log(rs), 1)
    return float(slope)
