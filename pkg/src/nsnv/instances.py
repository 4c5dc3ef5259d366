"""Problem instance generators and ingestion.

Covers the adversarial cycle construction, the indistinguishable pair, the
triple-exponential-smoothing synthetic streams with predictions, and
CSV-based real-data ingestion with residual-based empirical families.
"""

from __future__ import annotations

import csv
import datetime
import math
from dataclasses import dataclass, field

import numpy as np

from .demand import (
    Bernoulli,
    CostRates,
    DemandFamily,
    NonnegativeReals,
    PointMass,
    QuantitySpace,
    ShiftedNoise,
    TruncatedPoisson,
    Uniform,
    demand_variation,
    exponent_of,
    prediction_error,
)

__all__ = [
    "InstanceMeta",
    "Instance",
    "HoltWintersParams",
    "gen_lower_bound_cycles",
    "gen_indistinguishable_pair",
    "holt_winters_forecast",
    "gen_holt_winters_instance",
    "load_timeseries",
    "split_train_test",
    "fit_residual_family",
]


@dataclass(frozen=True)
class InstanceMeta:
    label: str = ""
    v_true: float | None = None
    a_true: float | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class Instance:
    """A full problem instance: horizon, family, mean sequence, cost rates,
    quantity space, optional predictions and optional pinned demand path."""

    T: int
    family: DemandFamily
    means: np.ndarray
    rates: CostRates | list[CostRates]
    Q: QuantitySpace
    predictions: np.ndarray | None = None
    meta: InstanceMeta = field(default_factory=InstanceMeta)
    fixed_demands: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.means = np.asarray(self.means, dtype=float)
        if len(self.means) != self.T:
            raise ValueError(f"means length {len(self.means)} != horizon {self.T}")
        lo, hi = self.family.mean_bounds
        if np.any(self.means < lo - 1e-9) or np.any(self.means > hi + 1e-9):
            raise ValueError("mean sequence leaves the family's mean bounds")
        if self.predictions is not None:
            self.predictions = np.asarray(self.predictions, dtype=float)
            if len(self.predictions) != self.T:
                raise ValueError("prediction sequence length differs from horizon")
            if not np.all(np.isfinite(self.predictions)):
                raise ValueError("predictions must be finite")
        if isinstance(self.rates, list) and len(self.rates) != self.T:
            raise ValueError("per-period rates length differs from horizon")
        if self.fixed_demands is not None:
            self.fixed_demands = np.asarray(self.fixed_demands, dtype=float)
            if len(self.fixed_demands) != self.T:
                raise ValueError("fixed demand path length differs from horizon")

    def rates_at(self, t: int) -> CostRates:
        """Cost rates of period t (1-based)."""
        if isinstance(self.rates, list):
            return self.rates[t - 1]
        return self.rates

    @property
    def has_predictions(self) -> bool:
        return self.predictions is not None


# ---------------------------------------------------------------------------
# Adversarial constructions


def gen_lower_bound_cycles(v: float, a: float, T: int, rng: np.random.Generator) -> Instance:
    """Hard Bernoulli instance: the horizon splits into cycles of length
    ~T^((1-v)/2); each cycle's success probability sits a hair above or
    below 1/2, resampled per cycle, so its sign is statistically hard to
    detect within the cycle.

    Predictions are coin flips over the same two levels: on every period
    when a >= (3+v)/4, otherwise only on ~T^(a-(1+3v)/4) periods per cycle
    (spread so the total error stays within T^a/sqrt(5)), with exact
    forecasts elsewhere.
    """
    if not (0.0 <= v <= 1.0 and 0.0 <= a <= 1.0):
        raise ValueError("v and a must lie in [0, 1]")
    cycle_len = max(1, round(T ** ((1.0 - v) / 2.0)))
    if cycle_len > T:
        raise ValueError("degenerate construction: cycle longer than horizon")
    amp = T ** ((v - 1.0) / 4.0) / math.sqrt(20.0)
    lo, hi = 0.5 - amp, 0.5 + amp
    n_cycles = math.ceil(T / cycle_len)

    levels = np.where(rng.random(n_cycles) < 0.5, hi, lo)
    means = np.repeat(levels, cycle_len)[:T]

    threshold = (3.0 + v) / 4.0
    case = 1 if a >= threshold else 2
    if case == 1:
        flips = np.ones(T, dtype=bool)
    else:
        per_cycle = T ** (a - (1.0 + 3.0 * v) / 4.0)
        flips = np.zeros(T, dtype=bool)
        carried = 0.0
        for j in range(n_cycles):
            start = j * cycle_len
            length = min(cycle_len, T - start)
            carried += per_cycle
            m = min(int(carried), length)
            carried -= m
            flips[start : start + m] = True
    preds = means.copy()
    coin = np.where(rng.random(T) < 0.5, hi, lo)
    preds[flips] = coin[flips]

    family = Bernoulli(mean_bounds=(lo, hi))
    meta = InstanceMeta(
        label=f"lower-bound-cycles(v={v}, a={a}, T={T})",
        v_true=v,
        a_true=a,
        extras={
            "case": case,
            "cycle_len": cycle_len,
            "amp": amp,
            "achieved_variation": demand_variation(means, 2.0),
            "achieved_error": prediction_error(preds, means),
        },
    )
    return Instance(
        T=T,
        family=family,
        means=means,
        rates=CostRates(1.0, 1.0),
        Q=NonnegativeReals(),
        predictions=preds,
        meta=meta,
    )


def gen_indistinguishable_pair(T: int, rng: np.random.Generator) -> tuple[Instance, Instance]:
    """Two instances whose (prediction, demand) observation streams share one
    law: uniform noise around a constant mean versus a point mass at a
    uniformly drawn mean, each predicting the realized demand."""
    if T < 1:
        raise ValueError("horizon must be positive")
    draws_1 = rng.uniform(0.0, 2.0, size=T)
    means_2 = rng.uniform(0.0, 2.0, size=T)

    inst1 = Instance(
        T=T,
        family=Uniform(mean_bounds=(0.0, 2.0), halfwidth=1.0),
        means=np.ones(T),
        rates=CostRates(1.0, 1.0),
        Q=NonnegativeReals(),
        predictions=draws_1,
        meta=InstanceMeta(label="pair-noisy-constant", v_true=0.0, a_true=1.0),
        fixed_demands=draws_1,
    )
    inst2 = Instance(
        T=T,
        family=PointMass(mean_bounds=(0.0, 2.0)),
        means=means_2,
        rates=CostRates(1.0, 1.0),
        Q=NonnegativeReals(),
        predictions=means_2,
        meta=InstanceMeta(label="pair-revealed-drift", v_true=1.0, a_true=0.0),
        fixed_demands=means_2,
    )
    return inst1, inst2


# ---------------------------------------------------------------------------
# Triple exponential smoothing


@dataclass(frozen=True)
class HoltWintersParams:
    """Smoothing factors (level, trend, seasonal) and season length."""

    alpha: float
    beta: float
    gamma_s: float
    L: int

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma_s"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.L < 1:
            raise ValueError("season length must be >= 1")


def holt_winters_forecast(history, params: HoltWintersParams, horizon: int) -> np.ndarray:
    """Multiplicative-seasonality triple exponential smoothing.

    Runs the level/trend/seasonal recursions over the history (updates start
    once a full season is available) and extrapolates ``horizon`` steps from
    its end.  Initial trend is the mean consecutive difference of the first
    season; initial seasonal factors are the first season over its mean.
    """
    x = np.asarray(history, dtype=float)
    n = len(x)
    L = params.L
    if n < L:
        raise ValueError(f"history length {n} shorter than season length {L}")
    if np.any(x <= 0):
        raise ValueError("history values must be positive for multiplicative seasonality")
    if horizon < 1:
        raise ValueError("forecast horizon must be >= 1")

    season_mean = float(x[:L].mean())
    s = float(x[0])
    b = float(np.mean(np.diff(x[:L]))) if L > 1 else 0.0
    c = [float(xi) / season_mean for xi in x[:L]]

    al, be, ga = params.alpha, params.beta, params.gamma_s
    for t in range(L, n):
        # level deseasonalizes by the seasonal factor, keeping the recursion
        # scale-equivariant in the history
        s_new = al * (x[t] / c[t - L]) + (1.0 - al) * (s + b)
        if s_new == 0.0:
            s_new = 1e-300
        b = be * (s_new - s) + (1.0 - be) * b
        c.append(ga * (x[t] / s_new) + (1.0 - ga) * c[t - L])
        s = s_new

    t_end = n - 1
    out = np.empty(horizon)
    for m in range(1, horizon + 1):
        out[m - 1] = (s + m * b) * c[t_end - L + 1 + (m - 1) % L]
    return out


def gen_holt_winters_instance(
    params: HoltWintersParams,
    pred_params: HoltWintersParams,
    T: int = 365,
    rng: np.random.Generator | None = None,
    noise_var: float = 5.0,
    history=None,
    rates: CostRates | None = None,
    label: str = "holt-winters",
) -> Instance:
    """Synthetic stream: a 30-period uniform[80,120] history seeds the
    smoother; the mean sequence is its T-step extrapolation plus Gaussian
    noise of the given variance; demands are truncated-Poisson realizations
    and predictions come from a second parameter set on the same history."""
    if rng is None:
        raise ValueError("an explicitly seeded generator is required")
    if history is None:
        history = rng.uniform(80.0, 120.0, size=30)
    history = np.asarray(history, dtype=float)

    raw_means = holt_winters_forecast(history, params, T)
    raw_means = raw_means + rng.normal(0.0, math.sqrt(noise_var), size=T)
    lo = max(1.0, 0.8 * float(raw_means.min()))
    hi = max(lo + 1.0, 1.2 * float(raw_means.max()))
    means = np.clip(raw_means, lo, hi)
    clamped = int(np.sum((raw_means < lo) | (raw_means > hi)))

    preds = holt_winters_forecast(history, pred_params, T)

    variation = demand_variation(means, 2.0)
    error = prediction_error(preds, means)
    meta = InstanceMeta(
        label=label,
        v_true=exponent_of(variation, T),
        a_true=exponent_of(error, T),
        extras={
            "v_raw": exponent_of(variation, T, clamp=False),
            "a_raw": exponent_of(error, T, clamp=False),
            "variation": variation,
            "prediction_error": error,
            "clamped_means": clamped,
            "history": history.tolist(),
        },
    )
    return Instance(
        T=T,
        family=TruncatedPoisson(mean_bounds=(lo, hi), K=10.0),
        means=means,
        rates=rates or CostRates(1.0, 1.0),
        Q=NonnegativeReals(),
        predictions=preds,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Real-data ingestion


def _parse_index(token: str, line_no: int):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return datetime.date.fromisoformat(token)
    except ValueError:
        raise ValueError(f"line {line_no}: index {token!r} is neither an integer nor an ISO date")


def load_timeseries(path, value_column: str = "value") -> list[tuple[object, float]]:
    """Read an ordered (t, value) series from a CSV with header ``t,<value>``."""
    series: list[tuple[object, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "t" or header[1] != value_column:
            raise ValueError(f"{path}: expected header 't,{value_column}', got {','.join(header)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2 or not row[1].strip():
                raise ValueError(f"line {line_no}: missing value cell")
            idx = _parse_index(row[0], line_no)
            try:
                val = float(row[1])
            except ValueError:
                raise ValueError(f"line {line_no}: value {row[1]!r} is not a number")
            if not math.isfinite(val):
                raise ValueError(f"line {line_no}: value must be finite")
            series.append((idx, val))
    return series


def load_predictions(path) -> list[tuple[object, float]]:
    """Read a prediction CSV with header ``t,prediction``."""
    return load_timeseries(path, value_column="prediction")


def split_train_test(series, test_len: int):
    """Order-preserving split with the test window as the suffix."""
    if test_len < 1:
        raise ValueError("test length must be positive")
    if test_len >= len(series):
        raise ValueError(f"test length {test_len} must be smaller than the series ({len(series)})")
    cut = len(series) - test_len
    return series[:cut], series[cut:]


def fit_residual_family(
    train,
    train_preds,
    mean_bounds: tuple[float, float] | None = None,
) -> ShiftedNoise:
    """Empirical demand model around a forecast: the family shifts the
    training residuals d_s - mu_s by the current mean estimate."""
    d = np.asarray(train, dtype=float)
    m = np.asarray(train_preds, dtype=float)
    if d.shape != m.shape or d.ndim != 1 or len(d) < 1:
        raise ValueError("training demands and predictions must be equal-length 1-D series")
    residuals = d - m
    if mean_bounds is None:
        spread = max(float(np.max(np.abs(residuals))), 1.0)
        lo = max(0.0, float(np.min(m)) - spread)
        hi = float(np.max(m)) + spread
        mean_bounds = (lo, max(hi, lo + 1.0))
    return ShiftedNoise(mean_bounds=mean_bounds, noise=tuple(residuals))
