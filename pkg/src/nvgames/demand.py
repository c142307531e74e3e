"""Store demand models: marginals, Gaussian copula and temporal structure.

Every period draws a latent standard-normal vector ``z`` with correlation
matrix ``R`` (the copula), optionally filtered through an AR(1) recursion,
and maps each coordinate through its marginal's inverse CDF.  A regime
mixture adds per-store mean shifts, with the regime drawn once per
replication.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from . import coalitions
from .errors import ConfigError, DomainError

KINDS = ("deterministic", "uniform", "normal", "truncated-normal", "lognormal", "empirical")

_REQUIRED = {
    "deterministic": {"value"},
    "uniform": {"low", "high"},
    "normal": {"mean", "sd"},
    "truncated-normal": {"mean", "sd"},
    "lognormal": {"mu", "sigma"},
    "empirical": {"sample"},
}
_OPTIONAL = {"truncated-normal": {"low", "high"}}

DEFAULT_QUANTILE_SAMPLES = 1_000_000


@dataclass(frozen=True)
class MarginalSpec:
    """One store's demand distribution.

    Parameters by kind: ``deterministic(value)``, ``uniform(low, high)``,
    ``normal(mean, sd)``, ``truncated-normal(mean, sd, low=0, high=inf)``
    where ``mean``/``sd`` belong to the parent normal, ``lognormal(mu, sigma)``
    on the log scale, and ``empirical(sample)``.
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown marginal kind {self.kind!r}")
        keys = set(self.params)
        required = _REQUIRED[self.kind]
        allowed = required | _OPTIONAL.get(self.kind, set())
        if not required <= keys:
            raise ConfigError(f"{self.kind} marginal needs {sorted(required - keys)}")
        if keys - allowed:
            raise ConfigError(f"{self.kind} marginal got unknown params {sorted(keys - allowed)}")
        p = self.params
        if self.kind == "deterministic" and p["value"] < 0:
            raise ConfigError("deterministic demand must be nonnegative")
        if self.kind == "uniform" and not 0 <= p["low"] < p["high"]:
            raise ConfigError("uniform marginal needs 0 <= low < high")
        if self.kind in ("normal", "truncated-normal") and not p["sd"] > 0:
            raise ConfigError("sd must be positive")
        if self.kind == "truncated-normal":
            low, high = p.get("low", 0.0), p.get("high", math.inf)
            if low < 0 or not low < high:
                raise ConfigError("truncated-normal needs 0 <= low < high")
        if self.kind == "lognormal" and not p["sigma"] > 0:
            raise ConfigError("lognormal sigma must be positive")
        if self.kind == "empirical":
            sample = np.asarray(p["sample"], dtype=float)
            if sample.size == 0:
                raise ConfigError("empirical sample is empty")
            if np.any(sample < 0) or not np.all(np.isfinite(sample)):
                raise ConfigError("empirical sample must be finite and nonnegative")
            object.__setattr__(self, "params", {"sample": tuple(float(s) for s in sample)})

    @property
    def nonnegative(self) -> bool:
        """False only for plain ``normal``, which puts mass on negative demand."""
        return self.kind != "normal"

    def _frozen(self):
        p = self.params
        if self.kind == "uniform":
            return stats.uniform(loc=p["low"], scale=p["high"] - p["low"])
        if self.kind == "normal":
            return stats.norm(loc=p["mean"], scale=p["sd"])
        if self.kind == "truncated-normal":
            mu, sd = p["mean"], p["sd"]
            low, high = p.get("low", 0.0), p.get("high", math.inf)
            return stats.truncnorm((low - mu) / sd, (high - mu) / sd, loc=mu, scale=sd)
        if self.kind == "lognormal":
            return stats.lognorm(s=p["sigma"], scale=math.exp(p["mu"]))
        raise AssertionError(self.kind)

    @property
    def mean(self) -> float:
        if self.kind == "deterministic":
            return float(self.params["value"])
        if self.kind == "empirical":
            return float(np.mean(self.params["sample"]))
        return float(self._frozen().mean())

    def ppf(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(np.shape(u), float(self.params["value"]))
        if self.kind == "empirical":
            return np.quantile(np.asarray(self.params["sample"]), u, method="inverted_cdf")
        return self._frozen().ppf(u)

    def from_latent(self, z: np.ndarray) -> np.ndarray:
        """Map standard-normal latent values to demands."""
        if self.kind == "normal":
            return self.params["mean"] + self.params["sd"] * z
        if self.kind == "deterministic":
            return np.full(np.shape(z), float(self.params["value"]))
        if self.kind == "lognormal":
            return np.exp(self.params["mu"] + self.params["sigma"] * z)
        return self.ppf(stats.norm.cdf(z))


@dataclass(frozen=True)
class Regime:
    probability: float
    shifts: tuple[float, ...]


@dataclass(frozen=True)
class Temporal:
    """Temporal structure: ``iid``, ``ar1`` (with ``rho``) or ``regime-mixture``."""

    kind: str = "iid"
    rho: float = 0.0
    regimes: tuple[Regime, ...] = ()

    def __post_init__(self):
        if self.kind not in ("iid", "ar1", "regime-mixture"):
            raise ConfigError(f"unknown temporal kind {self.kind!r}")
        if self.kind == "ar1" and not abs(self.rho) < 1:
            raise ConfigError("ar1 needs |rho| < 1")
        if self.kind == "regime-mixture":
            if not self.regimes:
                raise ConfigError("regime-mixture needs at least one regime")
            total = sum(r.probability for r in self.regimes)
            if abs(total - 1.0) > 1e-12 or any(r.probability < 0 for r in self.regimes):
                raise ConfigError(f"regime probabilities must be >= 0 and sum to 1, got {total!r}")

    @property
    def stationary(self) -> bool:
        return self.kind in ("ar1", "regime-mixture")


IID = Temporal()


@dataclass(frozen=True, eq=False)
class DemandModel:
    marginals: tuple[MarginalSpec, ...]
    correlation: np.ndarray | None = None
    temporal: Temporal = IID

    def __post_init__(self):
        object.__setattr__(self, "marginals", tuple(self.marginals))
        n = len(self.marginals)
        if n < 1:
            raise ConfigError("a demand model needs at least one store")
        if n > coalitions.MAX_PLAYERS:
            raise ConfigError(f"at most {coalitions.MAX_PLAYERS} stores are supported")
        if self.correlation is None:
            corr = np.eye(n)
        else:
            corr = np.array(self.correlation, dtype=float)
            if corr.shape != (n, n):
                raise ConfigError(f"correlation must be {n}x{n}")
            if not np.allclose(corr, corr.T, atol=1e-12, rtol=0):
                raise ConfigError("correlation matrix is not symmetric")
            if not np.allclose(np.diag(corr), 1.0, atol=1e-12, rtol=0):
                raise ConfigError("correlation matrix needs a unit diagonal")
            if np.linalg.eigvalsh(corr).min() < -1e-10:
                raise ConfigError("correlation matrix is not positive semidefinite")
        corr.setflags(write=False)
        object.__setattr__(self, "correlation", corr)
        w, v = np.linalg.eigh(corr)
        factor = corr if np.array_equal(corr, np.eye(n)) else v * np.sqrt(np.clip(w, 0, None))
        object.__setattr__(self, "_factor", factor)
        for r in self.temporal.regimes:
            if len(r.shifts) != n:
                raise ConfigError("every regime needs one mean shift per store")

    @property
    def n(self) -> int:
        return len(self.marginals)

    @property
    def nonnegative(self) -> bool:
        return all(m.nonnegative for m in self.marginals)

    def metadata(self) -> dict:
        out = {
            "marginals": [{"kind": m.kind, "params": dict(m.params)} for m in self.marginals],
            "correlation": self.correlation.tolist(),
            "temporal": {"kind": self.temporal.kind},
            "violates_nonnegativity": not self.nonnegative,
        }
        if self.temporal.kind == "ar1":
            out["temporal"]["rho"] = self.temporal.rho
        if self.temporal.kind == "regime-mixture":
            out["temporal"]["regimes"] = [
                {"probability": r.probability, "shifts": list(r.shifts)} for r in self.temporal.regimes
            ]
        return out

    def _latent(self, count: int, rng: np.random.Generator) -> np.ndarray:
        eps = rng.standard_normal((count, self.n))
        return eps if self._factor is self.correlation else eps @ self._factor.T

    def _demands(self, z: np.ndarray) -> np.ndarray:
        return np.column_stack([m.from_latent(z[:, i]) for i, m in enumerate(self.marginals)])

    def regime_shift(self, regime: int | None) -> np.ndarray:
        if regime is None:
            return np.zeros(self.n)
        return np.asarray(self.temporal.regimes[regime].shifts, dtype=float)


def normal_model(means, sds, correlation=None, temporal: Temporal = IID) -> DemandModel:
    """Shorthand for an all-normal model."""
    marg = [MarginalSpec("normal", {"mean": float(m), "sd": float(s)}) for m, s in zip(means, sds)]
    return DemandModel(tuple(marg), correlation, temporal)


@dataclass
class TemporalState:
    """Carry-over between periods of one replication."""

    latent: np.ndarray | None = None
    regime: int | None = None


def _draw_regime(model: DemandModel, rng: np.random.Generator) -> int:
    probs = [r.probability for r in model.temporal.regimes]
    return int(rng.choice(len(probs), p=probs))


def sample_periods(model: DemandModel, count: int, state: TemporalState, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` consecutive periods, updating ``state`` in place."""
    if model.temporal.kind == "regime-mixture" and state.regime is None:
        state.regime = _draw_regime(model, rng)
    z = model._latent(count, rng)
    if model.temporal.kind == "ar1" and count:
        rho = model.temporal.rho
        scale = math.sqrt(1.0 - rho * rho)
        first = z[0] if state.latent is None else rho * state.latent + scale * z[0]
        out = np.empty_like(z)
        out[0] = first
        if count > 1:
            out[1:], _ = signal.lfilter([scale], [1.0, -rho], z[1:], axis=0, zi=(rho * first)[None, :])
        z = out
        state.latent = z[-1].copy()
    x = model._demands(z)
    if state.regime is not None:
        x = x + model.regime_shift(state.regime)
    return x


def sample_period(model: DemandModel, state: TemporalState, rng: np.random.Generator) -> np.ndarray:
    """One period's demand vector."""
    return sample_periods(model, 1, state, rng)[0]


def sample_stationary(model: DemandModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent draws from the one-period (stationary) distribution."""
    x = model._demands(model._latent(count, rng))
    if model.temporal.kind == "regime-mixture":
        probs = [r.probability for r in model.temporal.regimes]
        shifts = np.array([r.shifts for r in model.temporal.regimes], dtype=float)
        x = x + shifts[rng.choice(len(probs), size=count, p=probs)]
    return x


def coalition_mean(model: DemandModel, mask: int) -> float:
    if mask <= 0 or mask > coalitions.grand(model.n):
        raise DomainError("coalition must be a non-empty subset of the stores")
    idx = coalitions.members(mask)
    mu = sum(model.marginals[i].mean for i in idx)
    for r in model.temporal.regimes:
        mu += r.probability * sum(r.shifts[i] for i in idx)
    return float(mu)


def coalition_sd(model: DemandModel, mask: int) -> float:
    """Standard deviation of the pooled demand; all-normal coalitions only."""
    idx = coalitions.members(mask)
    if not all(model.marginals[i].kind == "normal" for i in idx):
        raise DomainError("closed-form sd needs all-normal members")
    sd = np.array([model.marginals[i].params["sd"] for i in idx])
    corr = model.correlation[np.ix_(idx, idx)]
    return float(math.sqrt(max(sd @ corr @ sd, 0.0)))


def quantile_method(model: DemandModel, mask: int) -> str:
    """How ``coalition_quantile`` evaluates this coalition: closed form or Monte Carlo."""
    if model.temporal.kind == "regime-mixture":
        return "monte-carlo"
    kinds = {model.marginals[i].kind for i in coalitions.members(mask)}
    if kinds == {"normal"}:
        return "normal"
    if kinds == {"deterministic"}:
        return "deterministic"
    if coalitions.size(mask) == 1:
        return "marginal"
    return "monte-carlo"


def _closed_quantile(model: DemandModel, mask: int, tau: float, method: str) -> float:
    idx = coalitions.members(mask)
    if method == "normal":
        return coalition_mean(model, mask) + float(stats.norm.ppf(tau)) * coalition_sd(model, mask)
    if method == "deterministic":
        return float(sum(model.marginals[i].params["value"] for i in idx))
    return float(model.marginals[idx[0]].ppf(np.array([tau]))[0])


def coalition_quantiles(
    model: DemandModel, tau: float, samples: int = DEFAULT_QUANTILE_SAMPLES, seed: int = 0
) -> np.ndarray:
    """τ-quantile of pooled demand for every coalition (array indexed by ``mask - 1``).

    Coalitions without a closed form share one panel of ``samples`` stationary
    draws seeded by ``seed``.
    """
    if not 0 < tau < 1:
        raise DomainError(f"quantile level must be in (0, 1), got {tau!r}")
    n = model.n
    out = np.empty((1 << n) - 1)
    panel = None
    for mask in coalitions.masks(n):
        method = quantile_method(model, mask)
        if method != "monte-carlo":
            out[mask - 1] = _closed_quantile(model, mask, tau, method)
            continue
        if panel is None:
            panel = sample_stationary(model, samples, np.random.default_rng(seed))
        pooled = panel[:, coalitions.members(mask)].sum(axis=1)
        out[mask - 1] = np.quantile(pooled, tau, method="inverted_cdf")
    return out


def coalition_quantile(
    model: DemandModel, mask: int, tau: float, samples: int = DEFAULT_QUANTILE_SAMPLES, seed: int = 0
) -> float:
    """τ-quantile of ``x_S``; identical to the matching entry of ``coalition_quantiles``."""
    if not 0 < tau < 1:
        raise DomainError(f"quantile level must be in (0, 1), got {tau!r}")
    coalition_mean(model, mask)
    method = quantile_method(model, mask)
    if method != "monte-carlo":
        return _closed_quantile(model, mask, tau, method)
    panel = sample_stationary(model, samples, np.random.default_rng(seed))
    return float(np.quantile(panel[:, coalitions.members(mask)].sum(axis=1), tau, method="inverted_cdf"))


class DemandHistory:
    """Demand samples of one replication with a compensated running average."""

    def __init__(self, n: int, keep_samples: bool = True):
        self.n = n
        self.T = 0
        self.keep_samples = keep_samples
        self._samples: list[np.ndarray] = []
        self._sum = np.zeros(n)
        self._comp = np.zeros(n)

    def _add(self, value: np.ndarray) -> None:
        # Kahan-Babuska (Neumaier) step, elementwise
        t = self._sum + value
        big = np.abs(self._sum) >= np.abs(value)
        self._comp += np.where(big, (self._sum - t) + value, (value - t) + self._sum)
        self._sum = t

    def extend(self, sample) -> DemandHistory:
        sample = np.asarray(sample, dtype=float)
        if sample.shape != (self.n,):
            raise DomainError(f"expected a demand vector of length {self.n}, got shape {sample.shape}")
        self._add(sample)
        self.T += 1
        if self.keep_samples:
            self._samples.append(sample.copy())
        return self

    def extend_block(self, block) -> DemandHistory:
        """Append several periods at once (rows of ``block``)."""
        block = np.asarray(block, dtype=float)
        if block.ndim != 2 or block.shape[1] != self.n:
            raise DomainError(f"expected a (k, {self.n}) block, got shape {block.shape}")
        if len(block):
            self._add(np.sum(block, axis=0))
            self.T += len(block)
            if self.keep_samples:
                self._samples.extend(block.copy())
        return self

    @property
    def average(self) -> np.ndarray:
        if self.T == 0:
            raise DomainError("empty history has no average")
        return (self._sum + self._comp) / self.T

    @property
    def samples(self) -> np.ndarray:
        return np.array(self._samples).reshape(-1, self.n)

    def coalition_average(self, mask: int) -> float:
        return float(self.average[coalitions.members(mask)].sum())


def extend_history(history: DemandHistory, sample) -> DemandHistory:
    """Append one period to ``history`` (in place) and return it."""
    return history.extend(sample)
