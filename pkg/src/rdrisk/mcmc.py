"""Model-agnostic posterior sampler with convergence diagnostics.

The engine runs multiple independent chains of component-wise random-walk
Metropolis over a user-supplied log-density.  Per-coordinate proposal
scales adapt on the log scale during burn-in toward a target acceptance
rate and are frozen afterwards, so the post-burn-in kernel is a fixed
Markov transition.

Determinism contract: given the same target and configuration the sampler
produces bit-identical draws.  Chain ``k`` draws from its own generator
seeded by ``(seed, k)``, so the result does not depend on the order in
which chains execute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import SamplerError

ADAPT_BATCH = 50
MAX_INIT_TRIES = 100
RHAT_WARN = 1.05


@dataclass(frozen=True)
class TargetDensity:
    """A log posterior density over a fixed-length parameter vector.

    ``log_density`` must return a float, using ``-inf`` (never NaN) for
    points outside the support, and must be safe for concurrent calls.
    ``derived`` optionally maps a parameter vector to named scalars; it is
    evaluated on retained draws only.  ``init`` is the starting point;
    the sampler jitters it if the density there is not finite.
    """

    dim: int
    log_density: Callable[[np.ndarray], float]
    names: tuple[str, ...]
    init: np.ndarray
    derived: Callable[[np.ndarray], dict[str, float]] | None = None
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("target dimension must be >= 1")
        if len(self.names) != self.dim:
            raise ValueError("names must match the target dimension")
        if np.asarray(self.init, dtype=np.float64).shape != (self.dim,):
            raise ValueError("init must be a vector of length dim")


@dataclass(frozen=True)
class SamplerConfig:
    """Run lengths, seeding and adaptation settings for the sampler."""

    chains: int = 2
    burnin: int = 10_000
    iterations: int = 50_000
    retained: int = 1_000
    seed: int = 0
    initial_scale: float | Sequence[float] = 0.1
    target_acceptance: float = 0.44
    full_trace: bool = False

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.burnin < 0 or self.iterations < 1:
            raise ValueError("burnin must be >= 0 and iterations >= 1")
        if not 1 <= self.retained <= self.iterations:
            raise ValueError("retained must be in [1, iterations]")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target acceptance must be in (0, 1)")

    def scales(self, dim: int) -> np.ndarray:
        arr = np.broadcast_to(
            np.asarray(self.initial_scale, dtype=np.float64), (dim,)
        ).copy()
        if not (np.isfinite(arr).all() and (arr > 0).all()):
            raise ValueError("initial proposal scales must be positive")
        return arr


@dataclass
class ChainSet:
    """Retained draws per chain plus acceptance and convergence summaries."""

    names: tuple[str, ...]
    draws: np.ndarray  # (chains, retained, dim)
    derived: dict[str, np.ndarray]  # name -> (chains, retained)
    accept_rates: np.ndarray  # (chains, dim), post-burn-in
    scales_end_burnin: np.ndarray  # (chains, dim)
    scales_final: np.ndarray  # (chains, dim)
    rhat: dict[str, float | None] = field(default_factory=dict)
    ess: dict[str, float] = field(default_factory=dict)
    degenerate: frozenset[str] = frozenset()
    warnings: tuple[str, ...] = ()
    trace: np.ndarray | None = None  # (chains, iterations, dim) if requested

    @property
    def chains(self) -> int:
        return self.draws.shape[0]

    @property
    def retained(self) -> int:
        return self.draws.shape[1]

    def quantity(self, name: str) -> np.ndarray:
        """Per-chain draws of a parameter or derived quantity, (chains, retained)."""
        if name in self.names:
            return self.draws[:, :, self.names.index(name)]
        if name in self.derived:
            return self.derived[name]
        raise KeyError(name)

    def pooled(self, name: str) -> np.ndarray:
        """All chains' draws of ``name`` concatenated."""
        return self.quantity(name).reshape(-1)

    def max_rhat(self) -> float:
        values = [v for v in self.rhat.values() if v is not None]
        return max(values) if values else math.nan


def _find_start(
    target: TargetDensity, scales: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, float]:
    x = np.asarray(target.init, dtype=np.float64).copy()
    lp = target.log_density(x)
    _check_not_nan(lp)
    tries = 0
    while not math.isfinite(lp):
        if tries >= MAX_INIT_TRIES:
            raise SamplerError(
                f"no finite-density initial point after {MAX_INIT_TRIES} jittered tries"
            )
        x = np.asarray(target.init, dtype=np.float64) + scales * rng.standard_normal(
            target.dim
        )
        lp = target.log_density(x)
        _check_not_nan(lp)
        tries += 1
    return x, lp


def _check_not_nan(lp: float) -> None:
    if math.isnan(lp):
        raise SamplerError("log-density returned NaN; encode out-of-support as -inf")


def _run_chain(
    target: TargetDensity, cfg: SamplerConfig, chain_index: int
) -> dict[str, np.ndarray]:
    """Run one chain; deterministic in (target, cfg, chain_index)."""
    rng = np.random.default_rng([cfg.seed, chain_index])
    dim = target.dim
    scales = cfg.scales(dim)
    log_scales = np.log(scales)
    logpdf = target.log_density

    x, lp = _find_start(target, scales, rng)

    total = cfg.burnin + cfg.iterations
    keep_from = cfg.burnin + cfg.iterations - cfg.retained
    draws = np.empty((cfg.retained, dim))
    trace = np.empty((cfg.iterations, dim)) if cfg.full_trace else None

    batch_accepts = np.zeros(dim)
    batch_count = 0
    sample_accepts = np.zeros(dim)
    burnin_accepts = 0
    scales_end_burnin = scales.copy()

    for it in range(total):
        zs = rng.standard_normal(dim)
        log_us = np.log(rng.random(dim))
        for j in range(dim):
            proposal = x.copy()
            proposal[j] += scales[j] * zs[j]
            lp_prop = logpdf(proposal)
            _check_not_nan(lp_prop)
            if lp_prop - lp > log_us[j]:
                x = proposal
                lp = lp_prop
                if it < cfg.burnin:
                    batch_accepts[j] += 1
                    burnin_accepts += 1
                else:
                    sample_accepts[j] += 1

        if it < cfg.burnin:
            batch_count += 1
            if batch_count == ADAPT_BATCH:
                # stochastic-approximation step toward the target rate,
                # with a diminishing gain so late batches only fine-tune
                batch_number = (it + 1) // ADAPT_BATCH
                gain = min(1.0, 4.0 / math.sqrt(batch_number))
                rates = batch_accepts / ADAPT_BATCH
                log_scales += gain * (rates - cfg.target_acceptance)
                scales = np.exp(log_scales)
                batch_accepts[:] = 0.0
                batch_count = 0
            if it == cfg.burnin - 1:
                if burnin_accepts == 0:
                    raise SamplerError("sampler stuck")
                scales_end_burnin = scales.copy()
        else:
            if trace is not None:
                trace[it - cfg.burnin] = x
            if it >= keep_from:
                draws[it - keep_from] = x

    return {
        "draws": draws,
        "trace": trace,
        "accept_rates": sample_accepts / cfg.iterations,
        "scales_end_burnin": scales_end_burnin,
        "scales_final": scales.copy(),
    }


def sample(target: TargetDensity, cfg: SamplerConfig) -> ChainSet:
    """Draw from ``target`` with ``cfg.chains`` independent adaptive chains."""
    results = [_run_chain(target, cfg, k) for k in range(cfg.chains)]

    draws = np.stack([r["draws"] for r in results])
    derived: dict[str, np.ndarray] = {}
    if target.derived is not None:
        first = target.derived(draws[0, 0])
        derived = {
            name: np.empty((cfg.chains, cfg.retained)) for name in first
        }
        for k in range(cfg.chains):
            for i in range(cfg.retained):
                for name, value in target.derived(draws[k, i]).items():
                    derived[name][k, i] = value

    chainset = ChainSet(
        names=target.names,
        draws=draws,
        derived=derived,
        accept_rates=np.stack([r["accept_rates"] for r in results]),
        scales_end_burnin=np.stack([r["scales_end_burnin"] for r in results]),
        scales_final=np.stack([r["scales_final"] for r in results]),
        warnings=target.warnings,
        trace=(
            np.stack([r["trace"] for r in results]) if cfg.full_trace else None
        ),
    )
    if cfg.retained >= 4:
        rhat, ess, degenerate = _diagnose(chainset)
        chainset.rhat = rhat
        chainset.ess = ess
        chainset.degenerate = degenerate
        if any(v is not None and v > RHAT_WARN for v in rhat.values()):
            chainset.warnings = chainset.warnings + (
                f"split R-hat above {RHAT_WARN} for some quantity",
            )
    return chainset


def diagnostics(chainset: ChainSet) -> dict[str, tuple[float | None, float]]:
    """Split R-hat and effective sample size for every tracked quantity.

    R-hat is None (unavailable) with a single chain.  Requires at least 4
    retained draws so chains can be split in half.
    """
    rhat, ess, _ = _diagnose(chainset)
    return {name: (rhat[name], ess[name]) for name in rhat}


def _diagnose(
    chainset: ChainSet,
) -> tuple[dict[str, float | None], dict[str, float], frozenset[str]]:
    if chainset.retained < 4:
        raise ValueError("need at least 4 retained draws for diagnostics")
    names = list(chainset.names) + [
        n for n in chainset.derived if n not in chainset.names
    ]
    rhat: dict[str, float | None] = {}
    ess: dict[str, float] = {}
    degenerate: set[str] = set()
    for name in names:
        matrix = chainset.quantity(name)
        r, flagged = split_rhat(matrix)
        rhat[name] = r if chainset.chains >= 2 else None
        ess[name] = effective_sample_size(matrix)
        if flagged:
            degenerate.add(name)
    return rhat, ess, frozenset(degenerate)


def _split_halves(matrix: np.ndarray) -> np.ndarray:
    m, n = matrix.shape
    half = n // 2
    return np.vstack([matrix[:, :half], matrix[:, n - half :]])


def split_rhat(matrix: np.ndarray) -> tuple[float, bool]:
    """Split-chain potential scale reduction factor for (chains, draws).

    Returns ``(rhat, degenerate)``; zero within-chain variance reports 1.0
    with the degenerate flag set.  Values are floored at 1.0 to absorb
    numerical noise.
    """
    split = _split_halves(np.asarray(matrix, dtype=np.float64))
    n = split.shape[1]
    within = split.var(axis=1, ddof=1).mean()
    if within == 0.0:
        return 1.0, True
    var_means = split.mean(axis=1).var(ddof=1)
    var_hat = (n - 1) / n * within + var_means
    return max(1.0, float(np.sqrt(var_hat / within))), False


def effective_sample_size(matrix: np.ndarray) -> float:
    """Autocorrelation-based ESS across split chains (variogram estimator).

    Sums paired autocorrelations until the first non-positive pair, the
    usual initial-positive-sequence truncation.  Returns NaN for constant
    chains.
    """
    split = _split_halves(np.asarray(matrix, dtype=np.float64))
    m, n = split.shape
    within = split.var(axis=1, ddof=1).mean()
    if within == 0.0 or n < 2:
        return math.nan
    var_hat = (n - 1) / n * within + split.mean(axis=1).var(ddof=1)

    def rho(lag: int) -> float:
        variogram = ((split[:, lag:] - split[:, :-lag]) ** 2).mean()
        return 1.0 - variogram / (2.0 * var_hat)

    tau = 1.0
    lag = 1
    while lag + 1 < n - 1:
        pair = rho(lag) + rho(lag + 1)
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        lag += 2
    return float(min(m * n, m * n / tau))


def mcse(matrix: np.ndarray) -> float:
    """Monte Carlo standard error of the mean of (chains, draws)."""
    pooled = np.asarray(matrix, dtype=np.float64).reshape(-1)
    ess = effective_sample_size(np.atleast_2d(matrix))
    if math.isnan(ess) or ess <= 0:
        return math.nan
    return float(pooled.std(ddof=1) / math.sqrt(ess))
