"""Posterior targets for the risk-ratio-for-the-treated model family.

Every model shares the same numerator: per-arm Poisson regressions of the
binary outcome on the centered risk score, so the exponentiated intercept
is the arm's outcome risk at the threshold.  The denominator models the
per-arm mean of ``y * (1 - t)`` in one of three ways:

* ``pois`` — a second pair of Poisson regressions;
* ``flex`` — aggregate Binomial counts with informative logit-normal
  priors that push the two arms apart, stabilizing a near-zero
  denominator difference;
* ``prod.flex`` — a product decomposition: Poisson regression of the
  outcome with the no-treatment indicator as a regressor, times a
  Binomial model for the no-treatment share.

The treated risk ratio is then ``1 - numerator_jump / denominator_jump``.
Constrained variants reparameterize: the ratio itself becomes a sampled
coordinate with a positive-support prior, and the above-threshold
intercept is derived from it, so every posterior draw is positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import WindowedSample
from .errors import DataError
from .mcmc import ChainSet, SamplerConfig, TargetDensity, sample as run_sampler

KNOWN_TAGS = ("pois.pois", "pois.flex", "pois.prod.flex")

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters for every model variant; all overridable.

    ``coef_variance`` applies to each regression coefficient.  The flex
    and product Binomial probabilities get logit-scale normal priors whose
    defaults place the above-threshold probability low and the
    below-threshold one high.  ``rrt_family``/``rrt_params`` define the
    positive-support prior used by constrained models: ``("gamma",
    (shape, rate))`` or ``("lognormal", (mu, sigma))``.
    """

    coef_variance: float = 100.0
    q1_logit: tuple[float, float] = (-3.0, 1.0)
    q0_logit: tuple[float, float] = (3.0, 1.0)
    r1_logit: tuple[float, float] = (-3.0, 1.0)
    r0_logit: tuple[float, float] = (3.0, 1.0)
    rrt_family: str = "gamma"
    rrt_params: tuple[float, float] = (3.0, 1.0)

    def __post_init__(self) -> None:
        if not self.coef_variance > 0:
            raise DataError("coefficient prior variance must be > 0")
        for name in ("q1_logit", "q0_logit", "r1_logit", "r0_logit"):
            _, sd = getattr(self, name)
            if not sd > 0:
                raise DataError(f"{name} prior sd must be > 0")
        if self.rrt_family not in ("gamma", "lognormal"):
            raise DataError(f"unknown rrt prior family {self.rrt_family!r}")
        a, b = self.rrt_params
        if self.rrt_family == "gamma" and not (a > 0 and b > 0):
            raise DataError("gamma prior shape and rate must be > 0")
        if self.rrt_family == "lognormal" and not b > 0:
            raise DataError("lognormal prior scale must be > 0")

    def rrt_log_prior(self, value: float) -> float:
        if value <= 0.0:
            return -math.inf
        a, b = self.rrt_params
        if self.rrt_family == "gamma":
            return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(value) - b * value
        # lognormal(mu, sigma)
        z = (math.log(value) - a) / b
        return -math.log(value) - math.log(b) - 0.5 * (_LOG_2PI + z * z)


@dataclass(frozen=True)
class ModelSpec:
    """Which numerator/denominator pair to fit, and whether constrained."""

    denominator: str
    constrained: bool = False
    priors: PriorSpec = field(default_factory=PriorSpec)
    numerator: str = "pois"

    def __post_init__(self) -> None:
        if self.tag not in KNOWN_TAGS:
            raise DataError(
                f"unknown model tag {self.tag!r}; valid tags: {', '.join(KNOWN_TAGS)}"
            )

    @property
    def tag(self) -> str:
        return f"{self.numerator}.{self.denominator}"

    @property
    def label(self) -> str:
        return self.tag + (":constrained" if self.constrained else "")

    @classmethod
    def from_tag(
        cls, tag: str, constrained: bool = False, priors: PriorSpec | None = None
    ) -> "ModelSpec":
        if tag not in KNOWN_TAGS:
            raise DataError(
                f"unknown model tag {tag!r}; valid tags: {', '.join(KNOWN_TAGS)}"
            )
        numerator, denominator = tag.split(".", 1)
        return cls(
            denominator=denominator,
            constrained=constrained,
            priors=priors or PriorSpec(),
            numerator=numerator,
        )


@dataclass(frozen=True)
class RrtEstimate:
    """Posterior summary of the treated risk ratio for one model fit."""

    tag: str
    constrained: bool
    h: float | None
    mean: float
    median: float
    l95: float
    u95: float
    share_nonpositive: float
    rhat_max: float
    n1: int | None = None
    n0: int | None = None
    warnings: tuple[str, ...] = ()


class _ExpSum:
    """Memoized ``sum(exp(beta * x))`` over a fixed record subset.

    Component-wise proposals re-query the same coefficient value many
    times; a small cache keyed by the exact float avoids recomputing the
    vectorized sum.  Safe for concurrent use: entries are pure.
    """

    __slots__ = ("x", "cache")

    def __init__(self, x: np.ndarray) -> None:
        self.x = np.asarray(x, dtype=np.float64)
        self.cache: dict[float, float] = {}

    def __call__(self, beta: float) -> float:
        value = self.cache.get(beta)
        if value is None:
            value = float(np.exp(beta * self.x).sum())
            if len(self.cache) > 128:
                self.cache.clear()
            self.cache[beta] = value
        return value


@dataclass(frozen=True)
class _Arm:
    """Sufficient statistics for one threshold arm."""

    n: int
    sum_y: float
    sum_xy: float
    sum_ytbar: float
    sum_x_ytbar: float
    n_tbar: int
    exp_num: _ExpSum  # over all x*, for the outcome regressions
    exp_den: _ExpSum  # over all x*, for the pois denominator
    exp_tbar1: _ExpSum  # over x* with t==0, for the product model
    exp_tbar0: _ExpSum  # over x* with t==1

    @property
    def mean_y(self) -> float:
        return self.sum_y / self.n

    @property
    def mean_ytbar(self) -> float:
        return self.sum_ytbar / self.n


def _arm_stats(s: WindowedSample) -> tuple[_Arm, _Arm]:
    arms = []
    for z in (0, 1):
        mask = s.arm(z)
        x = s.x_star[mask]
        y = s.y[mask]
        ytbar = s.y_tbar[mask]
        tbar = 1 - s.t[mask]
        arms.append(
            _Arm(
                n=int(mask.sum()),
                sum_y=float(y.sum()),
                sum_xy=float((y * x).sum()),
                sum_ytbar=float(ytbar.sum()),
                sum_x_ytbar=float((ytbar * x).sum()),
                n_tbar=int(tbar.sum()),
                exp_num=_ExpSum(x),
                exp_den=_ExpSum(x),
                exp_tbar1=_ExpSum(x[tbar == 1]),
                exp_tbar0=_ExpSum(x[tbar == 0]),
            )
        )
    return arms[0], arms[1]


def _log_sigmoid(v: float) -> float:
    if v >= 0.0:
        return -math.log1p(math.exp(-v))
    return v - math.log1p(math.exp(v))


def _expit(v: float) -> float:
    if v >= 0.0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _normal_lp(v: float, mean: float, variance: float) -> float:
    return -0.5 * (_LOG_2PI + math.log(variance) + (v - mean) ** 2 / variance)


def _poisson_terms(intercept: float, slope: float, sum_v: float, sum_xv: float,
                   exp_sum: _ExpSum) -> float:
    # log-likelihood of 0/1 counts under a log-linear rate, up to constants
    return intercept * sum_v + slope * sum_xv - math.exp(intercept) * exp_sum(slope)


def _binomial_terms(k: int, n: int, logit_p: float) -> float:
    return k * _log_sigmoid(logit_p) + (n - k) * _log_sigmoid(-logit_p)


def _intercept_init(mean: float, n: int) -> float:
    return math.log(max(mean, 0.5 / n))


def _numerator_warnings(a0: _Arm, a1: _Arm) -> tuple[str, ...]:
    if a0.sum_y == 0 and a1.sum_y == 0:
        return ("no outcome events in either arm; posterior is prior-dominated",)
    return ()


def build_target_pois_pois(
    s: WindowedSample, priors: PriorSpec, constrained: bool
) -> TargetDensity:
    """Poisson numerator and Poisson denominator regressions."""
    a0, a1 = _arm_stats(s)
    var = priors.coef_variance
    warnings = _numerator_warnings(a0, a1)

    if not constrained:
        names = ("alpha1", "alpha0", "beta1", "beta0",
                 "delta1", "delta0", "gamma1", "gamma0")

        def logp(th: np.ndarray) -> float:
            al1, al0, b1, b0, d1, d0, g1, g0 = th
            try:
                ll = _poisson_terms(al1, b1, a1.sum_y, a1.sum_xy, a1.exp_num)
                ll += _poisson_terms(al0, b0, a0.sum_y, a0.sum_xy, a0.exp_num)
                ll += _poisson_terms(d1, g1, a1.sum_ytbar, a1.sum_x_ytbar, a1.exp_den)
                ll += _poisson_terms(d0, g0, a0.sum_ytbar, a0.sum_x_ytbar, a0.exp_den)
            except OverflowError:
                return -math.inf
            for v in th:
                ll += _normal_lp(v, 0.0, var)
            return ll

        def derived(th: np.ndarray) -> dict[str, float]:
            al1, al0, _, _, d1, d0, _, _ = th
            psi = math.exp(d1) - math.exp(d0)
            pi = math.exp(al1) - math.exp(al0)
            return {"rrt": 1.0 - pi / psi if psi != 0.0 else math.inf}

        init = np.array([
            _intercept_init(a1.mean_y, a1.n), _intercept_init(a0.mean_y, a0.n),
            0.0, 0.0,
            _intercept_init(a1.mean_ytbar, a1.n), _intercept_init(a0.mean_ytbar, a0.n),
            0.0, 0.0,
        ])
        return TargetDensity(8, logp, names, init, derived, warnings)

    names = ("rrt", "alpha0", "beta1", "beta0",
             "delta1", "delta0", "gamma1", "gamma0")

    def logp_c(th: np.ndarray) -> float:
        rrt, al0, b1, b0, d1, d0, g1, g0 = th
        if rrt <= 0.0:
            return -math.inf
        try:
            psi = math.exp(d1) - math.exp(d0)
            arg = (1.0 - rrt) * psi + math.exp(al0)
            if arg <= 0.0:
                return -math.inf
            al1 = math.log(arg)
            ll = _poisson_terms(al1, b1, a1.sum_y, a1.sum_xy, a1.exp_num)
            ll += _poisson_terms(al0, b0, a0.sum_y, a0.sum_xy, a0.exp_num)
            ll += _poisson_terms(d1, g1, a1.sum_ytbar, a1.sum_x_ytbar, a1.exp_den)
            ll += _poisson_terms(d0, g0, a0.sum_ytbar, a0.sum_x_ytbar, a0.exp_den)
        except OverflowError:
            return -math.inf
        ll += priors.rrt_log_prior(rrt)
        for v in th[1:]:
            ll += _normal_lp(v, 0.0, var)
        return ll

    def derived_c(th: np.ndarray) -> dict[str, float]:
        rrt, al0, _, _, d1, d0, _, _ = th
        psi = math.exp(d1) - math.exp(d0)
        return {"alpha1": math.log((1.0 - rrt) * psi + math.exp(al0))}

    init = np.array([
        1.0, _intercept_init(a0.mean_y, a0.n),
        0.0, 0.0,
        _intercept_init(a1.mean_ytbar, a1.n), _intercept_init(a0.mean_ytbar, a0.n),
        0.0, 0.0,
    ])
    return TargetDensity(8, logp_c, names, init, derived_c, warnings)


def build_target_pois_flex(
    s: WindowedSample, priors: PriorSpec, constrained: bool
) -> TargetDensity:
    """Poisson numerator with an aggregate Binomial denominator."""
    a0, a1 = _arm_stats(s)
    var = priors.coef_variance
    k1, k0 = int(a1.sum_ytbar), int(a0.sum_ytbar)
    q1m, q1s = priors.q1_logit
    q0m, q0s = priors.q0_logit
    warnings = _numerator_warnings(a0, a1)

    def common(th: np.ndarray, al1: float) -> float:
        _, al0, b1, b0, lq1, lq0 = th
        ll = _poisson_terms(al1, b1, a1.sum_y, a1.sum_xy, a1.exp_num)
        ll += _poisson_terms(al0, b0, a0.sum_y, a0.sum_xy, a0.exp_num)
        ll += _binomial_terms(k1, a1.n, lq1)
        ll += _binomial_terms(k0, a0.n, lq0)
        ll += _normal_lp(al0, 0.0, var)
        ll += _normal_lp(b1, 0.0, var) + _normal_lp(b0, 0.0, var)
        ll += _normal_lp(lq1, q1m, q1s**2) + _normal_lp(lq0, q0m, q0s**2)
        return ll

    if not constrained:
        names = ("alpha1", "alpha0", "beta1", "beta0", "logit_q1", "logit_q0")

        def logp(th: np.ndarray) -> float:
            try:
                return common(th, th[0]) + _normal_lp(th[0], 0.0, var)
            except OverflowError:
                return -math.inf

        def derived(th: np.ndarray) -> dict[str, float]:
            al1, al0, _, _, lq1, lq0 = th
            psi = _expit(lq1) - _expit(lq0)
            pi = math.exp(al1) - math.exp(al0)
            return {"rrt": 1.0 - pi / psi if psi != 0.0 else math.inf}

        init = np.array([
            _intercept_init(a1.mean_y, a1.n), _intercept_init(a0.mean_y, a0.n),
            0.0, 0.0, q1m, q0m,
        ])
        return TargetDensity(6, logp, names, init, derived, warnings)

    names = ("rrt", "alpha0", "beta1", "beta0", "logit_q1", "logit_q0")

    def logp_c(th: np.ndarray) -> float:
        rrt, al0, _, _, lq1, lq0 = th
        if rrt <= 0.0:
            return -math.inf
        try:
            psi = _expit(lq1) - _expit(lq0)
            arg = (1.0 - rrt) * psi + math.exp(al0)
            if arg <= 0.0:
                return -math.inf
            return common(th, math.log(arg)) + priors.rrt_log_prior(rrt)
        except OverflowError:
            return -math.inf

    def derived_c(th: np.ndarray) -> dict[str, float]:
        rrt, al0, _, _, lq1, lq0 = th
        psi = _expit(lq1) - _expit(lq0)
        return {"alpha1": math.log((1.0 - rrt) * psi + math.exp(al0))}

    init = np.array([
        1.0, _intercept_init(a0.mean_y, a0.n), 0.0, 0.0, q1m, q0m,
    ])
    return TargetDensity(6, logp_c, names, init, derived_c, warnings)


def build_target_pois_prod_flex(
    s: WindowedSample, priors: PriorSpec, constrained: bool
) -> TargetDensity:
    """Poisson numerator with a product denominator.

    The denominator mean is decomposed into the outcome risk among the
    untreated times the no-treatment share.  The outcome regression uses
    every record in the arm with the no-treatment indicator as a
    regressor; the derived mean evaluates it at the threshold for the
    untreated.  An arm with no untreated records is allowed (the Binomial
    handles a zero count) but flagged.
    """
    a0, a1 = _arm_stats(s)
    var = priors.coef_variance
    r1m, r1s = priors.r1_logit
    r0m, r0s = priors.r0_logit
    warnings = _numerator_warnings(a0, a1)
    for z, arm in ((0, a0), (1, a1)):
        if arm.n_tbar == 0:
            warnings = warnings + (f"arm z={z} has no untreated records",)

    def den_terms(arm: _Arm, d: float, g: float, kap: float, lr: float,
                  k_tbar: int) -> float:
        normalizer = math.exp(d) * (
            math.exp(kap) * arm.exp_tbar1(g) + arm.exp_tbar0(g)
        )
        ll = d * arm.sum_y + g * arm.sum_xy + kap * arm.sum_ytbar - normalizer
        ll += _binomial_terms(k_tbar, arm.n, lr)
        return ll

    def loglik(th_tail: np.ndarray, al1: float, al0: float) -> float:
        b1, b0, d1, d0, g1, g0, kap1, kap0, lr1, lr0 = th_tail
        ll = _poisson_terms(al1, b1, a1.sum_y, a1.sum_xy, a1.exp_num)
        ll += _poisson_terms(al0, b0, a0.sum_y, a0.sum_xy, a0.exp_num)
        ll += den_terms(a1, d1, g1, kap1, lr1, a1.n_tbar)
        ll += den_terms(a0, d0, g0, kap0, lr0, a0.n_tbar)
        for v in th_tail[:8]:
            ll += _normal_lp(v, 0.0, var)
        ll += _normal_lp(lr1, r1m, r1s**2) + _normal_lp(lr0, r0m, r0s**2)
        return ll

    def psi_of(th_tail: np.ndarray) -> float:
        _, _, d1, d0, _, _, kap1, kap0, lr1, lr0 = th_tail
        return math.exp(d1 + kap1) * _expit(lr1) - math.exp(d0 + kap0) * _expit(lr0)

    if not constrained:
        names = ("alpha1", "alpha0", "beta1", "beta0", "delta1", "delta0",
                 "gamma1", "gamma0", "kappa1", "kappa0", "logit_r1", "logit_r0")

        def logp(th: np.ndarray) -> float:
            try:
                return (
                    loglik(th[2:], th[0], th[1])
                    + _normal_lp(th[0], 0.0, var)
                    + _normal_lp(th[1], 0.0, var)
                )
            except OverflowError:
                return -math.inf

        def derived(th: np.ndarray) -> dict[str, float]:
            psi = psi_of(th[2:])
            pi = math.exp(th[0]) - math.exp(th[1])
            return {"rrt": 1.0 - pi / psi if psi != 0.0 else math.inf}

        init = np.array([
            _intercept_init(a1.mean_y, a1.n), _intercept_init(a0.mean_y, a0.n),
            0.0, 0.0,
            _intercept_init(a1.mean_y, a1.n), _intercept_init(a0.mean_y, a0.n),
            0.0, 0.0, 0.0, 0.0, r1m, r0m,
        ])
        return TargetDensity(12, logp, names, init, derived, warnings)

    names = ("rrt", "alpha0", "beta1", "beta0", "delta1", "delta0",
             "gamma1", "gamma0", "kappa1", "kappa0", "logit_r1", "logit_r0")

    def logp_c(th: np.ndarray) -> float:
        rrt, al0 = th[0], th[1]
        if rrt <= 0.0:
            return -math.inf
        try:
            psi = psi_of(th[2:])
            arg = (1.0 - rrt) * psi + math.exp(al0)
            if arg <= 0.0:
                return -math.inf
            return (
                loglik(th[2:], math.log(arg), al0)
                + _normal_lp(al0, 0.0, var)
                + priors.rrt_log_prior(rrt)
            )
        except OverflowError:
            return -math.inf

    def derived_c(th: np.ndarray) -> dict[str, float]:
        psi = psi_of(th[2:])
        return {"alpha1": math.log((1.0 - th[0]) * psi + math.exp(th[1]))}

    init = np.array([
        1.0, _intercept_init(a0.mean_y, a0.n),
        0.0, 0.0,
        _intercept_init(a1.mean_y, a1.n), _intercept_init(a0.mean_y, a0.n),
        0.0, 0.0, 0.0, 0.0, r1m, r0m,
    ])
    return TargetDensity(12, logp_c, names, init, derived_c, warnings)


_BUILDERS = {
    "pois": build_target_pois_pois,
    "flex": build_target_pois_flex,
    "prod.flex": build_target_pois_prod_flex,
}


def build_target(s: WindowedSample, spec: ModelSpec) -> TargetDensity:
    """Construct the posterior target for a model specification."""
    return _BUILDERS[spec.denominator](s, spec.priors, spec.constrained)


def summarize(
    chainset: ChainSet,
    tag: str,
    h: float | None = None,
    n1: int | None = None,
    n0: int | None = None,
    constrained: bool = False,
) -> RrtEstimate:
    """Pool retained draws of the treated risk ratio into point and interval.

    Uses equal-tailed 95% quantiles of the pooled draws and records the
    share of non-positive draws.  Non-finite draws indicate a target bug
    and raise.
    """
    draws = chainset.pooled("rrt")
    if not np.isfinite(draws).all():
        raise ValueError("non-finite RRT draws present; the target is buggy")
    l95, med, u95 = np.quantile(draws, [0.025, 0.5, 0.975])
    return RrtEstimate(
        tag=tag,
        constrained=constrained,
        h=h,
        mean=float(draws.mean()),
        median=float(med),
        l95=float(l95),
        u95=float(u95),
        share_nonpositive=float((draws <= 0.0).mean()),
        rhat_max=chainset.max_rhat(),
        n1=n1,
        n0=n0,
        warnings=chainset.warnings,
    )


def fit_bayes(
    s: WindowedSample,
    spec: ModelSpec,
    cfg: SamplerConfig,
    h: float | None = None,
) -> tuple[RrtEstimate, ChainSet]:
    """Build the target for ``spec``, sample it, and summarize the ratio."""
    target = build_target(s, spec)
    chainset = run_sampler(target, cfg)
    estimate = summarize(
        chainset, spec.tag, h=h, n1=s.n1, n0=s.n0, constrained=spec.constrained
    )
    return estimate, chainset


def constrained_audit(chainset: ChainSet, spec: ModelSpec) -> tuple[float, float]:
    """Audit a constrained fit: (min ratio draw, max round-trip error).

    The round-trip recomputes the ratio from each draw's derived
    above-threshold intercept and denominator jump and compares it with
    the stored draw; exact inversion is part of the model contract.
    """
    if not spec.constrained:
        raise ValueError("audit applies to constrained fits only")
    names = chainset.names
    idx = {name: i for i, name in enumerate(names)}
    draws = chainset.draws.reshape(-1, len(names))
    alpha1 = chainset.derived["alpha1"].reshape(-1)
    rrt = draws[:, idx["rrt"]]
    alpha0 = draws[:, idx["alpha0"]]

    if spec.denominator == "pois":
        psi = np.exp(draws[:, idx["delta1"]]) - np.exp(draws[:, idx["delta0"]])
    elif spec.denominator == "flex":
        psi = _expit_vec(draws[:, idx["logit_q1"]]) - _expit_vec(draws[:, idx["logit_q0"]])
    else:
        psi = np.exp(draws[:, idx["delta1"]] + draws[:, idx["kappa1"]]) * _expit_vec(
            draws[:, idx["logit_r1"]]
        ) - np.exp(draws[:, idx["delta0"]] + draws[:, idx["kappa0"]]) * _expit_vec(
            draws[:, idx["logit_r0"]]
        )

    rrt_back = 1.0 - (np.exp(alpha1) - np.exp(alpha0)) / psi
    return float(rrt.min()), float(np.abs(rrt_back - rrt).max())


def _expit_vec(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out
