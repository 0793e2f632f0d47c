"""Multi-class prediction-error experiments and exponent bounds.

Ties the solvers to downstream classification: Chernoff information for
pairwise exponents, the cluster-averaged exponent bound that the
prediction-side functional dominates, and a seeded Monte-Carlo experiment
measuring misclassification rates of encoder-compressed empirical
distributions as the test-set size grows.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, rel_entr

from .annealing import SplitConfig, sweep_with_states
from .probability import DistributionError, JointDistribution
from .solvers import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    BottleneckState,
    Framework,
    as_framework,
    functional_value,
)

#: Golden ratio conjugate: interval shrink factor per golden-section step.
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

#: Targets beta = 2, 4, ..., 64 land exactly on this warm-start ladder.
WARM_LADDER = np.exp2(np.arange(-2.0, 6.25, 0.25))

DEFAULT_BETAS = np.exp2(np.arange(1.0, 7.0))        # log2 beta in 1..6
DEFAULT_N_VALUES = tuple(2 ** k for k in range(9))  # 1, 2, 4, ..., 256


def chernoff_information(p0, p1, tol: float = 1e-9) -> tuple[float, float]:
    """Best achievable pairwise error exponent and its mixing weight.

    Minimizes the log-partition ``g(lam) = log sum_x p0^lam p1^(1-lam)``
    over ``lam in (0, 1)`` by golden-section search (``g`` is convex; the
    bracket shrinks below ``tol``) and returns ``(-g(lam*), lam*)``.
    Identical inputs return ``(0.0, 0.5)`` by convention.  At the
    minimizer the tilted distribution ``p_lam* ∝ p0^lam* p1^(1-lam*)`` is
    equidistant from both inputs in divergence; the residual distance gap
    scales with ``tol`` times the curvature of ``g``.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if p0.shape != p1.shape or p0.ndim != 1:
        raise ValueError("p0 and p1 must be 1-D with matching length")
    if np.any(p0 <= 0.0) or np.any(p1 <= 0.0):
        raise DistributionError(
            "chernoff_information needs strictly positive vectors; "
            "smooth first")
    if np.array_equal(p0, p1):
        return 0.0, 0.5
    log0 = np.log(p0)
    log1 = np.log(p1)

    def g(lam: float) -> float:
        return float(logsumexp(lam * log0 + (1.0 - lam) * log1))

    a, b = 0.0, 1.0
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    g_c, g_d = g(c), g(d)
    while b - a > tol:
        if g_c <= g_d:
            b, d, g_d = d, c, g_c
            c = b - GOLDEN * (b - a)
            g_c = g(c)
        else:
            a, c, g_c = c, d, g_d
            d = a + GOLDEN * (b - a)
            g_d = g(d)
    lam = 0.5 * (a + b)
    return -g(lam), lam


def tilted_mixture(p0, p1, lam: float) -> np.ndarray:
    """The normalized geometric intermediate ``p_lam ∝ p0^lam p1^(1-lam)``."""
    log_mix = lam * np.log(p0) + (1.0 - lam) * np.log(p1)
    return np.exp(log_mix - logsumexp(log_mix))


def mean_exponent_bound(state: BottleneckState,
                        joint: JointDistribution) -> float:
    """Cluster-averaged classification exponent at a solver state.

    Evaluates ``E over p(y, cluster) of D[p(x|cluster) || p(x|y)]`` with
    the state's own decoder supplying ``p(y|cluster)``.  For a
    prediction-side state with ``beta >= 1`` this provably cannot exceed
    the state's functional (the gap is ``(beta - 1) E[d]`` plus a decoder
    divergence, both non-negative), and that is asserted; for ``beta < 1``
    the slack terms can change sign, so a violation only warns.
    """
    cond = joint.joint / joint.p_y[None, :]  # columns p(x | y)
    kl_matrix = rel_entr(state.weights[:, None, :],
                         cond.T[None, :, :]).sum(axis=-1)  # (k, n_y)
    bound = float(np.sum(state.marginal[:, None] * state.decoder
                         * kl_matrix))
    if state.framework is Framework.DUAL:
        functional = functional_value(joint, state)
        if state.beta >= 1.0 and not bound <= functional + 1e-9:
            raise AssertionError(
                f"exponent bound {bound:.12g} exceeds the functional "
                f"{functional:.12g} at beta = {state.beta:g}")
        if state.beta < 1.0 and not bound <= functional + 1e-9:
            warnings.warn(
                f"exponent bound {bound:.6g} exceeds the functional "
                f"{functional:.6g} at beta = {state.beta:g} < 1; the "
                "domination argument needs beta >= 1", UserWarning)
    return bound


@dataclass
class ClassificationProblem:
    """M classes over a finite input alphabet.

    ``class_conditionals`` rows are ``p(x | class)``; ``prior`` defaults
    to uniform.  ``joint()`` assembles the induced solver problem whose
    rule is ``p(class | x)``.
    """

    class_conditionals: np.ndarray  # (M, n_x)
    prior: np.ndarray | None = None

    def __post_init__(self):
        self.class_conditionals = np.asarray(self.class_conditionals,
                                             dtype=float)
        if self.class_conditionals.ndim != 2:
            raise ValueError("class_conditionals must be 2-D")
        if np.any(self.class_conditionals <= 0.0):
            raise DistributionError(
                "class conditionals must be strictly positive; smooth "
                "first")
        sums = self.class_conditionals.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise DistributionError("class conditional rows must sum to 1")
        if self.prior is None:
            self.prior = np.full(self.n_classes, 1.0 / self.n_classes)
        else:
            self.prior = np.asarray(self.prior, dtype=float)
            if self.prior.shape != (self.n_classes,):
                raise ValueError("prior length must match class count")
            if np.any(self.prior <= 0.0) or abs(self.prior.sum() - 1.0) > 1e-9:
                raise DistributionError("prior must be positive, summing "
                                        "to 1")

    @property
    def n_classes(self) -> int:
        return self.class_conditionals.shape[0]

    @property
    def n_x(self) -> int:
        return self.class_conditionals.shape[1]

    def joint(self) -> JointDistribution:
        joint_xy = (self.prior[:, None] * self.class_conditionals).T
        return JointDistribution.from_joint(joint_xy)


@dataclass
class ErrorCurve:
    """Misclassification rate versus test-set size for one trained
    encoder.  ``ci_halfwidth`` entries are normal-approximation 95%
    binomial half-widths."""

    framework: str
    beta: float
    n_values: np.ndarray
    p_err: np.ndarray
    ci_halfwidth: np.ndarray
    trials: int
    seed: int


def _empirical_counts(problem: ClassificationProblem, n_values, trials: int,
                      seed: int) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Common-random-number sample streams for the whole experiment.

    One generator seeded by ``seed`` draws the class labels and a single
    ``(trials, max_n)`` uniform block; those fixed draws are turned into
    per-class samples by inverse CDF, so every (framework, beta) pairing
    sees identical data.  Returns the labels and, per test size ``n``, the
    empirical input distribution of the first ``n`` samples of each trial.
    """
    rng = np.random.default_rng(seed)
    max_n = int(max(n_values))
    ys = rng.integers(0, problem.n_classes, size=trials)
    us = rng.random((trials, max_n))
    cdfs = np.cumsum(problem.class_conditionals, axis=1)
    cdfs[:, -1] = 1.0
    xs = np.empty((trials, max_n), dtype=np.intp)
    for c in range(problem.n_classes):
        mask = ys == c
        xs[mask] = np.searchsorted(cdfs[c], us[mask], side="right")
    counts = np.zeros((trials, problem.n_x))
    rows = np.arange(trials)
    phats: dict[int, np.ndarray] = {}
    prev = 0
    for n in sorted(int(n) for n in n_values):
        segment = xs[:, prev:n]
        np.add.at(counts, (np.repeat(rows, n - prev), segment.ravel()), 1.0)
        prev = n
        phats[n] = counts / n
    return ys, phats


def run_prediction_experiment(problem: ClassificationProblem, framework,
                              beta_list=None, n_values=None,
                              trials: int = 10_000, seed: int = 0, *,
                              split: SplitConfig | None = None,
                              tol: float = DEFAULT_TOL,
                              max_iter: int = DEFAULT_MAX_ITER
                              ) -> list[ErrorCurve]:
    """Misclassification curves of one framework's trained encoders.

    For each ``beta`` (trained once by an annealed warm-start sweep), each
    trial draws a class label uniformly, forms the empirical input
    distribution of ``n`` i.i.d. samples from ``p(x|y)``, pushes it
    through the trained encoder, and classifies by minimum divergence to
    the per-class pushforwards ``p(x|y_i) @ encoder``; ties take the
    lowest class index, and a class at infinite divergence merely drops
    out of the argmin.  Sample streams are common random numbers: runs
    with equal ``seed`` reuse identical draws across frameworks and betas.
    """
    framework = as_framework(framework)
    beta_list = np.asarray(DEFAULT_BETAS if beta_list is None
                           else beta_list, dtype=float)
    n_values = np.asarray(DEFAULT_N_VALUES if n_values is None
                          else n_values, dtype=int)
    if np.any(n_values < 1) or np.any(np.diff(n_values) <= 0):
        raise ValueError("n_values must be increasing positive integers")
    if trials < 1:
        raise ValueError("trials must be positive")

    joint = problem.joint()
    grid = np.union1d(WARM_LADDER, beta_list)
    _, states = sweep_with_states(joint, framework, grid,
                                  split=split or SplitConfig(), tol=tol,
                                  max_iter=max_iter)
    ys, phats = _empirical_counts(problem, n_values, trials, seed)

    curves: list[ErrorCurve] = []
    for beta in beta_list:
        state = states[int(np.searchsorted(grid, beta))]
        encoder = state.encoder[:, state.alive()]
        references = problem.class_conditionals @ encoder  # (M, k)
        p_err = np.empty(n_values.size)
        for j, n in enumerate(n_values):
            pushed = phats[int(n)] @ encoder  # (trials, k)
            divergences = np.stack(
                [rel_entr(pushed, references[i][None, :]).sum(axis=1)
                 for i in range(problem.n_classes)], axis=1)
            decisions = np.argmin(divergences, axis=1)
            p_err[j] = np.mean(decisions != ys)
        half = 1.96 * np.sqrt(p_err * (1.0 - p_err) / trials)
        curves.append(ErrorCurve(
            framework=str(framework.value), beta=float(beta),
            n_values=n_values.copy(), p_err=p_err, ci_halfwidth=half,
            trials=trials, seed=seed))
    return curves


def error_curves_to_csv(curves: list[ErrorCurve], path) -> None:
    """One row per (framework, beta, n); floats use ``repr``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["framework", "beta", "n", "p_err", "ci_halfwidth",
                         "trials", "seed"])
        for curve in curves:
            for n, err, half in zip(curve.n_values, curve.p_err,
                                    curve.ci_halfwidth):
                writer.writerow([curve.framework, repr(curve.beta), int(n),
                                 repr(float(err)), repr(float(half)),
                                 curve.trials, curve.seed])
