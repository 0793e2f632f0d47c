"""Discrete probability primitives shared by the bottleneck solvers.

Conventions used throughout the package:

* Distributions are dense float64 numpy arrays.
* A "rule" is a row-stochastic matrix ``p(y|x)`` of shape ``(n_x, n_y)``:
  row ``x`` is the label distribution of input symbol ``x``.
* Encoders are row-stochastic ``(n_x, n_xhat)``; decoders are row-stochastic
  ``(n_xhat, n_y)``; inverse encoders ("weights" below) are row-stochastic
  ``(n_xhat, n_x)``.
* All information quantities are returned in nats.  Conversion to bits is a
  presentation concern and happens only at output time (see ``cli``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, rel_entr, xlogy

# Tolerance for "this array should already be normalized" checks.  Inputs
# passing the check are renormalized exactly, so downstream code may rely on
# sums of 1.0 up to rounding of the division itself.
NORMALIZATION_ATOL = 1e-12
# Conditional rules read from user files get this added to every cell by
# default (then rows are renormalized) so that logs and KL divergences exist.
DEFAULT_SMOOTHING = 1e-9

LN2 = float(np.log(2.0))


class DistributionError(ValueError):
    """Invalid probability data (shape, sign, normalization, support)."""


class NormalizationError(DistributionError):
    """An array that must sum to one does not, beyond tolerance."""


class UndefinedDivergenceError(DistributionError):
    """KL divergence requested where the reference has a support hole."""


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DistributionError(f"{name} contains non-finite entries")
    if arr.size and arr.min() < 0.0:
        raise DistributionError(f"{name} contains negative entries")
    return arr


def _require_normalized(arr: np.ndarray, name: str, axis: int | None = None,
                        atol: float = NORMALIZATION_ATOL) -> None:
    sums = arr.sum(axis=axis)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=atol):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise NormalizationError(
            f"{name} must be normalized within {atol:g} "
            f"(worst deviation {worst:.3e})")


def entropy(p) -> float:
    """Shannon entropy of a distribution, in nats.

    Zero cells contribute zero.  Raises :class:`NormalizationError` if ``p``
    does not sum to one within ``NORMALIZATION_ATOL``.
    """
    p = _as_float_array(p, "p")
    _require_normalized(p, "p")
    return float(-xlogy(p, p).sum())


def kl_divergence(p, q) -> float:
    """``KL(p || q)`` in nats.

    ``p`` must be normalized; ``q`` must be strictly positive wherever ``p``
    is (a support hole raises :class:`UndefinedDivergenceError`, distinct
    from normalization problems).  ``q`` itself is not required to be
    normalized — callers occasionally compare against unnormalized reference
    weights — but every standard use in this package passes distributions.
    """
    p = _as_float_array(p, "p")
    q = _as_float_array(q, "q")
    if p.shape != q.shape:
        raise DistributionError(
            f"shape mismatch: p {p.shape} vs q {q.shape}")
    _require_normalized(p, "p")
    if np.any((q == 0.0) & (p > 0.0)):
        raise UndefinedDivergenceError(
            "q has zero mass where p is positive; KL(p||q) is undefined")
    return float(rel_entr(p, q).sum())


def mutual_information(joint) -> float:
    """Mutual information of a joint table ``p(a, b)``, in nats.

    The table must be elementwise non-negative and sum to one within
    ``NORMALIZATION_ATOL``.  Computed as ``KL(joint || outer(margins))``;
    zero cells contribute zero.
    """
    joint = _as_float_array(joint, "joint")
    if joint.ndim != 2:
        raise DistributionError("joint must be a 2-D table")
    _require_normalized(joint, "joint")
    pa = joint.sum(axis=1)
    pb = joint.sum(axis=0)
    return float(rel_entr(joint, np.outer(pa, pb)).sum())


def conditional_from_joint(joint):
    """Split a joint table into ``(p_a, rows)`` with ``rows[a] = p(b|a)``.

    Rows with zero marginal mass are returned uniform, so the result is
    always row-stochastic.
    """
    joint = _as_float_array(joint, "joint")
    if joint.ndim != 2:
        raise DistributionError("joint must be a 2-D table")
    _require_normalized(joint, "joint")
    p_a = joint.sum(axis=1)
    rows = np.empty_like(joint)
    alive = p_a > 0.0
    rows[alive] = joint[alive] / p_a[alive, None]
    rows[~alive] = 1.0 / joint.shape[1]
    return p_a, rows


def bayes_decoder(weights, rule) -> np.ndarray:
    """Label decoder obtained by averaging rule rows: ``dec = weights @ rule``.

    ``weights`` has shape ``(n_xhat, n_x)`` with rows ``p(x | xhat)``;
    ``rule`` is ``p(y|x)`` of shape ``(n_x, n_y)``.  Rows of the result are
    exactly the mixture label distributions ``p(y | xhat)``.
    """
    weights = _as_float_array(weights, "weights")
    rule = _as_float_array(rule, "rule")
    _require_normalized(weights, "weights rows", axis=1, atol=1e-9)
    _require_normalized(rule, "rule rows", axis=1, atol=1e-9)
    return weights @ rule


def geometric_decoder(weights, log_rule):
    """Normalized geometric mixture of rule rows.

    Row ``c`` of the result is ``exp(sum_x weights[c, x] * log_rule[x]) / Z_c``
    — the weighted geometric mean of the conditional rows, renormalized.
    Returns ``(rows, log_z)`` where ``log_z[c]`` is the log of the
    normalizer ``Z_c`` (always ``<= 0``, since a geometric mean of
    distributions is sub-normalized).

    ``log_rule`` must be finite, i.e. the rule must be strictly positive;
    load tables through :meth:`JointDistribution.from_conditional` (which
    smooths) to guarantee this.
    """
    weights = _as_float_array(weights, "weights")
    log_rule = np.asarray(log_rule, dtype=float)
    if not np.all(np.isfinite(log_rule)):
        raise DistributionError(
            "log_rule contains non-finite entries; the geometric decoder "
            "requires a strictly positive rule")
    _require_normalized(weights, "weights rows", axis=1, atol=1e-9)
    log_unnorm = weights @ log_rule
    log_z = logsumexp(log_unnorm, axis=1)
    rows = np.exp(log_unnorm - log_z[:, None])
    return rows, log_z


def smooth_rows(rows: np.ndarray, epsilon: float) -> np.ndarray:
    """Add ``epsilon`` to every cell and renormalize each row exactly."""
    if epsilon < 0.0:
        raise DistributionError("smoothing epsilon must be non-negative")
    rows = rows + epsilon
    return rows / rows.sum(axis=1, keepdims=True)


@dataclass
class JointDistribution:
    """A finite joint distribution ``p(x, y)`` in solver-ready form.

    Attributes
    ----------
    p_x : (n_x,) input marginal, strictly positive.
    rule : (n_x, n_y) row-stochastic conditional ``p(y|x)``, strictly
        positive (enforced via smoothing at construction).
    log_rule : elementwise log of ``rule``.
    joint : (n_x, n_y) table ``p_x[:, None] * rule``.
    p_y : (n_y,) label marginal.
    """

    p_x: np.ndarray
    rule: np.ndarray
    log_rule: np.ndarray = field(repr=False)
    joint: np.ndarray = field(repr=False)
    p_y: np.ndarray = field(repr=False)

    @classmethod
    def from_conditional(cls, rule, p_x=None,
                         smoothing_epsilon: float = DEFAULT_SMOOTHING
                         ) -> "JointDistribution":
        """Build from ``p(y|x)`` rows and an optional input marginal.

        ``rule`` rows must be normalized within 1e-9 on input; they are
        smoothed by ``smoothing_epsilon`` and renormalized exactly.  With
        ``smoothing_epsilon = 0`` the rule must already be strictly
        positive.  ``p_x`` defaults to uniform and must be strictly
        positive (drop unused symbols before building the problem).
        """
        rule = _as_float_array(rule, "rule")
        if rule.ndim != 2 or min(rule.shape) < 2:
            raise DistributionError(
                "rule must be a 2-D table with at least two rows and columns")
        _require_normalized(rule, "rule rows", axis=1, atol=1e-9)
        rule = smooth_rows(rule, smoothing_epsilon)
        if rule.min() <= 0.0:
            raise DistributionError(
                "rule has zero cells; pass a positive smoothing_epsilon")
        n_x = rule.shape[0]
        if p_x is None:
            p_x = np.full(n_x, 1.0 / n_x)
        else:
            p_x = _as_float_array(p_x, "p_x")
            if p_x.shape != (n_x,):
                raise DistributionError(
                    f"p_x has shape {p_x.shape}, expected ({n_x},)")
            _require_normalized(p_x, "p_x")
            if p_x.min() <= 0.0:
                raise DistributionError(
                    "p_x must be strictly positive (drop unused symbols)")
            p_x = p_x / p_x.sum()
        joint = p_x[:, None] * rule
        return cls(p_x=p_x, rule=rule, log_rule=np.log(rule), joint=joint,
                   p_y=joint.sum(axis=0))

    @classmethod
    def from_joint(cls, joint,
                   smoothing_epsilon: float = DEFAULT_SMOOTHING
                   ) -> "JointDistribution":
        """Build from a full joint table (rows with zero mass are rejected)."""
        p_x, rows = conditional_from_joint(joint)
        if p_x.min() <= 0.0:
            raise DistributionError(
                "joint has empty input rows; drop unused symbols")
        return cls.from_conditional(rows, p_x,
                                    smoothing_epsilon=smoothing_epsilon)

    @property
    def n_x(self) -> int:
        return self.rule.shape[0]

    @property
    def n_y(self) -> int:
        return self.rule.shape[1]

    def mutual_information(self) -> float:
        """``I(X;Y)`` of the stored joint, in nats."""
        return mutual_information(self.joint)

    def entropy_y(self) -> float:
        """``H(Y)`` of the label marginal, in nats."""
        return entropy(self.p_y)
