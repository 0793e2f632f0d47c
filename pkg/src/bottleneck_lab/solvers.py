"""Alternating-minimization solvers for the two bottleneck frameworks.

Both frameworks compress an input ``X`` into a cluster variable ``Xhat``
through a soft encoder ``p(xhat|x)`` and score the compression against the
label ``Y`` of a fixed rule ``p(y|x)``:

* ``ib``   minimizes ``I(X;Xhat) - beta * I(Y;Xhat)``.  Its per-pair cost is
  ``KL(p(y|x) || dec(y|xhat))`` and the optimal decoder is the Bayes mixture
  of rule rows.
* ``dual`` swaps the KL arguments: the cost is ``KL(dec(y|xhat) || p(y|x))``
  and the functional is ``I(X;Xhat) + beta * E[cost]``.  The optimal decoder
  becomes the normalized *geometric* mixture of rule rows, which puts the
  emphasis on predicting the label rather than summarizing it.

Matrix conventions (see :mod:`bottleneck_lab.probability`): encoders are
``(n_x, k)`` row-stochastic, inverse encoders ("weights") are ``(k, n_x)``,
decoders are ``(k, n_y)``.  Clusters whose marginal mass hits exactly zero
freeze: their ``log p(xhat)`` term is ``-inf``, so the softmax encoder update
keeps their column at zero without renormalizing them away — cluster indices
stay stable for the whole run.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import logsumexp, xlogy

from .probability import JointDistribution, mutual_information

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200_000
# Clusters with marginal mass below this are reported as dead/frozen.
DEAD_CLUSTER_MASS = 1e-12


class Framework(str, Enum):
    """Which distortion/decoder pair the solver alternates on."""

    IB = "ib"
    DUAL = "dual"


def as_framework(value) -> Framework:
    """Coerce ``'ib'`` / ``'dual'`` / ``Framework`` to a Framework member."""
    if isinstance(value, Framework):
        return value
    try:
        return Framework(str(value).lower())
    except ValueError:
        raise ValueError(
            f"unknown framework {value!r}; expected 'ib' or 'dual'") from None


@dataclass
class BottleneckState:
    """One self-consistent snapshot of a solver.

    ``marginal``, ``weights`` and ``decoder`` are always the ones *derived*
    from ``encoder`` (and the problem), so downstream identities that assume
    chain consistency hold at machine precision, converged or not.

    ``log_z`` is dual-only: the per-cluster log-normalizer of the geometric
    decoder (``None`` for ``ib`` states).
    """

    framework: Framework
    beta: float
    encoder: np.ndarray        # (n_x, k)
    marginal: np.ndarray       # (k,)
    weights: np.ndarray        # (k, n_x) rows p(x | xhat)
    decoder: np.ndarray        # (k, n_y)
    log_decoder: np.ndarray    # (k, n_y)
    log_z: np.ndarray | None = None

    @property
    def n_clusters(self) -> int:
        return self.encoder.shape[1]

    def alive(self) -> np.ndarray:
        """Boolean mask of clusters carrying mass above the dead threshold."""
        return self.marginal > DEAD_CLUSTER_MASS

    def effective_clusters(self) -> int:
        return int(np.count_nonzero(self.alive()))


@dataclass
class SolveReport:
    """Summary of one ``solve`` call.  All information values in nats."""

    framework: Framework
    beta: float
    converged: bool
    n_iterations: int
    i_x: float
    i_y: float
    functional: float
    expected_distortion: float
    encoder_delta: float
    functional_trace: np.ndarray | None = None


# ---------------------------------------------------------------------------
# elementary steps
# ---------------------------------------------------------------------------

def derive_state(problem: JointDistribution, framework,
                 encoder: np.ndarray, beta: float) -> BottleneckState:
    """Recompute marginal / weights / decoder implied by an encoder.

    Dead clusters (zero marginal) get the prior ``p_x`` as placeholder
    weights so the decoder rows stay well-defined; they carry no mass, so
    nothing downstream depends on the placeholder.
    """
    framework = as_framework(framework)
    p_x = problem.p_x
    marginal = encoder.T @ p_x
    weights = (encoder * p_x[:, None]).T
    alive = marginal > 0.0
    weights[alive] /= marginal[alive, None]
    weights[~alive] = p_x
    if framework is Framework.IB:
        decoder = weights @ problem.rule
        log_decoder = np.log(decoder)
        log_z = None
    else:
        log_unnorm = weights @ problem.log_rule
        log_z = logsumexp(log_unnorm, axis=1)
        log_decoder = log_unnorm - log_z[:, None]
        decoder = np.exp(log_decoder)
    return BottleneckState(framework=framework, beta=float(beta),
                           encoder=encoder, marginal=marginal,
                           weights=weights, decoder=decoder,
                           log_decoder=log_decoder, log_z=log_z)


def ib_distortion(problem: JointDistribution,
                  state: BottleneckState) -> np.ndarray:
    """``d[x, c] = KL(rule row x || decoder row c)`` for the ib cost."""
    rule_neg_entropy = np.sum(problem.rule * problem.log_rule, axis=1)
    return rule_neg_entropy[:, None] - problem.rule @ state.log_decoder.T


def dual_distortion(problem: JointDistribution,
                    state: BottleneckState) -> np.ndarray:
    """``d[x, c] = KL(decoder row c || rule row x)`` for the dual cost."""
    dec_neg_entropy = np.sum(xlogy(state.decoder, state.decoder), axis=1)
    return dec_neg_entropy[None, :] - problem.log_rule @ state.decoder.T


def distortion_matrix(problem: JointDistribution,
                      state: BottleneckState) -> np.ndarray:
    if state.framework is Framework.IB:
        return ib_distortion(problem, state)
    return dual_distortion(problem, state)


def encoder_update(marginal: np.ndarray, distortion: np.ndarray,
                   beta: float) -> np.ndarray:
    """Softmax re-estimation ``p(xhat|x) ∝ p(xhat) * exp(-beta * d[x, xhat])``.

    Computed in log space with a per-row max shift; zero-mass clusters give
    ``log p(xhat) = -inf`` and therefore stay at exactly zero.
    """
    with np.errstate(divide="ignore"):
        logits = np.log(marginal)[None, :] - beta * distortion
    logits -= logits.max(axis=1, keepdims=True)
    enc = np.exp(logits)
    enc /= enc.sum(axis=1, keepdims=True)
    return enc


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

def encoder_information(p_x: np.ndarray, encoder: np.ndarray,
                        marginal: np.ndarray) -> float:
    """``I(X; Xhat)`` of ``p_x`` with a row-stochastic encoder, in nats."""
    alive = marginal > 0.0
    enc = encoder[:, alive]
    per_cell = xlogy(enc, enc) - enc * np.log(marginal[alive])[None, :]
    return float(p_x @ per_cell.sum(axis=1))


def cluster_label_joint(problem: JointDistribution,
                        state: BottleneckState) -> np.ndarray:
    """Joint ``p(xhat, y)`` through the Markov chain ``Xhat - X - Y``.

    Built from the inverse encoder and the *rule* (i.e. the Bayes decoder),
    never from the framework decoder, so it is the true label joint for
    either framework.
    """
    return state.marginal[:, None] * (state.weights @ problem.rule)


def information_point(problem: JointDistribution,
                      state: BottleneckState) -> tuple[float, float]:
    """``(I(X;Xhat), I(Y;Xhat))`` of a state, in nats."""
    i_x = encoder_information(problem.p_x, state.encoder, state.marginal)
    i_y = mutual_information(cluster_label_joint(problem, state))
    return i_x, i_y


def expected_distortion(problem: JointDistribution,
                        state: BottleneckState) -> float:
    """Mean per-pair cost ``E_{p(x) p(xhat|x)}[d(x, xhat)]``."""
    d = distortion_matrix(problem, state)
    return float(np.sum(problem.p_x[:, None] * state.encoder * d))


def functional_value(problem: JointDistribution,
                     state: BottleneckState) -> float:
    """The quantity each framework minimizes, at this state.

    ``ib``:   ``I(X;Xhat) - beta * I(Y;Xhat)``
    ``dual``: ``I(X;Xhat) + beta * E[KL(decoder || rule)]``
    """
    i_x, i_y = information_point(problem, state)
    if state.framework is Framework.IB:
        return i_x - state.beta * i_y
    return i_x + state.beta * expected_distortion(problem, state)


@dataclass
class DualDistortionSplit:
    """Exact two-part split of the mean dual cost.

    ``label_info_shift``    = ``I(Xhat;Yhat) - I(X;Yhat)`` where ``Yhat`` is
    the label *predicted* through encoder + decoder.  ``prediction_mismatch``
    = ``E_{p(x)}[KL(predicted row x || rule row x)] >= 0``.  Their sum equals
    ``E[KL(decoder || rule)]`` identically for any consistent state.
    """

    total: float
    label_info_shift: float
    prediction_mismatch: float


def dual_distortion_split(problem: JointDistribution,
                          state: BottleneckState) -> DualDistortionSplit:
    p_x = problem.p_x
    predicted = state.encoder @ state.decoder          # (n_x, n_y) rows
    i_pred_clusters = mutual_information(
        state.marginal[:, None] * state.decoder)
    i_pred_inputs = mutual_information(p_x[:, None] * predicted)
    shift = i_pred_clusters - i_pred_inputs
    mismatch = float(np.sum(
        p_x[:, None] * (xlogy(predicted, predicted)
                        - predicted * problem.log_rule)))
    return DualDistortionSplit(total=shift + mismatch,
                               label_info_shift=shift,
                               prediction_mismatch=mismatch)


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

def default_encoder(n_x: int, n_clusters: int) -> np.ndarray:
    """Deterministic broad initializer: cycling peaks mixed with uniform."""
    enc = np.full((n_x, n_clusters), 0.5 / n_clusters)
    enc[np.arange(n_x), np.arange(n_x) % n_clusters] += 0.5
    return enc


def prepare_encoder(n_x: int, n_clusters: int | None,
                    init_encoder: np.ndarray | None,
                    rng: np.random.Generator | None) -> np.ndarray:
    """Validated starting encoder under the shared precedence rule:
    ``init_encoder`` if given, else random Dirichlet rows from ``rng`` if
    given, else the deterministic broad mix."""
    if init_encoder is not None:
        enc = np.asarray(init_encoder, dtype=float).copy()
        if enc.ndim != 2 or enc.shape[0] != n_x:
            raise ValueError(
                f"init_encoder must have shape ({n_x}, k); got {enc.shape}")
        row_sums = enc.sum(axis=1, keepdims=True)
        if np.any(row_sums <= 0.0) or enc.min() < 0.0:
            raise ValueError("init_encoder rows must be non-negative "
                             "with positive mass")
        return enc / row_sums
    k = n_clusters if n_clusters is not None else n_x
    if k < 1:
        raise ValueError("n_clusters must be >= 1")
    if rng is not None:
        return rng.dirichlet(np.ones(k), size=n_x)
    return default_encoder(n_x, k)


def solve(problem: JointDistribution, beta: float, framework,
          *, n_clusters: int | None = None,
          init_encoder: np.ndarray | None = None,
          rng: np.random.Generator | None = None,
          tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          track_functional: bool = True
          ) -> tuple[BottleneckState, SolveReport]:
    """Run the alternating updates at a fixed ``beta`` until the encoder
    moves less than ``tol`` in sup norm (or ``max_iter`` is hit).

    Initialization precedence: ``init_encoder`` if given, else random
    Dirichlet rows from ``rng`` if given, else a deterministic broad mix
    over ``n_clusters`` (default ``n_x``) clusters.  The returned state is
    rebuilt from the final encoder, so marginal, weights and decoder are
    exactly consistent with it.
    """
    framework = as_framework(framework)
    if beta < 0.0:
        raise ValueError("beta must be non-negative")
    enc = prepare_encoder(problem.n_x, n_clusters, init_encoder, rng)
    p_x = problem.p_x
    rule = problem.rule
    log_rule = problem.log_rule
    rule_neg_entropy = np.sum(rule * log_rule, axis=1)
    is_ib = framework is Framework.IB

    trace: list[float] = [] if track_functional else None
    delta = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        marginal = enc.T @ p_x
        weights = (enc * p_x[:, None]).T
        alive = marginal > 0.0
        weights[alive] /= marginal[alive, None]
        weights[~alive] = p_x
        if is_ib:
            decoder = weights @ rule
            log_decoder = np.log(decoder)
            d = rule_neg_entropy[:, None] - rule @ log_decoder.T
        else:
            log_unnorm = weights @ log_rule
            log_z = logsumexp(log_unnorm, axis=1)
            log_decoder = log_unnorm - log_z[:, None]
            decoder = np.exp(log_decoder)
            dec_neg_entropy = np.sum(xlogy(decoder, decoder), axis=1)
            d = dec_neg_entropy[None, :] - log_rule @ decoder.T

        if track_functional:
            i_x = encoder_information(p_x, enc, marginal)
            if is_ib:
                i_y = mutual_information(marginal[:, None] * decoder)
                trace.append(i_x - beta * i_y)
            else:
                mean_d = float(np.sum(p_x[:, None] * enc * d))
                trace.append(i_x + beta * mean_d)

        new_enc = encoder_update(marginal, d, beta)
        delta = float(np.max(np.abs(new_enc - enc)))
        enc = new_enc
        if delta <= tol:
            converged = True
            break

    state = derive_state(problem, framework, enc, beta)
    i_x, i_y = information_point(problem, state)
    mean_d = expected_distortion(problem, state)
    functional = i_x - beta * i_y if is_ib else i_x + beta * mean_d
    if track_functional:
        trace.append(functional)
    report = SolveReport(
        framework=framework, beta=float(beta), converged=converged,
        n_iterations=iterations, i_x=i_x, i_y=i_y, functional=functional,
        expected_distortion=mean_d, encoder_delta=delta,
        functional_trace=np.asarray(trace) if track_functional else None)
    return state, report


def solve_ib(problem: JointDistribution, beta: float, **kwargs):
    """``solve`` with the classic summarization cost (Bayes decoder)."""
    return solve(problem, beta, Framework.IB, **kwargs)


def solve_dual(problem: JointDistribution, beta: float, **kwargs):
    """``solve`` with the prediction-side cost (geometric decoder)."""
    return solve(problem, beta, Framework.DUAL, **kwargs)
