"""Incomplete-information coordination game with one private and several public signals.

Players choose an action trading off closeness to an unknown state against
closeness to the average action of others.  Informed players observe every
public signal plus their private signal and, in the linear equilibrium,
weight the signals by precision with the private precision discounted by
the coordination motive.  The closed-form weights are cross-checked by a
best-response fixed-point iteration that never sees the closed form.

Weight construction keeps the sum-to-one identity exact: the private
weight is defined as one minus the public weights' sum, which differs from
its ratio form by at most a couple of ulps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, ParameterError


@dataclass(frozen=True)
class GameParams:
    """Primitives: coordination weight, signal precisions, informed share.

    ``complementarity`` is the weight on matching the average action
    (0 = purely private action such as hand-washing); ``informed_share``
    is the fraction of players who observe the public signals.
    """

    complementarity: float
    private_precision: float
    public_precisions: tuple[float, ...]
    informed_share: float

    def __post_init__(self):
        if not 0.0 <= self.complementarity < 1.0:
            raise ParameterError(
                f"complementarity must be in [0, 1), got {self.complementarity}"
            )
        if not self.private_precision > 0:
            raise ParameterError("private signal precision must be > 0")
        if any(a < 0 for a in self.public_precisions):
            raise ParameterError("public signal precisions must be >= 0")
        if not 0.0 <= self.informed_share <= 1.0:
            raise ParameterError(
                f"informed_share must be in [0, 1], got {self.informed_share}"
            )
        if self.complementarity * self.informed_share >= 1.0:
            raise ParameterError("complementarity * informed_share must be < 1")


@dataclass(frozen=True)
class SignalRealization:
    theta: float
    public: tuple[float, ...]
    private: float


@dataclass(frozen=True)
class EquilibriumWeights:
    public: tuple[float, ...]
    private: float

    def __post_init__(self):
        if self.private < 0 or any(w < 0 for w in self.public):
            raise ParameterError("equilibrium weights must be nonnegative")

    def weight_sum(self) -> float:
        return float(np.sum(np.asarray(self.public)) + self.private)

    def to_dict(self) -> dict:
        return {"public": [float(w) for w in self.public], "private": float(self.private)}


def equilibrium_weights(params: GameParams) -> EquilibriumWeights:
    """Closed-form linear-equilibrium weights.

    Public weight k is alpha_k over a denominator of the discounted private
    precision (1 - r P) beta plus the summed public precisions; the private
    weight is the remainder to one.
    """
    discount = 1.0 - params.complementarity * params.informed_share
    denom = discount * params.private_precision + float(np.sum(params.public_precisions))
    if denom <= 0:
        raise ParameterError("degenerate weight denominator")
    public = tuple(a / denom for a in params.public_precisions)
    private = max(0.0, 1.0 - float(np.sum(public)))
    return EquilibriumWeights(public=public, private=private)


def equilibrium_action(weights: EquilibriumWeights, signals: SignalRealization) -> float:
    """Action of an informed player: weighted sum of public draws and the private draw."""
    if len(weights.public) != len(signals.public):
        raise ParameterError(
            f"{len(signals.public)} public draws for {len(weights.public)} weights"
        )
    pub = float(np.dot(weights.public, signals.public)) if weights.public else 0.0
    return pub + weights.private * signals.private


def private_only_action(signals: SignalRealization) -> float:
    """An uninformed player simply follows the private draw."""
    return signals.private


def expected_average_action(params: GameParams, theta: float, public_draws) -> float:
    """Population-average action given the realized public draws.

    Private draws integrate out to the true state across the continuum, so
    the informed contribution uses the state where the private draw would
    be, and the uninformed contribution is the state itself.
    """
    public_draws = tuple(float(v) for v in public_draws)
    w = equilibrium_weights(params)
    if len(w.public) != len(public_draws):
        raise ParameterError(
            f"{len(public_draws)} public draws for {len(w.public)} weights"
        )
    informed = float(np.dot(w.public, public_draws)) + w.private * theta
    p = params.informed_share
    return p * informed + (1.0 - p) * theta


def fixed_point_oracle(params: GameParams, tol: float = 1e-13, max_iter: int = 10000) -> EquilibriumWeights:
    """Best-response iteration within linear strategies.

    Conjecture coefficients (c_k on public draws, c_x on the private draw)
    for informed players, form the optimal response
    a = (1 - r) E[state] + r E[average action], read off the new
    coefficients, and repeat.  The update is a contraction with factor
    r * P < 1.  Independent of ``equilibrium_weights`` by construction.
    """
    if not tol > 0:
        raise ParameterError("tol must be > 0")
    r = params.complementarity
    p = params.informed_share
    beta = params.private_precision
    alphas = np.asarray(params.public_precisions, dtype=float)
    total = alphas.sum() + beta

    # Bayesian posterior coefficients (the r = 0 best response) as the start.
    c_pub = alphas / total
    c_priv = beta / total

    for _ in range(max_iter):
        anchor = 1.0 - r * p + r * p * c_priv
        new_pub = r * p * c_pub + anchor * alphas / total
        new_priv = anchor * beta / total
        change = max(
            float(np.max(np.abs(new_pub - c_pub))) if len(alphas) else 0.0,
            abs(new_priv - c_priv),
        )
        c_pub, c_priv = new_pub, new_priv
        if change < tol:
            return EquilibriumWeights(public=tuple(c_pub), private=float(c_priv))
    raise ConvergenceError(
        f"no fixed point within {max_iter} iterations (last change {change:.3e})",
        last_iterate=EquilibriumWeights(public=tuple(c_pub), private=float(c_priv)),
    )


def behavior_response(
    params: GameParams,
    coverage: float,
    theta: float,
    theta_pre: float = 0.0,
    public_draws=None,
) -> float:
    """Population-expected protective action at a given informed share.

    Informed players act on the equilibrium weights around the campaign
    state; uninformed players stay anchored at the pre-campaign state.  The
    result is their mixture, so it moves linearly from ``theta_pre`` at
    zero coverage to the informed mean action at full coverage.  With
    ``public_draws`` omitted the public signals are taken at their mean
    (the campaign state), making the informed mean exactly ``theta``.
    """
    if not 0.0 <= coverage <= 1.0:
        raise ParameterError(f"coverage must be in [0, 1], got {coverage}")
    prim = replace(params, informed_share=coverage)
    w = equilibrium_weights(prim)
    if public_draws is None:
        public_draws = tuple(theta for _ in w.public)
    public_draws = tuple(float(v) for v in public_draws)
    if len(public_draws) != len(w.public):
        raise ParameterError(
            f"{len(public_draws)} public draws for {len(w.public)} weights"
        )
    informed = float(np.dot(w.public, public_draws)) + w.private * theta
    return coverage * informed + (1.0 - coverage) * theta_pre
