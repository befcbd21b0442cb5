"""Logit assignment of demand to routing policies by departure step."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateChoiceSet, ValidationError
from .events import EventTree
from .policy import Policy, expected_origin_time


@dataclass(frozen=True)
class ChoiceParams:
    """Logit scale; negative so longer expected times lose probability."""

    kappa: float = -0.01

    def __post_init__(self):
        if not self.kappa < 0:
            raise ValidationError("kappa must be negative")


@dataclass(frozen=True)
class SplitSchedule:
    """Per-policy fractions by departure step; rows sum to one.

    ``eta`` has shape (W, T+1) with column 0 mirroring column 1.
    """

    eta: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        if self.eta.ndim != 2 or self.eta.shape[0] != len(self.labels):
            raise ValidationError("one label per split row required")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("split labels must be unique")
        sums = self.eta[:, 1:].sum(axis=0)
        if np.any(self.eta < -1e-12) or np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValidationError("splits must be a distribution at every step")

    @property
    def n_policies(self) -> int:
        return self.eta.shape[0]

    @property
    def horizon_steps(self) -> int:
        return self.eta.shape[1] - 1

    def row(self, label: str) -> np.ndarray:
        return self.eta[self.labels.index(label)]


def utilities(
    policies: Sequence[Policy], tree: EventTree, params: ChoiceParams
) -> np.ndarray:
    """Utility kappa * expected origin time per policy and departure step."""
    if not policies:
        raise ValidationError("need at least one policy")
    T = policies[0].horizon_steps
    if any(p.horizon_steps != T for p in policies):
        raise ValidationError("policies disagree on the horizon")
    out = np.empty((len(policies), T + 1))
    for w, policy in enumerate(policies):
        for t in range(1, T + 1):
            out[w, t] = params.kappa * expected_origin_time(policy, tree, t)
    out[:, 0] = out[:, 1]
    return out


def logit_splits(y: np.ndarray, labels: Sequence[str] | None = None) -> SplitSchedule:
    """Row-stabilized multinomial logit over the utility matrix."""
    y = np.asarray(y, dtype=float)
    if labels is None:
        labels = tuple(f"policy-{i}" for i in range(y.shape[0]))
    finite_max = np.max(y, axis=0)
    if np.any(~np.isfinite(finite_max)):
        raise DegenerateChoiceSet("no alternative has finite utility at some step")
    weights = np.exp(y - finite_max[np.newaxis, :])
    eta = weights / weights.sum(axis=0, keepdims=True)
    eta[:, 0] = eta[:, 1]
    return SplitSchedule(eta, tuple(labels))


def splits_for(
    policies: Sequence[Policy], tree: EventTree, params: ChoiceParams
) -> SplitSchedule:
    """Utilities and logit in one call, labeled by policy kind."""
    y = utilities(policies, tree, params)
    return logit_splits(y, tuple(p.label for p in policies))
