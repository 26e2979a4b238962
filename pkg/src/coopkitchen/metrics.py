"""Trajectory-efficiency metric suite: TES, ITES, PC, IC, RC and ROUGE-L.

All scoring is string equality over canonical action forms.  The key
difference from ROUGE-L is that the trajectory efficiency score aligns the
*prefix* of a reference trajectory: an action only counts as matched when
every earlier reference action has already been matched in order.  That is
what lets the score punish a redundant action inserted mid-sequence that a
plain longest-common-subsequence F-measure would still credit.

Histories contain only environment-accepted actions; validator-rejected
attempts are logged elsewhere and never scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence


class EmptyRatSetError(ValueError):
    """Scoring requires at least one reference trajectory."""


@dataclass(frozen=True)
class MetricConfig:
    """Hyperparameters of the efficiency score.

    beta balances task progress against redundancy; the benchmark default
    is 0.95.
    """

    beta: float = 0.95

    def __post_init__(self):
        if not (self.beta > 0 and self.beta == self.beta and self.beta != float("inf")):
            raise ValueError(f"beta must be finite and positive, got {self.beta}")


DEFAULT_CONFIG = MetricConfig()


@dataclass
class TrajectoryRecord:
    """Ordered, append-only log of one agent's accepted actions."""

    agent: str
    actions: list[str] = field(default_factory=list)
    timesteps: list[int] = field(default_factory=list)

    def append(self, action: str, timestep: int) -> None:
        self.actions.append(action)
        self.timesteps.append(timestep)

    def __len__(self) -> int:
        return len(self.actions)


@dataclass(frozen=True)
class CollaborationEvent:
    """One scored request or response bundle.

    ``kind`` is "request" for an initiation (the wrapped actions the
    initiator asked for) and "response" for the plan the responder
    committed.  Either way the bundle is scored against the *executing*
    agent's history and reference set, captured at the moment the event
    occurred (``history_len`` actions deep), never retroactively.
    """

    index: int
    kind: str  # request | response
    initiator: str
    scored_against: str
    actions: tuple[str, ...]
    ites_value: float
    history_len: int
    timestep: int

    @property
    def positive(self) -> bool:
        return self.ites_value > 0


def d_max(history: Sequence[str], rat: Sequence[str]) -> int:
    """Length of the longest reference *prefix* embedded in order in history.

    Greedy scanning is exact here: the first opportunity to match the next
    prefix element never blocks a longer match later.
    """
    d = 0
    for action in history:
        if d < len(rat) and action == rat[d]:
            d += 1
    return d


def tes(
    history: Sequence[str],
    rat_set: Sequence[Sequence[str]],
    config: MetricConfig = DEFAULT_CONFIG,
) -> float:
    """Trajectory efficiency of a history against its best-matching reference.

    For reference length m, history length n and matched prefix length d:
    (1 + beta^2) * d / (m + beta^2 * n), maximized over the reference set.
    Equal to 1 exactly when the history equals some reference verbatim.
    """
    if not rat_set:
        raise EmptyRatSetError("rat_set must contain at least one reference trajectory")
    b2 = config.beta * config.beta
    n = len(history)
    best = 0.0
    for rat in rat_set:
        m = len(rat)
        if m == 0:
            continue
        score = (1.0 + b2) * d_max(history, rat) / (m + b2 * n)
        if score > best:
            best = score
    return best


def ites(
    actions: Sequence[str],
    history: Sequence[str],
    rat_set: Sequence[Sequence[str]],
    config: MetricConfig = DEFAULT_CONFIG,
) -> float:
    """Marginal efficiency contribution of appending ``actions`` to history.

    Positive means the bundle advances task progress; zero or negative
    marks it as redundant, premature or incorrect.  An empty bundle
    contributes exactly zero.
    """
    if not actions:
        return 0.0
    extended = list(history) + list(actions)
    return tes(extended, rat_set, config) - tes(history, rat_set, config)


def pc(
    histories: Mapping[str, Sequence[str]],
    rat_sets: Mapping[str, Sequence[Sequence[str]]],
    config: MetricConfig = DEFAULT_CONFIG,
) -> float:
    """Progress completeness: mean efficiency over all involved agents."""
    if set(histories.keys()) != set(rat_sets.keys()):
        raise ValueError(
            f"agent sets differ: histories={sorted(histories)} rat_sets={sorted(rat_sets)}"
        )
    if not histories:
        raise ValueError("pc needs at least one agent")
    total = 0.0
    for agent, history in histories.items():
        total += tes(history, rat_sets[agent], config)
    return total / len(histories)


def _sign_rate(values: Iterable[float], n_required: int) -> Optional[float]:
    if n_required <= 0:
        return None
    positives = sum(1 for v in values if v > 0)
    return min(1.0, positives / n_required)


def ic(event_ites: Iterable[float], n_required: int) -> Optional[float]:
    """Initiating capability: share of required collaborations whose
    request bundle scored a positive marginal contribution.

    Spurious events beyond the required count never push the score above
    one.  Returns None when the task requires no collaboration.
    """
    return _sign_rate(event_ites, n_required)


def rc(event_ites: Iterable[float], n_required: int) -> Optional[float]:
    """Responding capability; same sign test applied to response bundles."""
    return _sign_rate(event_ites, n_required)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    m, n = len(a), len(b)
    dp = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            if a[i - 1] == b[j - 1]:
                dp[i][j] = dp[i - 1][j - 1] + 1
            else:
                dp[i][j] = max(dp[i - 1][j], dp[i][j - 1])
    return dp[m][n]


def rouge_l(
    history: Sequence[str],
    rat: Sequence[str],
    config: MetricConfig = DEFAULT_CONFIG,
) -> float:
    """Classic LCS F-measure, kept as a comparator for the efficiency score."""
    if not history or not rat:
        return 0.0
    lcs = _lcs_length(history, rat)
    if lcs == 0:
        return 0.0
    recall = lcs / len(rat)
    precision = lcs / len(history)
    b2 = config.beta * config.beta
    return (1.0 + b2) * recall * precision / (recall + b2 * precision)
