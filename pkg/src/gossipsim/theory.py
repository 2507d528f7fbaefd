"""Branching-process model of push dissemination over a degree distribution.

Treats one message's spread as a branching process on the configuration
model: following a random edge reaches a node whose remaining contacts are
described by the excess degree distribution q. A scheme is summarized by two
derivatives of its forward-count generating functions at 1:

* mean forwards from a source node,
* mean forwards from a node reached along an edge.

The expected receiver count is ``1 + F'(1) / (1 - Farrow'(1))`` and diverges
as the edge-level mean crosses 1; that crossing is the dissemination phase
transition, and the parameter value where it happens is the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .topology import DegreeDistribution

#: Tail mass below which analytic distributions are truncated.
POISSON_TAIL = 1e-12

#: Absolute tolerance for the alpha bisection.
ALPHA_TOL = 1e-6

_ALPHA_BRACKET = (1e-3, 1e3)


class DegenerateDistributionError(ValueError):
    """Distribution has zero mean degree; excess degree is undefined."""


class NoPercolationError(ValueError):
    """Mean excess degree <= 1: no parameter value can reach a giant component."""


class NoCrossingError(ValueError):
    """The margin never crosses 1 on the searched parameter interval."""


@dataclass(frozen=True)
class ExcessDegreeView:
    """Excess degree distribution q_i with its mean."""

    q: dict[int, float]
    mean_excess: float


@dataclass(frozen=True)
class GossipFunction:
    """Degree-dependent forwarding probability.

    Families:
      fixed  -- constant probability, the fixed-probability gossip scheme
      ddf1   -- 1 for degrees <= 2, 1/i**alpha above
      ddf2   -- 1/ln(alpha*i) for i > max(2, e/alpha), 1 otherwise; the
                guard keeps the value inside [0, 1] without clamping
    """

    family: str
    param: float

    def __post_init__(self):
        if self.family not in ("fixed", "ddf1", "ddf2"):
            raise ValueError(f"unknown gossip function family {self.family!r}")
        if self.family == "fixed":
            if not 0.0 <= self.param <= 1.0:
                raise ValueError("fixed probability must lie in [0, 1]")
        elif self.param <= 0.0:
            raise ValueError("alpha must be positive")

    def __call__(self, degree: int) -> float:
        if self.family == "fixed":
            return self.param
        if self.family == "ddf1":
            if degree <= 2:
                return 1.0
            return float(degree) ** -self.param
        cutoff = max(2.0, math.e / self.param)
        if degree > cutoff:
            return 1.0 / math.log(self.param * degree)
        return 1.0


def fixed_gossip(gamma: float) -> GossipFunction:
    return GossipFunction("fixed", gamma)


def ddf1(alpha: float) -> GossipFunction:
    return GossipFunction("ddf1", alpha)


def ddf2(alpha: float) -> GossipFunction:
    return GossipFunction("ddf2", alpha)


@dataclass(frozen=True)
class ProbabilisticBroadcast:
    """All-or-nothing rebroadcast with probability beta (scheme marker)."""

    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")


#: A dissemination scheme for the analytical model: either a per-neighbor
#: gossip function (fixed probability or degree dependent) or probabilistic
#: broadcast.
Scheme = GossipFunction | ProbabilisticBroadcast


@dataclass(frozen=True)
class BranchingSummary:
    """First derivatives at 1 of the forward-count generating functions."""

    f_prime_at_1: float        # mean forwards from a source node
    f_arrow_prime_at_1: float  # mean forwards from a node reached via an edge
    theta: float | None = None  # mean edge-level acceptance, degree-dependent schemes


# ---------------------------------------------------------------------------
# distributions

def poisson_degree_distribution(mean: float, tail: float = POISSON_TAIL) -> DegreeDistribution:
    """Poisson degree distribution truncated where the tail mass drops below
    ``tail``, then renormalized."""
    if mean <= 0:
        raise ValueError("mean must be positive")
    probs = {}
    p = math.exp(-mean)
    cumulative = p
    k = 0
    probs[0] = p
    while 1.0 - cumulative > tail:
        k += 1
        p *= mean / k
        probs[k] = p
        cumulative += p
        if k > 10_000_000:  # pragma: no cover - unreachable for sane means
            raise RuntimeError("poisson truncation did not converge")
    total = sum(probs.values())
    return DegreeDistribution.from_probabilities(
        {d: v / total for d, v in probs.items()})


def kregular_degree_distribution(k: int) -> DegreeDistribution:
    if k < 0:
        raise ValueError("k must be nonnegative")
    return DegreeDistribution.from_probabilities({k: 1.0})


# ---------------------------------------------------------------------------
# excess degree and thresholds

def excess_view(d: DegreeDistribution) -> ExcessDegreeView:
    """Excess degree distribution q_i = (i+1) p_{i+1} / <p> and its mean.

    The mean is computed from the moment identity (<p^2> - <p>) / <p>; the
    direct sum over q agrees within 1e-9 (asserted by the test suite).
    """
    if d.mean_degree <= 0:
        raise DegenerateDistributionError("mean degree is zero")
    q = {}
    for degree, p in d.probabilities.items():
        if degree >= 1 and p > 0:
            q[degree - 1] = degree * p / d.mean_degree
    mean_excess = (d.second_moment - d.mean_degree) / d.mean_degree
    return ExcessDegreeView(q=q, mean_excess=mean_excess)


def fp_threshold(d: DegreeDistribution) -> float:
    """Phase-transition probability 1/<q> for fixed-probability gossip.

    The identical value is the threshold for the probabilistic-broadcast
    parameter beta: both schemes have edge-level mean parameter * <q>.
    """
    view = excess_view(d)
    if view.mean_excess <= 1.0:
        raise NoPercolationError(
            f"mean excess degree {view.mean_excess} <= 1: even flooding "
            "cannot reach a giant component in this model")
    return 1.0 / view.mean_excess


def ddg_theta(d: DegreeDistribution, fn: GossipFunction) -> float:
    """Mean acceptance probability over the excess degree distribution."""
    view = excess_view(d)
    return sum(qj * fn(j) for j, qj in view.q.items())


def branching_summary(d: DegreeDistribution, scheme: Scheme) -> BranchingSummary:
    """Derivative summary of a scheme on a degree distribution.

    For probabilistic broadcast, the source node's unconditional first
    broadcast is neglected (large-network approximation); the node-level
    derivative follows from f_i = beta * p_{i+1}.
    """
    view = excess_view(d)
    if isinstance(scheme, ProbabilisticBroadcast):
        beta = scheme.beta
        p0 = d.probabilities.get(0, 0.0)
        f_prime = beta * (d.mean_degree - 1.0 + p0)
        f_arrow = beta * view.mean_excess
        return BranchingSummary(f_prime, f_arrow, theta=None)
    if scheme.family == "fixed":
        gamma = scheme.param
        return BranchingSummary(gamma * d.mean_degree,
                                gamma * view.mean_excess, theta=None)
    theta = ddg_theta(d, scheme)
    return BranchingSummary(theta * d.mean_degree,
                            theta * view.mean_excess, theta=theta)


def percolation_margin(d: DegreeDistribution, scheme: Scheme) -> float:
    """Edge-level mean forward count; >= 1 means above the phase transition."""
    return branching_summary(d, scheme).f_arrow_prime_at_1


def expected_receivers(d: DegreeDistribution, scheme: Scheme) -> float:
    """Expected receiver count 1 + F'(1)/(1 - Farrow'(1)).

    Returns ``math.inf`` at or above the phase transition; divergence is a
    modeled outcome, not an error.
    """
    summary = branching_summary(d, scheme)
    if summary.f_arrow_prime_at_1 >= 1.0:
        return math.inf
    return 1.0 + summary.f_prime_at_1 / (1.0 - summary.f_arrow_prime_at_1)


def solve_alpha(d: DegreeDistribution, family: str) -> float:
    """Alpha where a degree-dependent family sits exactly at the transition.

    Theta is decreasing in alpha for both families on their valid domain, so
    the margin crosses 1 at most once; bisection to ALPHA_TOL.
    """
    if family not in ("ddf1", "ddf2"):
        raise ValueError("family must be 'ddf1' or 'ddf2'")

    def margin(alpha: float) -> float:
        return percolation_margin(d, GossipFunction(family, alpha))

    lo, hi = _ALPHA_BRACKET
    if not (margin(lo) > 1.0 > margin(hi)):
        raise NoCrossingError(
            f"{family}: margin does not cross 1 on [{lo}, {hi}]")
    while hi - lo > ALPHA_TOL:
        mid = 0.5 * (lo + hi)
        if margin(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def threshold_curve(protocol_family: str, dist_family: str,
                    values) -> tuple[list[tuple[float, float]], list[tuple[float, str]]]:
    """Threshold parameter across a family of distributions.

    protocol_family: "fp" (gamma = 1/<q>, also the beta threshold) or
    "ddf1"/"ddf2" (alpha solved at margin 1). dist_family: "poisson" over
    mean degrees, or "kregular" over integer k. Per-point failures are
    collected and the curve continues.
    """
    if protocol_family not in ("fp", "ddf1", "ddf2"):
        raise ValueError("protocol_family must be 'fp', 'ddf1' or 'ddf2'")
    if dist_family not in ("poisson", "kregular"):
        raise ValueError("dist_family must be 'poisson' or 'kregular'")
    points: list[tuple[float, float]] = []
    failures: list[tuple[float, str]] = []
    for x in values:
        try:
            if dist_family == "poisson":
                d = poisson_degree_distribution(float(x))
            else:
                d = kregular_degree_distribution(int(x))
            if protocol_family == "fp":
                points.append((float(x), fp_threshold(d)))
            else:
                points.append((float(x), solve_alpha(d, protocol_family)))
        except (ValueError, NoPercolationError, NoCrossingError) as exc:
            failures.append((float(x), str(exc)))
    return points, failures


def write_threshold_csv(points, path) -> None:
    """CSV emission: header `x,threshold`, 9 significant digits."""
    lines = ["x,threshold\n"]
    lines.extend(f"{x:.9g},{t:.9g}\n" for x, t in points)
    with open(path, "w") as fh:
        fh.write("".join(lines))
