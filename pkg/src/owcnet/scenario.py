"""Monte-Carlo user drops, AP-failure scenarios and aggregate statistics.

Drops come from SplitMix64 followed by a partial
Fisher-Yates shuffle of the location indices; bounded draws use rejection
sampling. The generator is spelled out here so that drop sequences are
portable to any language.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .allocator import MULTI_AP, SINGLE_AP, ProblemInstance, solve_exact, validate
from .linkmetrics import SinrParams, to_db

_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) without modulo bias."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n


@dataclass(frozen=True)
class DropPlan:
    seed: int = 1
    n_users: int = 1
    n_drops: int = 20
    n_locations: int = 32

    def __post_init__(self):
        if not 0 <= self.n_users <= self.n_locations:
            raise ValueError(f"n_users must lie in [0, {self.n_locations}], got {self.n_users}")
        if self.n_drops < 0:
            raise ValueError("n_drops must be non-negative")


def generate_drops(plan: DropPlan) -> list[tuple[int, ...]]:
    """Each drop is ``n_users`` distinct location indices, in draw order."""
    rng = SplitMix64(plan.seed)
    drops = []
    for _ in range(plan.n_drops):
        pool = list(range(plan.n_locations))
        for i in range(plan.n_users):
            j = i + rng.below(plan.n_locations - i)
            pool[i], pool[j] = pool[j], pool[i]
        drops.append(tuple(pool[: plan.n_users]))
    return drops


@dataclass(frozen=True)
class FailureScenario:
    name: str
    failed_aps: frozenset = frozenset()

    def mask(self, n_aps: int) -> np.ndarray:
        if any(not 0 <= a < n_aps for a in self.failed_aps):
            raise ValueError(f"failed AP index outside 0..{n_aps - 1}")
        m = np.ones(n_aps, dtype=bool)
        m[list(self.failed_aps)] = False
        return m


# "access point 1" / "access point 5" are the 1st and 5th APs of the default layout
FAILURES = {
    "none": FailureScenario("none"),
    "ap1": FailureScenario("ap1", frozenset({0})),
    "ap5": FailureScenario("ap5", frozenset({4})),
    "ap1_and_ap5": FailureScenario("ap1_and_ap5", frozenset({0, 4})),
}


def build_instance(channel, drop, failure: FailureScenario = FAILURES["none"], mode=MULTI_AP,
                   sigma: float = None, params: SinrParams = None,
                   failed_ap_light: str = "lit") -> ProblemInstance:
    idx = list(drop)
    n_loc = channel.R.shape[0]
    if any(not 0 <= i < n_loc for i in idx):
        raise IndexError(f"drop {drop} references a location outside 0..{n_loc - 1}")
    if sigma is None:
        rx = channel.config["receiver"]
        sigma = rx["noise_density"] ** 2 * rx["bandwidth"]
    return ProblemInstance(
        R=channel.R[idx], N=channel.N[idx], sigma=sigma, params=params or SinrParams(),
        ap_available=failure.mask(channel.R.shape[2]), mode=mode, failed_ap_light=failed_ap_light,
    )


COMBINERS = {
    "mean": np.mean,
    "max": np.max,
    "min": np.min,
}


def user_sinr_db(gamma_links, combiner: str = "mean") -> float:
    """Per-user SINR in dB over its assigned links; 0 dB for an unassigned user."""
    if len(gamma_links) == 0:
        return 0.0
    return to_db(COMBINERS[combiner](np.asarray(gamma_links, dtype=float)))


@dataclass
class DropResult:
    drop_id: int
    locations: tuple
    objective: float
    status: str
    user_sinr_db: list
    user_ap_count: list
    user_links: list  # per user: list of (branch, ap, wavelength, gamma)
    valid: bool = True
    violations: list = field(default_factory=list)

    @property
    def avg_sinr_db(self) -> float:
        return float(np.mean(self.user_sinr_db)) if self.user_sinr_db else 0.0


@dataclass
class ExperimentStats:
    n_users: int
    mode: str
    failure: str
    per_drop_avg_sinr_db: list
    overall_avg_sinr_db: float
    ap_count_histogram: dict
    ap_count_mode: int
    unassigned_user_fraction: float
    per_drop_objective: list
    drops: list = field(default_factory=list, repr=False)


def _solve_drop(channel, drop_id, drop, failure, mode, sigma, params, light, combiner):
    inst = build_instance(channel, drop, failure, mode, sigma, params, light)
    sol = solve_exact(inst)
    links = [[] for _ in drop]
    for u, f, a, lam in sol.links():
        links[u].append((f, a, lam, float(sol.gamma[u, f, a, lam])))
    sinrs = [user_sinr_db([g for *_, g in lk], combiner) for lk in links]
    report = validate(inst, sol)
    return DropResult(drop_id, tuple(drop), sol.objective, sol.status, sinrs,
                      list(sol.per_user_ap_count), links, report.passed, report.violations)


def aggregate(results: list[DropResult], n_users: int, mode: str, failure: str, n_aps: int = 8) -> ExperimentStats:
    counts = Counter(c for r in results for c in r.user_ap_count)
    hist = {k: counts.get(k, 0) for k in range(n_aps + 1)}
    # ties go to the smallest count
    ap_mode = max(hist, key=lambda k: (hist[k], -k)) if results and n_users else 0
    per_drop = [r.avg_sinr_db for r in results]
    n_pairs = len(results) * n_users
    unassigned = hist.get(0, 0) / n_pairs if n_pairs else 0.0
    return ExperimentStats(
        n_users=n_users, mode=mode, failure=failure,
        per_drop_avg_sinr_db=per_drop,
        overall_avg_sinr_db=float(np.mean(per_drop)) if per_drop else math.nan,
        ap_count_histogram=hist, ap_count_mode=ap_mode,
        unassigned_user_fraction=unassigned,
        per_drop_objective=[r.objective for r in results],
        drops=results,
    )


def run_experiment(channel, plan: DropPlan, failure=FAILURES["none"], mode=MULTI_AP, *,
                   sigma=None, params=None, failed_ap_light="lit", combiner="mean",
                   workers: int = 1) -> ExperimentStats:
    if isinstance(failure, str):
        failure = FAILURES[failure]
    drops = generate_drops(plan)
    results = Parallel(n_jobs=workers)(
        delayed(_solve_drop)(channel, i, d, failure, mode, sigma, params, failed_ap_light, combiner)
        for i, d in enumerate(drops)
    )
    return aggregate(list(results), plan.n_users, mode, failure.name, channel.R.shape[2])


@dataclass
class ModeComparison:
    single_ap: ExperimentStats
    multi_ap: ExperimentStats

    @property
    def per_drop_sinr_delta_db(self) -> list:
        return [m - s for s, m in zip(self.single_ap.per_drop_avg_sinr_db, self.multi_ap.per_drop_avg_sinr_db)]

    @property
    def overall_delta_db(self) -> float:
        return self.multi_ap.overall_avg_sinr_db - self.single_ap.overall_avg_sinr_db

    @property
    def per_drop_objective_delta(self) -> list:
        return [m - s for s, m in zip(self.single_ap.per_drop_objective, self.multi_ap.per_drop_objective)]


def compare_modes(channel, plan: DropPlan, failure=FAILURES["none"], **kw) -> ModeComparison:
    return ModeComparison(
        single_ap=run_experiment(channel, plan, failure, SINGLE_AP, **kw),
        multi_ap=run_experiment(channel, plan, failure, MULTI_AP, **kw),
    )
