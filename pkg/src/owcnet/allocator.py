"""Exact user / AP / wavelength / branch assignment.

The search maximises ``sum(gamma + K * S)`` subject to

* one wavelength (and branch) per user per AP,
* one user (and branch) per AP wavelength,
* every assigned link reaching the SINR threshold ``Z``,
* optionally one link per user overall (``single_ap`` mode).

Because a link's SINR depends on which *other users* hold co-wavelength
slots on other APs, candidate sets are evaluated jointly. :func:`solve_exact`
branches on slot occupancy (which user, if any, holds each AP wavelength)
and bounds subtrees with a per-AP assignment relaxation over
interference-optimistic SINRs. :func:`solve_brute_force` enumerates every
assignment for small instances and is the reference the search is checked
against.

Ties in the objective are broken towards the lexicographically smallest S
flattened in (user, branch, AP, wavelength) order.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .linkmetrics import SinrParams, denominators, objective_value, sinr, sinr_tensor

MULTI_AP = "multi_ap"
SINGLE_AP = "single_ap"
BRUTE_FORCE_LIMIT = 20

# slack for floating-point noise in bounds; never applied to the final threshold check
_BOUND_RTOL = 1e-9


class GuardError(ValueError):
    """Instance too large for exhaustive enumeration."""


@dataclass
class ProblemInstance:
    R: np.ndarray
    N: np.ndarray
    sigma: float
    params: SinrParams = field(default_factory=SinrParams)
    ap_available: np.ndarray | None = None
    mode: str = MULTI_AP
    # "lit": a failed AP cannot serve users but its light still reaches receivers.
    # "dark": a failed AP emits nothing.
    failed_ap_light: str = "lit"

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float)
        self.N = np.asarray(self.N, dtype=float)
        if self.R.ndim != 4 or self.R.shape != self.N.shape:
            raise ValueError(f"R and N must share a 4-d shape, got {self.R.shape} and {self.N.shape}")
        if self.ap_available is None:
            self.ap_available = np.ones(self.R.shape[2], dtype=bool)
        self.ap_available = np.asarray(self.ap_available, dtype=bool)
        if self.ap_available.shape != (self.R.shape[2],):
            raise ValueError("ap_available must have one entry per AP")
        if self.mode not in (MULTI_AP, SINGLE_AP):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.failed_ap_light not in ("lit", "dark"):
            raise ValueError(f"unknown failed_ap_light {self.failed_ap_light!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def shape(self):
        return self.R.shape

    def effective_tensors(self):
        """R and N as seen by receivers, after removing dark failed APs."""
        if self.failed_ap_light == "lit" or self.ap_available.all():
            return self.R, self.N
        R, N = self.R.copy(), self.N.copy()
        R[:, :, ~self.ap_available, :] = 0.0
        N[:, :, ~self.ap_available, :] = 0.0
        return R, N

    def n_candidate_tuples(self) -> int:
        U, F, _, L = self.shape
        return U * F * int(self.ap_available.sum()) * L


@dataclass
class AssignmentSolution:
    S: np.ndarray
    gamma: np.ndarray
    objective: float
    status: str
    per_user_ap_count: list[int]
    nodes: int = 0

    def links(self):
        """Assigned (u, f, a, lam) tuples in index order."""
        return [tuple(int(i) for i in idx) for idx in np.argwhere(self.S)]


def lex_less(S1, S2) -> bool:
    """True if S1 < S2 lexicographically over the flattened binary vectors."""
    a = np.asarray(S1).ravel() != 0
    b = np.asarray(S2).ravel() != 0
    diff = np.flatnonzero(a != b)
    return bool(diff.size) and bool(b[diff[0]])


def _finish(S, gamma, objective, nodes=0) -> AssignmentSolution:
    S = np.asarray(S, dtype=np.int8)
    counts = [int(np.any(S[u], axis=(0, 2)).sum()) for u in range(S.shape[0])]
    status = "optimal" if S.any() else "infeasible_empty"
    return AssignmentSolution(S, gamma, float(objective), status, counts, nodes)


def _empty(inst) -> AssignmentSolution:
    return _finish(np.zeros(inst.shape, dtype=np.int8), np.zeros(inst.shape), 0.0)


class _Search:
    """Depth-first branch-and-bound over slot occupancy."""

    def __init__(self, inst: ProblemInstance):
        self.inst = inst
        self.R, self.N = inst.effective_tensors()
        self.U, self.F, self.A, self.L = self.R.shape
        self.sigma = inst.sigma
        self.K = inst.params.K
        self.Z = inst.params.Z
        self.Z_lo = self.Z * (1 - _BOUND_RTOL)
        self.single = inst.mode == SINGLE_AP
        self.lo = np.minimum(self.R, self.N)
        self.off_diag = 1.0 - np.eye(self.A)
        self.users = np.arange(self.U)
        self.nodes = 0
        self.best_obj = 0.0
        self.best_S = np.zeros(self.R.shape, dtype=np.int8)
        self.best_gamma = np.zeros(self.R.shape)

    # occupancy codes: -2 undecided, -1 empty, u >= 0 held by user u
    def weights(self, occ):
        """Best optimistic (gamma + K) per (user, AP, wavelength); 0 if no branch can reach Z."""
        undecided = occ == -2
        held = occ >= 0
        other = held[None, :, :] & (occ[None, :, :] != self.users[:, None, None])
        contrib = np.where(undecided[None, None], self.lo,
                           np.where(other[:, None], self.R, self.N))
        den = np.einsum("ufbl,ab->ufal", contrib, self.off_diag) + self.sigma
        g = self.R / den
        val = np.where(g >= self.Z_lo, g + self.K, 0.0)
        return val.max(axis=1)

    def bound(self, occ):
        w = self.weights(occ)
        total = 0.0
        used_at = np.zeros((self.U, self.A), dtype=bool)
        for a, lam in zip(*np.nonzero(occ >= 0)):
            u = occ[a, lam]
            if w[u, a, lam] <= 0.0:
                return -np.inf
            total += w[u, a, lam]
            used_at[u, a] = True
        undecided = occ == -2
        if not undecided.any():
            return total
        if self.single:
            free_users = ~used_at.any(axis=1)
            a_idx, l_idx = np.nonzero(undecided)
            sub = w[free_users][:, a_idx, l_idx]
            if sub.size:
                r, c = linear_sum_assignment(sub, maximize=True)
                total += sub[r, c].sum()
            return total
        for a in np.flatnonzero(undecided.any(axis=1)):
            sub = w[~used_at[:, a]][:, a, undecided[a]]
            if sub.size:
                r, c = linear_sum_assignment(sub, maximize=True)
                total += sub[r, c].sum()
        return total

    def options(self, occ, a, lam):
        """Users that may take slot (a, lam) given decided slots, then the empty choice."""
        held = occ >= 0
        opts = []
        for u in range(self.U):
            if np.any(held[a] & (occ[a] == u)):
                continue
            if self.single and np.any(held & (occ == u)):
                continue
            opts.append(u)
        return opts + [-1]

    def leaf(self, occ):
        S = np.zeros(self.R.shape, dtype=np.int8)
        for a, lam in zip(*np.nonzero(occ >= 0)):
            S[occ[a, lam], 0, a, lam] = 1
        if not S.any():
            return
        g_all = self.R / denominators(self.R, self.N, S, self.sigma)
        S[:] = 0
        for a, lam in zip(*np.nonzero(occ >= 0)):
            u = occ[a, lam]
            col = g_all[u, :, a, lam]
            ok = np.flatnonzero(col >= self.Z)
            if ok.size == 0:
                return
            best = col[ok].max()
            f = ok[col[ok] == best].max()  # larger branch index keeps S lexicographically smaller
            S[u, f, a, lam] = 1
        gamma = sinr_tensor(self.R, self.N, S, self.sigma)
        if np.any(gamma[S != 0] < self.Z):
            return
        obj = objective_value(gamma, S, self.K)
        if obj > self.best_obj or (obj == self.best_obj and lex_less(S, self.best_S)):
            self.best_obj, self.best_S, self.best_gamma = obj, S, gamma

    def prunable(self, bound):
        return bound < self.best_obj - _BOUND_RTOL * max(1.0, abs(self.best_obj))

    def run(self):
        occ = np.full((self.A, self.L), -2, dtype=np.int64)
        occ[~self.inst.ap_available, :] = -1
        w = self.weights(occ)
        # slots that no user can ever use are fixed empty up front
        dead = (w.max(axis=0) <= 0.0) & (occ == -2)
        occ[dead] = -1
        slots = [tuple(s) for s in np.argwhere(occ == -2)]
        slots.sort(key=lambda s: (-w[:, s[0], s[1]].max(), s))
        self.order = slots
        self._dfs(occ, 0)
        return self.best_S, self.best_gamma, self.best_obj

    def _dfs(self, occ, depth):
        self.nodes += 1
        if depth == len(self.order):
            self.leaf(occ)
            return
        a, lam = self.order[depth]
        children = []
        for u in self.options(occ, a, lam):
            child = occ.copy()
            child[a, lam] = u
            b = self.bound(child)
            if b > -np.inf:
                children.append((b, u, child))
        children.sort(key=lambda c: -c[0])
        for b, _, child in children:
            if self.prunable(b):
                break
            self._dfs(child, depth + 1)


def solve_exact(inst: ProblemInstance) -> AssignmentSolution:
    if inst.shape[0] == 0 or not inst.ap_available.any():
        return _empty(inst)
    search = _Search(inst)
    S, gamma, obj = search.run()
    return _finish(S, gamma, obj, search.nodes)


def _feasible_slot_choices(inst):
    U, F, A, L = inst.shape
    slots = [(a, lam) for a in range(A) if inst.ap_available[a] for lam in range(L)]
    choices = [None] + [(u, f) for u in range(U) for f in range(F)]
    for combo in itertools.product(choices, repeat=len(slots)):
        seen_at = set()
        seen_user = set()
        ok = True
        for (a, _), ch in zip(slots, combo):
            if ch is None:
                continue
            u = ch[0]
            if (u, a) in seen_at or (inst.mode == SINGLE_AP and u in seen_user):
                ok = False
                break
            seen_at.add((u, a))
            seen_user.add(u)
        if ok:
            yield [(ch[0], ch[1], a, lam) for (a, lam), ch in zip(slots, combo) if ch is not None]


def solve_brute_force(inst: ProblemInstance) -> AssignmentSolution:
    """Exhaustive reference solver; refuses instances above the size guard."""
    n = inst.n_candidate_tuples()
    if n > BRUTE_FORCE_LIMIT:
        raise GuardError(f"{n} candidate tuples exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")
    if inst.shape[0] == 0 or not inst.ap_available.any():
        return _empty(inst)
    R, N = inst.effective_tensors()
    Z, K = inst.params.Z, inst.params.K
    best_S = np.zeros(inst.shape, dtype=np.int8)
    best_gamma = np.zeros(inst.shape)
    best_obj = 0.0
    count = 0
    for links in _feasible_slot_choices(inst):
        count += 1
        if not links:
            continue
        S = np.zeros(inst.shape, dtype=np.int8)
        for t in links:
            S[t] = 1
        gamma = np.zeros(inst.shape)
        feasible = True
        for t in links:
            gamma[t] = sinr(R, N, S, inst.sigma, *t)
            if gamma[t] < Z:
                feasible = False
                break
        if not feasible:
            continue
        obj = objective_value(gamma, S, K)
        if obj > best_obj or (obj == best_obj and lex_less(S, best_S)):
            best_obj, best_S, best_gamma = obj, S, gamma
    return _finish(best_S, best_gamma, best_obj, count)


@dataclass
class ValidationReport:
    checks: dict  # constraint id -> bool
    gamma_max_rel_delta: float
    objective_rel_delta: float
    violations: list

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def validate(inst: ProblemInstance, sol: AssignmentSolution, rtol: float = 1e-9) -> ValidationReport:
    S = np.asarray(sol.S)
    if S.shape != inst.shape:
        raise ValueError(f"solution shape {S.shape} does not match instance {inst.shape}")
    R, N = inst.effective_tensors()
    violations = []
    binary = bool(np.isin(S, (0, 1)).all())
    if not binary:
        violations.append(("binary", "S has entries outside {0, 1}"))

    per_user_ap = S.sum(axis=(1, 3))
    per_ap_ok = bool((per_user_ap <= 1).all())
    for u, a in np.argwhere(per_user_ap > 1):
        violations.append(("one_wavelength_per_user_ap", f"user {u} holds {per_user_ap[u, a]} wavelengths on AP {a}"))

    per_slot = S.sum(axis=(0, 1))
    per_slot_ok = bool((per_slot <= 1).all())
    for a, lam in np.argwhere(per_slot > 1):
        violations.append(("one_link_per_slot", f"AP {a} wavelength {lam} shared by {per_slot[a, lam]} links"))

    masked = bool(not S[:, :, ~inst.ap_available, :].any())
    if not masked:
        violations.append(("availability", "link on an unavailable AP"))

    single = True
    if inst.mode == SINGLE_AP:
        per_user = S.sum(axis=(1, 2, 3))
        single = bool((per_user <= 1).all())
        for u in np.flatnonzero(per_user > 1):
            violations.append(("single_ap", f"user {u} holds {per_user[u]} links"))

    if per_slot_ok:
        gamma = sinr_tensor(R, N, S, inst.sigma)
    else:
        gamma = np.zeros(inst.shape)
    threshold_ok = True
    for t in np.argwhere(S):
        t = tuple(t)
        if not gamma[t] >= inst.params.Z:
            threshold_ok = False
            violations.append(("sinr_threshold", f"link {t} SINR {gamma[t]:.4f} below Z={inst.params.Z:.4f}"))

    stored = np.asarray(sol.gamma)
    denom = np.maximum(np.maximum(np.abs(gamma), np.abs(stored)), np.finfo(float).tiny)
    g_delta = float(np.max(np.abs(stored - gamma) / denom)) if gamma.size else 0.0
    obj = objective_value(gamma, S, inst.params.K)
    o_delta = abs(sol.objective - obj) / max(abs(obj), 1.0)
    counts = [int(np.any(S[u], axis=(0, 2)).sum()) for u in range(S.shape[0])]

    checks = {
        "binary": binary,
        "one_wavelength_per_user_ap": per_ap_ok,
        "one_link_per_slot": per_slot_ok,
        "sinr_threshold": threshold_ok,
        "availability": masked,
        "single_ap": single,
        "gamma_consistent": g_delta < rtol,
        "objective_consistent": o_delta < rtol,
        "ap_count_consistent": counts == list(sol.per_user_ap_count),
    }
    return ValidationReport(checks, g_delta, o_delta, violations)


def random_instance(rng: np.random.Generator, max_users=2, n_branches=2, n_aps=2, n_wavelengths=2,
                    sigma=3.4965e-14, params: SinrParams = None) -> ProblemInstance:
    """Small random instance whose interference-free SINRs straddle the threshold."""
    params = params or SinrParams()
    U = int(rng.integers(1, max_users + 1))
    shape = (U, n_branches, n_aps, n_wavelengths)
    # R / sigma spans roughly Z/10 .. 10 Z
    R = sigma * params.Z * 10.0 ** rng.uniform(-1.0, 1.0, size=shape)
    N = R * rng.uniform(0.0, 2.0, size=shape) * (rng.random(shape) < 0.8)
    mode = MULTI_AP if rng.random() < 0.5 else SINGLE_AP
    avail = rng.random(n_aps) > 0.15
    return ProblemInstance(R, N, sigma, params, avail, mode)


def instance_dump(inst: ProblemInstance) -> dict:
    return {
        "R": inst.R.tolist(), "N": inst.N.tolist(), "sigma": inst.sigma,
        "threshold_db": inst.params.threshold_db, "K": inst.params.K,
        "ap_available": inst.ap_available.tolist(), "mode": inst.mode,
        "failed_ap_light": inst.failed_ap_light,
    }


def oracle_equivalence(n_instances=500, seed=0, rtol=1e-9, solver=None):
    """Compare the search against enumeration on random instances.

    Returns (n_checked, mismatches) where each mismatch is a dict holding the
    instance dump and both objectives.
    """
    solver = solver or solve_exact
    rng = np.random.default_rng(seed)
    mismatches = []
    for i in range(n_instances):
        inst = random_instance(rng)
        got, ref = solver(inst), solve_brute_force(inst)
        same_obj = abs(got.objective - ref.objective) <= rtol * max(abs(ref.objective), 1.0)
        if not (same_obj and np.array_equal(got.S, ref.S)):
            mismatches.append({"index": i, "exact": got.objective, "brute_force": ref.objective,
                               "instance": instance_dump(inst)})
    return n_instances, mismatches
