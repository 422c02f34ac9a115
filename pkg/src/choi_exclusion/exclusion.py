"""Conclusive state exclusion.

Checks whether a given POVM performs conclusive weak or strong k-state
exclusion on an ensemble, evaluates the projector-sum feasibility test
``sum_x Pi_x <= (N - k) 1`` and its max-relative-entropy relaxation, and
builds the explicit ensembles and POVMs where the test is saturated.

Ensemble members are addressed by position ``0 .. N-1``.  A k-subset is a
sorted tuple of positions, and families of subsets are always enumerated in
lexicographic order.  Priors are carried for sampling but never enter the
conclusive-exclusion logic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Hashable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .matop import (
    DEFAULT_TOL,
    DimensionError,
    Tolerance,
    as_hermitian,
    eig_hermitian,
    min_eigenvalue,
    support_projector,
)
from .quantum import check_density

__all__ = [
    "ExclusionError",
    "CapExceededError",
    "SaturationError",
    "Povm",
    "PovmVerdict",
    "ExclusionEnsemble",
    "SubsetFamily",
    "ExclusionTable",
    "ExclusionVerdict",
    "Lemma1Report",
    "CorollaryBound",
    "verify_povm",
    "exclusion_table",
    "check_k_exclusion",
    "lemma1_feasible",
    "lemma1_max_k",
    "d_max",
    "corollary1_bounds",
    "reformulate_k_to_1",
    "relabel_for_reformulation",
    "saturation_povm",
    "subset_projector_ensemble",
    "basis_ensemble",
    "basis_povm",
]

COMPLETENESS_ATOL = 1e-8
PRIOR_ATOL = 1e-9
SATURATION_ATOL = 1e-8
DEFAULT_REFORMULATION_CAP = 10_000


class ExclusionError(ValueError):
    pass


class CapExceededError(ExclusionError):
    def __init__(self, n: int, k: int, size: int, cap: int):
        super().__init__(f"C({n},{k}) = {size} reformulated states exceeds the cap of {cap}")
        self.size = size
        self.cap = cap


class SaturationError(ExclusionError):
    def __init__(self, residual: float):
        super().__init__(f"projector sum is not (N-k) times identity (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Povm:
    """Measurement effects with outcome labels (ints or tuples of ints).

    Positivity and completeness are not enforced here; see :func:`verify_povm`.
    """

    effects: tuple[np.ndarray, ...]
    labels: tuple[Hashable, ...]

    def __post_init__(self):
        effects = tuple(as_hermitian(T) for T in self.effects)
        if not effects:
            raise ValueError("a POVM needs at least one effect")
        if any(T.shape != effects[0].shape for T in effects):
            raise DimensionError("effects have inconsistent shapes")
        labels = tuple(tuple(lab) if isinstance(lab, (list, tuple)) else lab for lab in self.labels)
        if len(labels) != len(effects):
            raise ValueError(f"{len(labels)} labels for {len(effects)} effects")
        if len(set(labels)) != len(labels):
            raise ValueError("POVM labels must be unique")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_effects(cls, effects: Sequence, labels: Sequence | None = None) -> "Povm":
        if labels is None:
            labels = range(len(effects))
        return cls(tuple(effects), tuple(labels))

    @property
    def dim(self) -> int:
        return self.effects[0].shape[0]

    def __len__(self) -> int:
        return len(self.effects)

    def relabel(self, labels: Sequence) -> "Povm":
        return Povm(self.effects, tuple(labels))


@dataclass(frozen=True)
class PovmVerdict:
    ok: bool
    min_eigenvalue: float
    completeness_residual: float

    def to_dict(self) -> dict:
        return {
            "valid": self.ok,
            "min_eigenvalue": self.min_eigenvalue,
            "completeness_residual": self.completeness_residual,
        }


@dataclass(frozen=True, eq=False)
class ExclusionEnsemble:
    """Labelled states ``rho_x`` with priors ``p_x``."""

    states: tuple[np.ndarray, ...]
    priors: tuple[float, ...]
    labels: tuple[Hashable, ...]
    tol: Tolerance = DEFAULT_TOL

    def __post_init__(self):
        states = tuple(check_density(rho, self.tol) for rho in self.states)
        if len(states) < 2:
            raise ValueError("an exclusion ensemble needs at least two states")
        if any(rho.shape != states[0].shape for rho in states):
            raise DimensionError("states have inconsistent dimensions")
        priors = tuple(float(p) for p in self.priors)
        if len(priors) != len(states):
            raise ValueError(f"{len(priors)} priors for {len(states)} states")
        if min(priors) < 0 or abs(sum(priors) - 1) > PRIOR_ATOL:
            raise ValueError("priors must be nonnegative and sum to 1")
        if len(self.labels) != len(states):
            raise ValueError(f"{len(self.labels)} labels for {len(states)} states")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "labels", tuple(self.labels))

    @classmethod
    def from_states(
        cls,
        states: Sequence,
        priors: Sequence[float] | None = None,
        labels: Sequence | None = None,
        tol: Tolerance = DEFAULT_TOL,
    ) -> "ExclusionEnsemble":
        n = len(states)
        if priors is None:
            priors = [1 / n] * n
        if labels is None:
            labels = range(n)
        return cls(tuple(states), tuple(priors), tuple(labels), tol)

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states[0].shape[0]

    @cached_property
    def projectors(self) -> tuple[np.ndarray, ...]:
        return tuple(support_projector(rho, self.tol) for rho in self.states)

    @cached_property
    def projector_sum(self) -> np.ndarray:
        return sum(self.projectors)


@dataclass(frozen=True)
class SubsetFamily:
    """All k-subsets of ``range(n)`` in lexicographic order.

    ``member_index[x]`` lists the positions of the subsets containing ``x``;
    each has length ``C(n-1, k-1) = L k / n``.
    """

    n: int
    k: int
    subsets: tuple[tuple[int, ...], ...] = field(init=False)
    member_index: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ValueError(f"need 1 <= k <= n, got n={self.n}, k={self.k}")
        subsets = tuple(combinations(range(self.n), self.k))
        members = tuple(
            tuple(i for i, Y in enumerate(subsets) if x in Y) for x in range(self.n)
        )
        object.__setattr__(self, "subsets", subsets)
        object.__setattr__(self, "member_index", members)

    def __len__(self) -> int:
        return len(self.subsets)

    def position(self, subset) -> int:
        return self.subsets.index(tuple(sorted(subset)))


@dataclass(frozen=True)
class ExclusionTable:
    """Outcome-by-state probabilities and what each outcome excludes.

    ``excluded[a]`` holds the state positions ``x`` with
    ``tr[T_a rho_x] <= trace_zero``; ``null_outcomes`` are outcomes whose
    total weight ``sum_x tr[T_a rho_x]`` is itself below threshold.
    """

    probabilities: np.ndarray
    excluded: tuple[frozenset[int], ...]
    null_outcomes: tuple[int, ...]

    def max_excluded_probability(self) -> float:
        vals = [self.probabilities[a, x] for a, ex in enumerate(self.excluded) for x in ex]
        return float(max(vals)) if vals else 0.0


@dataclass(frozen=True)
class ExclusionVerdict:
    feasible: bool
    mode: str
    k: int
    witness: dict | None
    residual: float
    reason: str = ""

    def to_dict(self) -> dict:
        witness = None
        if self.witness is not None:
            witness = [
                {"outcome": list(a) if isinstance(a, tuple) else a, "excludes": list(ys)}
                for a, ys in self.witness.items()
            ]
        return {
            "feasible": self.feasible,
            "mode": self.mode,
            "k": self.k,
            "residual": self.residual,
            "reason": self.reason,
            "witness": witness,
        }


@dataclass(frozen=True)
class Lemma1Report:
    feasible: bool
    k: int
    lambda_max: float
    bound: int


@dataclass(frozen=True, eq=False)
class CorollaryBound:
    alpha: float
    omega: np.ndarray
    dmax: float
    k_first: int
    k_second: int

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "dmax": self.dmax,
            "k_first": self.k_first,
            "k_second": self.k_second,
        }


def verify_povm(povm: Povm, tol: Tolerance = DEFAULT_TOL) -> PovmVerdict:
    lo = min(min_eigenvalue(T) for T in povm.effects)
    residual = float(np.linalg.norm(sum(povm.effects) - np.eye(povm.dim)))
    ok = lo >= -tol.psd_slack and residual <= COMPLETENESS_ATOL
    return PovmVerdict(ok, lo, residual)


def exclusion_table(povm: Povm, ens: ExclusionEnsemble, tol: Tolerance = DEFAULT_TOL) -> ExclusionTable:
    if povm.dim != ens.dim:
        raise DimensionError(f"POVM acts on dim {povm.dim}, ensemble on dim {ens.dim}")
    E = np.stack(povm.effects)
    R = np.stack(ens.states)
    # tr[T_a rho_x] = sum_ij T_a[i, j] rho_x[j, i]
    probs = np.einsum("aij,xji->ax", E, R).real
    excluded = tuple(
        frozenset(int(x) for x in np.flatnonzero(row <= tol.trace_zero)) for row in probs
    )
    null = tuple(int(a) for a in np.flatnonzero(probs.sum(axis=1) <= tol.trace_zero))
    return ExclusionTable(probs, excluded, null)


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= N-1 = {n - 1}, got {k}")


def check_k_exclusion(
    povm: Povm,
    ens: ExclusionEnsemble,
    k: int,
    mode: str = "weak",
    tol: Tolerance = DEFAULT_TOL,
) -> ExclusionVerdict:
    """Decide whether ``povm`` performs conclusive k-state exclusion on ``ens``.

    Weak mode: every outcome of nonzero total probability excludes at least
    ``k`` states; zero-probability outcomes are skipped.

    Strong mode: no outcome may have zero total probability, and the outcomes
    must be in one-to-one correspondence with all ``C(N, k)`` k-subsets, each
    outcome excluding its subset.  If the POVM is labelled by subsets the
    correspondence is read from the labels; otherwise a perfect bipartite
    matching between outcomes and subsets is searched for.

    The witness maps each outcome label to the ensemble labels it excludes.
    """
    _check_k(k, ens.n)
    if mode not in ("weak", "strong"):
        raise ValueError(f"mode must be 'weak' or 'strong', got {mode!r}")
    table = exclusion_table(povm, ens, tol)
    P = table.probabilities

    if mode == "weak":
        live = [a for a in range(len(povm)) if a not in table.null_outcomes]
        short = [a for a in live if len(table.excluded[a]) < k]
        pairs = [(a, x) for a in live for x in table.excluded[a]]
        residual = float(max((P[a, x] for a, x in pairs), default=0.0))
        if short:
            a = short[0]
            return ExclusionVerdict(
                False, mode, k, None, residual,
                f"outcome {povm.labels[a]!r} excludes only {len(table.excluded[a])} state(s)",
            )
        witness = {
            povm.labels[a]: tuple(ens.labels[x] for x in sorted(table.excluded[a])) for a in live
        }
        return ExclusionVerdict(True, mode, k, witness, residual)

    family = SubsetFamily(ens.n, k)
    if table.null_outcomes:
        a = table.null_outcomes[0]
        return ExclusionVerdict(
            False, mode, k, None, 0.0, f"outcome {povm.labels[a]!r} never occurs"
        )

    subset_labelled = [isinstance(lab, tuple) for lab in povm.labels]
    if any(subset_labelled):
        if not all(subset_labelled) or set(povm.labels) != set(family.subsets):
            raise ExclusionError("strong mode: POVM labels do not match the family of k-subsets")
        assignment = {a: family.subsets.index(povm.labels[a]) for a in range(len(povm))}
        residual = float(max(P[a, y] for a, l in assignment.items() for y in family.subsets[l]))
        bad = [a for a, l in assignment.items() if not set(family.subsets[l]) <= table.excluded[a]]
        if bad:
            return ExclusionVerdict(
                False, mode, k, None, residual,
                f"effect {povm.labels[bad[0]]!r} does not exclude its subset",
            )
    else:
        if len(povm) != len(family):
            distinct = {Y for ex in table.excluded for Y in combinations(sorted(ex), k)}
            return ExclusionVerdict(
                False, mode, k, None, 0.0,
                f"{len(povm)} outcomes cannot cover all {len(family)} subsets "
                f"({len(distinct)} excludable)",
            )
        adj = np.array(
            [[set(Y) <= table.excluded[a] for Y in family.subsets] for a in range(len(povm))],
            dtype=np.int8,
        )
        match = maximum_bipartite_matching(csr_matrix(adj), perm_type="column")
        if np.any(match < 0):
            covered = int(adj.any(axis=0).sum())
            return ExclusionVerdict(
                False, mode, k, None, 0.0,
                f"no outcome-to-subset assignment exists ({covered} of {len(family)} subsets excludable)",
            )
        assignment = {a: int(match[a]) for a in range(len(povm))}
        residual = float(max(P[a, y] for a, l in assignment.items() for y in family.subsets[l]))

    witness = {
        povm.labels[a]: tuple(ens.labels[y] for y in family.subsets[l])
        for a, l in sorted(assignment.items())
    }
    return ExclusionVerdict(True, mode, k, witness, residual)


def lemma1_feasible(ens: ExclusionEnsemble, k: int, tol: Tolerance = DEFAULT_TOL) -> Lemma1Report:
    """Necessary condition ``sum_x Pi_x <= (N - k) 1`` via the largest eigenvalue."""
    _check_k(k, ens.n)
    lam = eig_hermitian(ens.projector_sum, tol)[0].max
    bound = ens.n - k
    return Lemma1Report(lam <= bound + tol.psd_slack, k, lam, bound)


def lemma1_max_k(ens: ExclusionEnsemble, tol: Tolerance = DEFAULT_TOL) -> int:
    """Largest k allowed by the projector-sum test, floored at 0."""
    lam = eig_hermitian(ens.projector_sum, tol)[0].max
    return max(0, math.floor(ens.n - lam + tol.psd_slack))


def d_max(psi, sigma, tol: Tolerance = DEFAULT_TOL) -> float:
    """``log2 min{lam >= 1 : psi <= lam sigma}``; ``inf`` if supp(psi) is not in supp(sigma).

    Note the clamp at ``lam >= 1``: this is zero whenever ``psi <= sigma``.
    """
    psi = as_hermitian(psi)
    spec, V = eig_hermitian(sigma, tol)
    thr = tol.eig_zero * max(1.0, spec.max)
    keep = spec.eigenvalues > thr
    K = V[:, ~keep]
    if K.shape[1] and np.linalg.eigvalsh(K.conj().T @ psi @ K)[-1] > tol.eig_zero:
        return math.inf
    Vs = V[:, keep]
    inv_sqrt = Vs @ np.diag(spec.eigenvalues[keep] ** -0.5) @ Vs.conj().T
    lam = float(np.linalg.eigvalsh(as_hermitian(inv_sqrt @ psi @ inv_sqrt, atol=1e-9))[-1])
    return math.log2(max(1.0, lam))


def corollary1_bounds(ens: ExclusionEnsemble, tol: Tolerance = DEFAULT_TOL) -> CorollaryBound:
    """Trace and max-relative-entropy relaxations of the projector-sum test.

    ``k_first = floor(N - 2**D_max(omega || 1/d) * alpha / d)`` and
    ``k_second = floor(N (d - 1) / d)`` with ``alpha = tr sum Pi_x`` and
    ``omega = sum Pi_x / alpha``.
    """
    n, d = ens.n, ens.dim
    S = ens.projector_sum
    alpha = float(np.trace(S).real)
    omega = S / alpha
    dm = d_max(omega, np.eye(d) / d, tol)
    k_first = max(0, math.floor(n - 2.0**dm * alpha / d + tol.psd_slack))
    k_second = max(0, n * (d - 1) // d)
    if lemma1_max_k(ens, tol) > k_first:
        raise ArithmeticError("relaxed bound fell below the projector-sum bound")
    return CorollaryBound(alpha, omega, dm, k_first, k_second)


def reformulate_k_to_1(
    ens: ExclusionEnsemble, k: int, cap: int = DEFAULT_REFORMULATION_CAP
) -> ExclusionEnsemble:
    """Equivalent 1-exclusion ensemble of states ``R_Y / k = sum_{y in Y} rho_y / k``.

    Labels are the k-subsets ``Y`` (as tuples of positions), lexicographic.
    """
    _check_k(k, ens.n)
    size = math.comb(ens.n, k)
    if size > cap:
        raise CapExceededError(ens.n, k, size, cap)
    family = SubsetFamily(ens.n, k)
    states = [sum(ens.states[y] for y in Y) / k for Y in family.subsets]
    return ExclusionEnsemble.from_states(states, labels=family.subsets, tol=ens.tol)


def relabel_for_reformulation(povm: Povm, n: int, k: int) -> Povm:
    """Map subset labels ``Y`` to ``(position of Y,)`` for the reformulated task."""
    family = SubsetFamily(n, k)
    if not all(isinstance(lab, tuple) for lab in povm.labels):
        return povm
    return povm.relabel([(family.position(lab),) for lab in povm.labels])


def saturation_povm(ens: ExclusionEnsemble, k: int, tol: Tolerance = DEFAULT_TOL) -> Povm:
    """Effects ``(1 - Pi_x) / k``, valid when ``sum_x Pi_x = (N - k) 1``."""
    _check_k(k, ens.n)
    residual = float(np.linalg.norm(ens.projector_sum - (ens.n - k) * np.eye(ens.dim)))
    if residual > SATURATION_ATOL:
        raise SaturationError(residual)
    eye = np.eye(ens.dim)
    return Povm.from_effects([(eye - P) / k for P in ens.projectors], ens.labels)


def subset_projector_ensemble(d: int, r: int) -> ExclusionEnsemble:
    """States ``Pi_x / r`` for every r-subset of the computational basis."""
    if not 1 <= r <= d - 1:
        raise ValueError(f"need 1 <= r <= d-1, got d={d}, r={r}")
    states = []
    for subset in combinations(range(d), r):
        rho = np.zeros((d, d), dtype=complex)
        rho[list(subset), list(subset)] = 1 / r
        states.append(rho)
    return ExclusionEnsemble.from_states(states)


def basis_ensemble(d: int) -> ExclusionEnsemble:
    return ExclusionEnsemble.from_states([np.diag(np.eye(d)[i]).astype(complex) for i in range(d)])


def basis_povm(d: int) -> Povm:
    return Povm.from_effects([np.diag(np.eye(d)[i]) for i in range(d)])
