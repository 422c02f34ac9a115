"""Entanglement-assisted exclusion game.

Alice and Bob share ``|Phi+>``.  Alice encodes label ``x`` by acting on her
half with ``U_x`` (or a unital channel ``E_x``) and sends it through a noisy
channel ``N``; Bob holds

    rho^{x|N} = (N (x) id)(U_x (x) id)(|Phi+><Phi+|) = (id (x) U_x^T)(J_N)

and measures a POVM whose outcome is decoded into a set of labels he is sure
Alice did not send.  With Choi rank ``r_c`` no strategy excludes more than
``floor(N (d^2 - r_c) / d^2)`` labels.

Trials are seeded per index: trial ``t`` draws its two uniforms from
``SeedSequence(seed, spawn_key=(t,))``, so any split of the trial range
across threads reproduces the serial transcript.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .exclusion import (
    ExclusionEnsemble,
    Povm,
    exclusion_table,
    lemma1_max_k,
    verify_povm,
)
from .majorization import NotUnitalError, spectrum, supp_count, unital_monotonicity_check
from .matop import DEFAULT_TOL, DimensionError, Tolerance
from .quantum import (
    ChoiState,
    KrausChannel,
    bell_basis,
    choi_to_kraus,
    kraus_to_choi,
    make_dephasing,
    max_entangled,
    weyl,
)

__all__ = [
    "GameError",
    "DecoderGapError",
    "GameConfig",
    "GameReport",
    "UnitalExtensionVerdict",
    "build_game_states",
    "theorem1_bound",
    "weyl_encodings",
    "bell_povm",
    "decoder_from_table",
    "decoder_table",
    "discrimination_decoder",
    "run_game",
    "unital_extension_check",
    "THREADS_ENV",
]

THREADS_ENV = "CHOI_EXCL_THREADS"
UNITARY_ATOL = 1e-10
UNITAL_ATOL = 1e-8
BORN_ATOL = 1e-8
CSV_FIELDS = (
    "config_hash", "d", "p", "N", "r_c", "theorem1_k", "achieved_k", "failures", "trials", "seed",
)


class GameError(ValueError):
    pass


class DecoderGapError(GameError):
    pass


def _as_encoding(enc, d: int):
    if isinstance(enc, KrausChannel):
        if enc.d != d:
            raise DimensionError(f"encoding acts on dim {enc.d}, game on dim {d}")
        residual = enc.unitality_residual
        if residual > UNITAL_ATOL:
            raise NotUnitalError(residual)
        return enc
    U = np.asarray(enc, dtype=complex)
    if U.shape != (d, d):
        raise DimensionError(f"encoding of shape {U.shape} in a d={d} game")
    if np.linalg.norm(U.conj().T @ U - np.eye(d)) > UNITARY_ATOL:
        raise GameError("encoding is not unitary to 1e-10")
    U.setflags(write=False)
    return U


@dataclass(frozen=True, eq=False)
class GameConfig:
    """Game setup.

    ``encodings`` holds unitaries or unital :class:`KrausChannel` objects;
    ``channel`` may be given in Kraus or Choi form.  ``channel_name`` and
    ``p`` are descriptive only and end up in report rows.
    """

    d: int
    channel: KrausChannel | ChoiState
    encodings: tuple
    priors: tuple[float, ...] | None = None
    trials: int = 10_000
    seed: int = 0
    channel_name: str = ""
    p: float | None = None
    choi: ChoiState = field(init=False, repr=False)
    kraus: KrausChannel = field(init=False, repr=False)

    def __post_init__(self):
        if self.channel.d != self.d:
            raise DimensionError(f"channel acts on dim {self.channel.d}, game on dim {self.d}")
        encodings = tuple(_as_encoding(e, self.d) for e in self.encodings)
        n = len(encodings)
        if n < 2:
            raise GameError("a game needs at least two encodings")
        priors = (1 / n,) * n if self.priors is None else tuple(float(p) for p in self.priors)
        if len(priors) != n or min(priors) < 0 or abs(sum(priors) - 1) > 1e-9:
            raise GameError("priors must be N nonnegative numbers summing to 1")
        if self.trials < 0:
            raise GameError("trials must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise GameError("seed must be a 64-bit unsigned integer")
        if isinstance(self.channel, ChoiState):
            choi, kraus = self.channel, choi_to_kraus(self.channel)
        else:
            choi, kraus = kraus_to_choi(self.channel), self.channel
        object.__setattr__(self, "encodings", encodings)
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "choi", choi)
        object.__setattr__(self, "kraus", kraus)

    @property
    def n(self) -> int:
        return len(self.encodings)

    @property
    def unitary_encodings(self) -> bool:
        return not any(isinstance(e, KrausChannel) for e in self.encodings)

    def fingerprint(self) -> str:
        """sha256 over the numerical content of the configuration."""
        def mat(M):
            return np.round(np.asarray(M, dtype=complex), 12).tolist()

        def enc(e):
            if isinstance(e, KrausChannel):
                return [[[z.real, z.imag] for z in np.ravel(mat(K))] for K in e.kraus_ops]
            return [[z.real, z.imag] for z in np.ravel(mat(e))]

        doc = {
            "d": self.d,
            "choi": [[z.real, z.imag] for z in np.ravel(mat(self.choi.matrix))],
            "encodings": [enc(e) for e in self.encodings],
            "priors": [round(p, 15) for p in self.priors],
            "trials": self.trials,
            "seed": self.seed,
        }
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class GameReport:
    theorem1_k: int
    achieved_k: int
    failures: int
    trials_run: int
    per_outcome_excluded: dict
    choi_rank_used: int
    outcome_counts: tuple[int, ...] = ()
    d: int = 0
    n: int = 0
    p: float | None = None
    seed: int = 0
    config_hash: str = ""

    @property
    def conclusive(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "d": self.d,
            "p": self.p,
            "N": self.n,
            "seed": self.seed,
            "choi_rank": self.choi_rank_used,
            "theorem1_k": self.theorem1_k,
            "achieved_k": self.achieved_k,
            "failures": self.failures,
            "trials": self.trials_run,
            "outcome_counts": list(self.outcome_counts),
            "per_outcome_excluded": {
                str(a): sorted(ys) for a, ys in self.per_outcome_excluded.items()
            },
        }

    def csv_row(self) -> str:
        p = "" if self.p is None else repr(self.p)
        vals = (
            self.config_hash, self.d, p, self.n, self.choi_rank_used, self.theorem1_k,
            self.achieved_k, self.failures, self.trials_run, self.seed,
        )
        return ",".join(str(v) for v in vals)


@dataclass(frozen=True)
class UnitalExtensionVerdict:
    ranks: tuple[int, ...]
    choi_rank: int
    majorized: tuple[bool, ...]
    lemma1_k: int
    theorem1_k: int

    @property
    def ranks_ok(self) -> bool:
        return all(r >= self.choi_rank for r in self.ranks)

    @property
    def holds(self) -> bool:
        return self.ranks_ok and all(self.majorized) and self.lemma1_k <= self.theorem1_k


def _b_side(enc, d: int) -> KrausChannel:
    """The encoding moved to Bob's side by transposition, as a d^2-dim channel."""
    eye = np.eye(d)
    ops = enc.kraus_ops if isinstance(enc, KrausChannel) else (enc,)
    return KrausChannel(tuple(np.kron(eye, K.T) for K in ops))


def build_game_states(cfg: GameConfig, route: str = "choi") -> ExclusionEnsemble:
    """Bob's states ``rho^{x|N}`` for every encoding.

    ``route="choi"`` applies the transposed encodings to ``J_N`` on Bob's
    side; ``route="kraus"`` encodes ``|Phi+>`` on Alice's side and then
    applies the channel's Kraus operators there.
    """
    d = cfg.d
    if route == "choi":
        J = cfg.choi.matrix
        states = [_b_side(e, d)(J) for e in cfg.encodings]
    elif route == "kraus":
        phi = max_entangled(d)
        Phi = np.outer(phi, phi.conj())
        eye = np.eye(d)
        channel_a = KrausChannel(tuple(np.kron(K, eye) for K in cfg.kraus.kraus_ops))
        states = []
        for e in cfg.encodings:
            ops = e.kraus_ops if isinstance(e, KrausChannel) else (e,)
            encoded = KrausChannel(tuple(np.kron(K, eye) for K in ops))(Phi)
            states.append(channel_a(encoded))
    else:
        raise ValueError(f"route must be 'choi' or 'kraus', got {route!r}")
    return ExclusionEnsemble.from_states(states, priors=cfg.priors)


def theorem1_bound(n: int, d: int, r_c: int) -> int:
    """``floor(N (d^2 - r_c) / d^2)``."""
    if not 1 <= r_c <= d * d:
        raise ValueError(f"Choi rank must lie in [1, {d * d}], got {r_c}")
    return n * (d * d - r_c) // (d * d)


def weyl_encodings(d: int) -> list[np.ndarray]:
    """``W_{a,b}`` in lexicographic ``(a, b)`` order; label ``a*d + b``."""
    if d < 2:
        raise ValueError(f"dimension must be >= 2, got {d}")
    return [weyl(a, b, d) for a in range(d) for b in range(d)]


def bell_povm(d: int) -> Povm:
    """Projectors onto ``|Phi_rs>``, labelled ``r*d + s``."""
    return Povm.from_effects([np.outer(v, v.conj()) for v in bell_basis(d)])


def decoder_from_table(povm: Povm, ens: ExclusionEnsemble, tol: Tolerance = DEFAULT_TOL) -> dict:
    """Map each outcome label to the ensemble labels it conclusively excludes."""
    table = exclusion_table(povm, ens, tol)
    return {
        lab: frozenset(ens.labels[x] for x in ex) for lab, ex in zip(povm.labels, table.excluded)
    }


def _dephasing_parameter(J: ChoiState) -> float | None:
    d = J.d
    p = float(d * J.matrix[0, d + 1].real)
    if not -1e-9 <= p <= 1 + 1e-9:
        return None
    ref = kraus_to_choi(make_dephasing(d, min(max(p, 0.0), 1.0))).matrix
    if np.linalg.norm(J.matrix - ref) > 1e-8:
        return None
    return p


def decoder_table(cfg: GameConfig, tol: Tolerance = DEFAULT_TOL) -> dict:
    """Bell-basis decoder for the dephasing game with Weyl encodings.

    Derived from the numerical exclusion table, not from index arithmetic.
    """
    if _dephasing_parameter(cfg.choi) is None:
        raise GameError("decoder_table requires a dephasing channel")
    ref = weyl_encodings(cfg.d)
    if not cfg.unitary_encodings or len(cfg.encodings) != len(ref) or any(
        np.linalg.norm(U - W) > UNITARY_ATOL for U, W in zip(cfg.encodings, ref)
    ):
        raise GameError("decoder_table requires the Weyl encodings in lexicographic order")
    return decoder_from_table(bell_povm(cfg.d), build_game_states(cfg), tol)


def discrimination_decoder(n: int) -> dict:
    """Outcome ``a`` excludes every label except ``a``."""
    return {a: frozenset(range(n)) - {a} for a in range(n)}


def _trial_uniforms(seed: int, t: int) -> tuple[float, float]:
    w = np.random.SeedSequence(seed, spawn_key=(t,)).generate_state(2, dtype=np.uint64)
    return float(w[0] >> np.uint64(11)) * 2.0**-53, float(w[1] >> np.uint64(11)) * 2.0**-53


def _run_trials(start, stop, seed, prior_cdf, outcome_cdf, fail_mask):
    failures = 0
    counts = np.zeros(outcome_cdf.shape[1], dtype=np.int64)
    last = outcome_cdf.shape[1] - 1
    for t in range(start, stop):
        u1, u2 = _trial_uniforms(seed, t)
        x = min(int(np.searchsorted(prior_cdf, u1, side="right")), len(prior_cdf) - 1)
        a = min(int(np.searchsorted(outcome_cdf[x], u2, side="right")), last)
        counts[a] += 1
        failures += int(fail_mask[a, x])
    return failures, counts


def _thread_count(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, threads)


def run_game(
    cfg: GameConfig,
    povm: Povm,
    decoder: Mapping,
    tol: Tolerance = DEFAULT_TOL,
    threads: int | None = None,
) -> GameReport:
    """Monte-Carlo rounds of the game.

    Each trial samples ``x`` from the priors, an outcome ``a`` from the Born
    probabilities ``tr[T_a rho^{x|N}]`` by inverse CDF, and records a failure
    when ``x`` is in ``decoder[a]``.
    """
    if not verify_povm(povm, tol).ok:
        raise GameError("decoding measurement is not a valid POVM")
    missing = [lab for lab in povm.labels if lab not in decoder]
    if missing:
        raise DecoderGapError(f"decoder has no entry for outcome(s) {missing}")
    if povm.dim != cfg.d * cfg.d:
        raise DimensionError(f"POVM acts on dim {povm.dim}, game states on dim {cfg.d ** 2}")

    ens = build_game_states(cfg)
    table = exclusion_table(povm, ens, tol)
    probs = np.clip(table.probabilities.T, 0.0, None)  # (x, a)
    residual = np.abs(probs.sum(axis=1) - 1.0).max()
    if residual > BORN_ATOL:
        raise GameError(f"Born probabilities do not normalize (residual {residual:.3e})")
    probs /= probs.sum(axis=1, keepdims=True)
    outcome_cdf = np.cumsum(probs, axis=1)
    prior_cdf = np.cumsum(cfg.priors)

    fail_mask = np.array(
        [[ens.labels[x] in decoder[lab] for x in range(ens.n)] for lab in povm.labels]
    )

    nthreads = min(_thread_count(threads), max(1, cfg.trials))
    bounds = np.linspace(0, cfg.trials, nthreads + 1).astype(int)
    chunks = list(zip(bounds[:-1], bounds[1:]))
    args = (cfg.seed, prior_cdf, outcome_cdf, fail_mask)
    if nthreads == 1:
        results = [_run_trials(a, b, *args) for a, b in chunks]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            results = list(pool.map(lambda c: _run_trials(c[0], c[1], *args), chunks))
    failures = sum(f for f, _ in results)
    counts = sum((c for _, c in results), np.zeros(len(povm), dtype=np.int64))

    r_c = cfg.choi.rank
    return GameReport(
        theorem1_k=theorem1_bound(cfg.n, cfg.d, r_c),
        achieved_k=min(len(decoder[lab]) for lab in povm.labels),
        failures=int(failures),
        trials_run=cfg.trials,
        per_outcome_excluded={lab: tuple(sorted(decoder[lab])) for lab in povm.labels},
        choi_rank_used=r_c,
        outcome_counts=tuple(int(c) for c in counts),
        d=cfg.d,
        n=cfg.n,
        p=cfg.p,
        seed=cfg.seed,
        config_hash=cfg.fingerprint(),
    )


def unital_extension_check(cfg: GameConfig, tol: Tolerance = DEFAULT_TOL) -> UnitalExtensionVerdict:
    """Rank and bound checks for games with unital encodings.

    Each state is ``(id (x) E_x^T)(J_N)``, a unital channel applied to the
    Choi state, so its spectrum is majorized by that of ``J_N`` and its rank
    is at least ``r_c``.  The projector-sum bound on the resulting ensemble
    must then sit below ``floor(N (d^2 - r_c) / d^2)``.
    """
    J = cfg.choi.matrix
    checks = [unital_monotonicity_check(_b_side(e, cfg.d), J, tol) for e in cfg.encodings]
    ens = build_game_states(cfg)
    ranks = tuple(supp_count(spectrum(rho, tol).values, tol) for rho in ens.states)
    r_c = cfg.choi.rank
    return UnitalExtensionVerdict(
        ranks=ranks,
        choi_rank=r_c,
        majorized=tuple(c.majorized for c in checks),
        lemma1_k=lemma1_max_k(ens, tol),
        theorem1_k=theorem1_bound(cfg.n, cfg.d, r_c),
    )
