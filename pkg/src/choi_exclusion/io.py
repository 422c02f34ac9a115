"""JSON wire formats.

Complex numbers are ``[re, im]`` pairs and matrices are row-major nested
lists of them.  Channel specs, ensembles and POVMs are plain JSON objects
built from that encoding.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .exclusion import ExclusionEnsemble, Povm
from .matop import DimensionError
from .quantum import (
    ChoiState,
    KrausChannel,
    choi_to_kraus,
    is_cptp,
    kraus_to_choi,
    make_dephasing,
    make_depolarizing,
    make_unitary_channel,
)


class FormatError(ValueError):
    """Malformed JSON document or matrix payload."""


def encode_complex(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def encode_matrix(M) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def decode_matrix(data) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"matrix payload is not numeric: {exc}") from None
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise FormatError(f"matrix must be rows x cols x [re, im], got shape {arr.shape}")
    return arr[..., 0] + 1j * arr[..., 1]


def load_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _require(doc: dict, key: str):
    if not isinstance(doc, dict) or key not in doc:
        raise FormatError(f"missing field {key!r}")
    return doc[key]


def channel_from_spec(doc: dict) -> tuple[KrausChannel | None, ChoiState]:
    """Parse a channel spec.

    Returns the Kraus form (``None`` for a ``"choi"`` spec that is not
    CPTP) and the Choi state.  ``{"d", "kind", ...}`` with ``kind`` one of
    ``"kraus"``, ``"choi"`` or ``"builtin"``.
    """
    d = int(_require(doc, "d"))
    kind = _require(doc, "kind")
    if kind == "kraus":
        ops = [decode_matrix(m) for m in _require(doc, "kraus")]
        ch = KrausChannel(tuple(ops))
        if ch.d != d:
            raise DimensionError(f"Kraus operators are {ch.d}-dimensional, spec says d={d}")
        return ch, kraus_to_choi(ch)
    if kind == "choi":
        J = ChoiState(decode_matrix(_require(doc, "choi")), d)
        if not is_cptp(J).ok:
            return None, J
        return choi_to_kraus(J), J
    if kind == "builtin":
        spec = _require(doc, "builtin")
        name = _require(spec, "name")
        if name == "dephasing":
            ch = make_dephasing(d, float(_require(spec, "p")))
        elif name == "depolarizing":
            ch = make_depolarizing(d, float(_require(spec, "p")))
        elif name == "unitary":
            ch = make_unitary_channel(decode_matrix(_require(spec, "unitary")))
            if ch.d != d:
                raise DimensionError(f"unitary is {ch.d}-dimensional, spec says d={d}")
        else:
            raise FormatError(f"unknown builtin channel {name!r}")
        return ch, kraus_to_choi(ch)
    raise FormatError(f"unknown channel kind {kind!r}")


def channel_to_spec(ch: KrausChannel) -> dict:
    return {"d": ch.d, "kind": "kraus", "kraus": [encode_matrix(K) for K in ch.kraus_ops]}


def _decode_label(label):
    if isinstance(label, list):
        return tuple(int(v) for v in label)
    return int(label)


def _encode_label(label):
    if isinstance(label, tuple):
        return list(label)
    return label


def ensemble_from_json(doc: dict) -> ExclusionEnsemble:
    dim = int(_require(doc, "dim"))
    states = [decode_matrix(m) for m in _require(doc, "states")]
    for rho in states:
        if rho.shape != (dim, dim):
            raise DimensionError(f"state of shape {rho.shape} in a dim={dim} ensemble")
    priors = doc.get("priors")
    return ExclusionEnsemble.from_states(states, priors=priors)


def ensemble_to_json(ens: ExclusionEnsemble) -> dict:
    return {
        "dim": ens.dim,
        "states": [encode_matrix(rho) for rho in ens.states],
        "priors": [float(p) for p in ens.priors],
    }


def povm_from_json(doc: dict) -> Povm:
    dim = int(_require(doc, "dim"))
    effects = [decode_matrix(m) for m in _require(doc, "effects")]
    for T in effects:
        if T.shape != (dim, dim):
            raise DimensionError(f"effect of shape {T.shape} in a dim={dim} POVM")
    labels = doc.get("labels")
    if labels is not None:
        labels = [_decode_label(lab) for lab in labels]
    return Povm.from_effects(effects, labels)


def povm_to_json(povm: Povm) -> dict:
    return {
        "dim": povm.dim,
        "effects": [encode_matrix(T) for T in povm.effects],
        "labels": [_encode_label(lab) for lab in povm.labels],
    }
