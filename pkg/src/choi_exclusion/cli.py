"""Command-line entry point.

Subcommands::

    analyze-channel   CPTP verdict, Choi rank and Bell-basis spectrum of a channel
    exclusion-bound   projector-sum and relaxed bounds on k for an ensemble
    certify-povm      check a POVM for conclusive weak/strong k-exclusion
    simulate          Monte-Carlo run of the entanglement-assisted exclusion game

Exit codes: 0 success/feasible, 1 infeasible verdict, 2 input error,
3 mathematical-precondition failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .densegame import (
    DecoderGapError,
    GameConfig,
    GameError,
    bell_povm,
    decoder_from_table,
    discrimination_decoder,
    build_game_states,
    run_game,
    weyl_encodings,
)
from .exclusion import (
    CapExceededError,
    ExclusionError,
    SaturationError,
    check_k_exclusion,
    corollary1_bounds,
    exclusion_table,
    lemma1_feasible,
    lemma1_max_k,
    reformulate_k_to_1,
    saturation_povm,
    verify_povm,
)
from .io import (
    FormatError,
    channel_from_spec,
    decode_matrix,
    ensemble_from_json,
    load_json,
    povm_from_json,
    povm_to_json,
)
from .matop import DimensionError, Tolerance, eig_hermitian
from .quantum import ChannelError, KrausChannel, bell_basis, choi_to_kraus, is_cptp

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INPUT = 2
EXIT_PRECONDITION = 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _timestamp(args) -> str:
    if getattr(args, "timestamp", None):
        return args.timestamp
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        when = _dt.datetime.fromtimestamp(int(epoch), tz=_dt.timezone.utc)
    else:
        when = _dt.datetime.now(tz=_dt.timezone.utc)
    return when.replace(microsecond=0).isoformat()


def _tolerance(args) -> Tolerance:
    return Tolerance(eig_zero=args.tol_eig, psd_slack=args.tol_psd, trace_zero=args.tol_trace)


def _manifest(command: str, config: str, tol: Tolerance, args, seed=None, trials=None) -> dict:
    return {
        "command": command,
        "config": config,
        "seed": seed,
        "trials": trials,
        "version": __version__,
        "tolerances": {
            "eig_zero": tol.eig_zero,
            "psd_slack": tol.psd_slack,
            "trace_zero": tol.trace_zero,
        },
        "timestamp": _timestamp(args),
    }


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _emit(doc, args) -> None:
    text = _dump(doc)
    if getattr(args, "report", None):
        Path(args.report).write_text(text)
    sys.stdout.write(text)


def _spectrum_list(M) -> list[float]:
    return [float(v) for v in eig_hermitian(M)[0].eigenvalues]


def cmd_analyze_channel(args) -> int:
    tol = _tolerance(args)
    try:
        kraus, J = channel_from_spec(load_json(args.spec))
    except ChannelError as exc:
        raise CliError(str(exc), EXIT_PRECONDITION) from None
    verdict = is_cptp(J, tol)
    d = J.d
    bell = [
        {"a": i // d, "b": i % d, "weight": float(np.vdot(v, J.matrix @ v).real)}
        for i, v in enumerate(bell_basis(d))
    ]
    doc = {
        "manifest": _manifest("analyze-channel", args.spec, tol, args),
        "d": d,
        "cptp": verdict.to_dict(),
        "choi_rank": J.rank if verdict.min_eigenvalue >= -tol.psd_slack else None,
        "kraus_count": len(kraus.kraus_ops) if kraus is not None else None,
        "min_kraus_count": len(choi_to_kraus(J, tol).kraus_ops) if verdict.ok else None,
        "choi_eigenvalues": _spectrum_list(J.matrix),
        "bell_diagonal": bell,
    }
    _emit(doc, args)
    return EXIT_OK if verdict.ok else EXIT_PRECONDITION


def cmd_exclusion_bound(args) -> int:
    tol = _tolerance(args)
    ens = ensemble_from_json(load_json(args.ensemble))
    max_k = lemma1_max_k(ens, tol)
    cor = corollary1_bounds(ens, tol)
    doc = {
        "manifest": _manifest("exclusion-bound", args.ensemble, tol, args),
        "N": ens.n,
        "dim": ens.dim,
        "lemma1_max_k": max_k,
        "corollary": cor.to_dict(),
    }
    code = EXIT_OK
    if args.k is not None:
        rep = lemma1_feasible(ens, args.k, tol)
        doc["lemma1"] = {
            "k": args.k,
            "feasible": rep.feasible,
            "lambda_max": rep.lambda_max,
            "bound": rep.bound,
        }
        code = EXIT_OK if rep.feasible else EXIT_INFEASIBLE

    k_sat = args.k if args.k is not None else max_k
    doc["saturation_povm"] = None
    if 1 <= k_sat <= ens.n - 1:
        try:
            povm = saturation_povm(ens, k_sat, tol)
        except SaturationError as exc:
            doc["saturation_povm"] = {"k": k_sat, "saturated": False, "residual": exc.residual}
        else:
            entry = {"k": k_sat, "saturated": True, "verify": verify_povm(povm, tol).to_dict()}
            if args.emit_povm:
                Path(args.emit_povm).write_text(_dump(povm_to_json(povm)))
                entry["path"] = args.emit_povm
            doc["saturation_povm"] = entry

    if args.reformulate is not None:
        try:
            ref = reformulate_k_to_1(ens, args.reformulate, cap=args.cap)
        except CapExceededError as exc:
            raise CliError(str(exc), EXIT_INPUT) from None
        doc["reformulated"] = {
            "k": args.reformulate,
            "states": ref.n,
            "lemma1_max_k": lemma1_max_k(ref, tol),
        }
    _emit(doc, args)
    return code


def cmd_certify_povm(args) -> int:
    tol = _tolerance(args)
    ens = ensemble_from_json(load_json(args.ensemble))
    povm = povm_from_json(load_json(args.povm))
    if povm.dim != ens.dim:
        raise CliError(f"POVM dim {povm.dim} does not match ensemble dim {ens.dim}", EXIT_INPUT)
    pv = verify_povm(povm, tol)
    if not pv.ok:
        doc = {"manifest": _manifest("certify-povm", args.povm, tol, args), "povm": pv.to_dict()}
        _emit(doc, args)
        return EXIT_PRECONDITION
    try:
        verdict = check_k_exclusion(povm, ens, args.k, args.mode, tol)
    except ExclusionError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    table = exclusion_table(povm, ens, tol)
    doc = {
        "manifest": _manifest("certify-povm", args.povm, tol, args),
        "povm": pv.to_dict(),
        "verdict": verdict.to_dict(),
        "table": [
            {
                "outcome": list(lab) if isinstance(lab, tuple) else lab,
                "excluded": [ens.labels[x] for x in sorted(ex)],
                "total_probability": float(table.probabilities[a].sum()),
            }
            for a, (lab, ex) in enumerate(zip(povm.labels, table.excluded))
        ],
        "null_outcomes": [povm.labels[a] for a in table.null_outcomes],
    }
    _emit(doc, args)
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


def _parse_encodings(spec, d: int) -> list:
    if spec == "weyl":
        return weyl_encodings(d)
    if not isinstance(spec, list):
        raise FormatError("encodings must be 'weyl' or a list")
    out = []
    for item in spec:
        if "unitary" in item:
            out.append(decode_matrix(item["unitary"]))
        elif "kraus" in item:
            out.append(KrausChannel(tuple(decode_matrix(m) for m in item["kraus"])))
        else:
            raise FormatError("each encoding needs a 'unitary' or 'kraus' field")
    return out


def _label_key(label):
    return tuple(label) if isinstance(label, list) else label


def load_game(doc: dict, trials: int | None, seed: int | None):
    """Build ``(GameConfig, Povm, decoder)`` from a game-config document."""
    try:
        d = int(doc["d"])
        chan_doc = doc["channel"]
    except (KeyError, TypeError, ValueError):
        raise FormatError("game config needs 'd' and 'channel'") from None
    kraus, J = channel_from_spec(chan_doc)
    if kraus is None:
        raise ChannelError("game channel is not CPTP")
    builtin = chan_doc.get("builtin", {}) if chan_doc.get("kind") == "builtin" else {}
    cfg = GameConfig(
        d=d,
        channel=kraus,
        encodings=tuple(_parse_encodings(doc.get("encodings", "weyl"), d)),
        priors=doc.get("priors"),
        trials=int(trials if trials is not None else doc.get("trials", 10_000)),
        seed=int(seed if seed is not None else doc.get("seed", 0)),
        channel_name=builtin.get("name", chan_doc.get("kind", "")),
        p=builtin.get("p"),
    )
    povm_spec = doc.get("povm", "bell")
    povm = bell_povm(d) if povm_spec == "bell" else povm_from_json(povm_spec)
    dec_spec = doc.get("decoder", "auto")
    if dec_spec == "auto":
        decoder = decoder_from_table(povm, build_game_states(cfg))
    elif dec_spec == "discrimination":
        decoder = discrimination_decoder(cfg.n)
    elif isinstance(dec_spec, dict):
        decoder = {_label_key(json.loads(k) if k.startswith("[") else int(k)): frozenset(v)
                   for k, v in dec_spec.items()}
    else:
        raise FormatError(f"unknown decoder spec {dec_spec!r}")
    return cfg, povm, decoder


def cmd_simulate(args) -> int:
    if args.manifest:
        manifest = load_json(args.manifest)
        manifest = manifest.get("manifest", manifest)
        try:
            config_path = manifest["config"]
            seed, trials = manifest["seed"], manifest["trials"]
            tols = manifest["tolerances"]
            args.timestamp = manifest["timestamp"]
        except (KeyError, TypeError):
            raise FormatError(f"{args.manifest}: not a run manifest") from None
        tol = Tolerance(tols["eig_zero"], tols["psd_slack"], tols["trace_zero"])
    else:
        config_path, seed, trials, tol = args.config, args.seed, args.trials, _tolerance(args)
    if config_path is None:
        raise CliError("simulate needs a config path or --manifest", EXIT_INPUT)

    cfg, povm, decoder = load_game(load_json(config_path), trials, seed)
    report = run_game(cfg, povm, decoder, tol, threads=args.threads)
    doc = {
        "manifest": _manifest("simulate", config_path, tol, args, cfg.seed, cfg.trials),
        "channel": cfg.channel_name,
        "report": report.to_dict(),
    }
    text = _dump(doc)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(text)
        header = "config_hash,d,p,N,r_c,theorem1_k,achieved_k,failures,trials,seed\n"
        (out / "report.csv").write_text(header + report.csv_row() + "\n")
    sys.stdout.write(text)
    return EXIT_OK if report.failures == 0 else EXIT_INFEASIBLE


def _add_tolerance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol-eig", type=float, default=1e-9, help="relative zero-eigenvalue threshold")
    p.add_argument("--tol-psd", type=float, default=1e-9, help="PSD / Loewner slack")
    p.add_argument("--tol-trace", type=float, default=1e-9, help="threshold for tr[T rho] = 0")
    p.add_argument("--timestamp", help="fixed manifest timestamp (default: now, or SOURCE_DATE_EPOCH)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="choi-exclusion",
        description="Choi-rank limits on conclusive state exclusion through a noisy channel.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze-channel", help="Choi-state analysis of a channel spec")
    p.add_argument("spec", help="channel spec JSON")
    p.add_argument("--report", help="also write the JSON report here")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_analyze_channel)

    p = sub.add_parser("exclusion-bound", help="bounds on k for an ensemble")
    p.add_argument("ensemble", help="ensemble JSON")
    p.add_argument("--k", type=int, help="test this k instead of reporting the maximum")
    p.add_argument("--emit-povm", help="write the saturation POVM here when it exists")
    p.add_argument("--reformulate", type=int, metavar="K", help="build the equivalent 1-exclusion task")
    p.add_argument("--cap", type=int, default=10_000, help="max reformulated ensemble size")
    p.add_argument("--report", help="also write the JSON report here")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_exclusion_bound)

    p = sub.add_parser("certify-povm", help="check conclusive k-exclusion of a POVM")
    p.add_argument("ensemble", help="ensemble JSON")
    p.add_argument("povm", help="POVM JSON")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--mode", choices=("weak", "strong"), default="weak")
    p.add_argument("--report", help="also write the JSON report here")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_certify_povm)

    p = sub.add_parser("simulate", help="Monte-Carlo run of the exclusion game")
    p.add_argument("config", nargs="?", help="game config JSON")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="directory for report.json and report.csv")
    p.add_argument("--manifest", help="replay the manifest embedded in a previous report")
    p.add_argument("--threads", type=int, help="worker threads (default: $CHOI_EXCL_THREADS or 1)")
    _add_tolerance_flags(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DecoderGapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (ChannelError, SaturationError, GameError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (FormatError, DimensionError, ExclusionError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
