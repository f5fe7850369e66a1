"""``qtoken`` command-line front end.

Exit codes: 0 success (including protocol-level rejections), 1 configuration
or usage error, 2 infeasible coin design.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import cv, dv, ensemble, harness, puf
from .harness import ConfigError, ExperimentConfig
from .memory import NV_FLIP_READOUT, ReadoutModel, dump_presets, load_presets
from .rng import derive_rng

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 1, 2
# sub-stream used by ``issue``/``verify`` so they never collide with trials
_STREAM_CLI = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors, not exit 2
        raise UsageError(message)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _apply_overrides(raw: dict, sets: Sequence[str], seed: Optional[int]) -> dict:
    for text in sets or ():
        key, value = harness.parse_override(text)
        raw = harness.set_path(raw, key, value)
    if seed is not None:
        raw = dict(raw, master_seed=seed)
    return raw


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError("--config is required")
    return ExperimentConfig.from_dict(_apply_overrides(_load_json(args.config), args.set, args.seed))


def _threads(args) -> int:
    return args.threads if args.threads else harness.default_threads()


def _emit(args, text: str) -> None:
    if args.out:
        harness.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


# -- verbs --------------------------------------------------------------------


def cmd_run(args) -> int:
    cfg = _config(args)
    recs = harness.run_protocol(cfg, _threads(args))
    _emit(args, harness.records_to_jsonl(recs))
    acc = sum(r.accept for r in recs)
    print(f"{cfg.family}: {acc}/{len(recs)} accepted", file=sys.stderr)
    return EXIT_OK


def cmd_attack(args) -> int:
    raw = _apply_overrides(_load_json(args.config), args.set, args.seed) if args.config else None
    if raw is None:
        raise ConfigError("--config is required")
    if args.strategy:
        raw = harness.set_path(raw, "adversary", dict(raw.get("adversary") or {}, strategy=args.strategy))
    if not raw.get("adversary"):
        raise ConfigError("attack needs an adversary strategy (config or --strategy)", "/adversary")
    cfg = ExperimentConfig.from_dict(raw)
    recs = harness.run_protocol(cfg, _threads(args))
    _emit(args, harness.records_to_jsonl(recs))
    acc = sum(r.accept for r in recs)
    print(f"{cfg.family} vs {cfg.adversary['strategy']}: forged accepted {acc}/{len(recs)}", file=sys.stderr)
    return EXIT_OK


def cmd_issue(args) -> int:
    cfg = _config(args)
    rng = derive_rng(cfg.master_seed, _STREAM_CLI, 0)
    p = cfg.family_params
    if cfg.family == "dv":
        secret, token = dv.issue_dv(p["n"], rng)
        doc = {"family": "dv", "secret": secret.to_dict(), "token": token.to_dict()}
    elif cfg.family == "ensemble":
        policy = ensemble.CoinPolicy(p["N"], p["M"], p["tau"], p["T"])
        secret, coin = ensemble.issue_coin(policy, rng, p.get("angle_set"))
        doc = {"family": "ensemble", "policy": policy.to_dict(), "secret": secret.to_dict(),
               "token": {"spins": coin.spins.tolist()}}
    elif cfg.family == "cv":
        book = cv.CVCodebook.from_dict(p["codebook"])
        states = [cv.generate_cv_token(book, j) for j in range(len(book.symbols))]
        doc = {"family": "cv", "secret": {"codebook": book.to_dict()},
               "token": {"states": [{"mean": g.mean.tolist(), "cov": g.cov.tolist()} for g in states]}}
    else:
        device = harness._context(cfg)["device"]
        table = puf.enroll(device, p.get("n_crp", p["k"]), rng, p.get("mode", "local"))
        doc = {"family": "puf", "device": device.to_dict(), "secret": table.to_dict()}
    _emit(args, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_verify(args) -> int:
    token_doc = _load_json(args.token)
    secret_doc = _load_json(args.secret or args.token)
    family = token_doc.get("family") or secret_doc.get("family")
    token = token_doc.get("token", token_doc)
    secret = secret_doc.get("secret", secret_doc)
    seed = args.seed if args.seed is not None else 0
    rng = derive_rng(seed, _STREAM_CLI, 1)
    try:
        if family == "dv":
            tok, sec = dv.DVToken.from_dict(token), dv.DVTokenSecret.from_dict(secret)
            policy = dv.DVVerificationPolicy(args.min_matches)
            try:
                res = dv.verify_dv(tok, sec, policy, rng)
                verdict = {"accept": res.accept, "matches": res.matches, "answered": res.answered, "n": sec.n}
            except dv.SerialMismatch as exc:
                verdict = {"accept": False, "reason": "serial mismatch", "detail": str(exc)}
        elif family == "ensemble":
            policy = ensemble.CoinPolicy.from_dict(secret_doc.get("policy") or token_doc["policy"])
            sec = ensemble.EnsembleSecret.from_dict(secret)
            coin = ensemble.EnsembleCoin(np.array(token["spins"]))
            readout = ReadoutModel.from_dict(json.loads(args.readout)) if args.readout else ReadoutModel.perfect()
            res = ensemble.verify_coin(coin, sec, policy, readout, rng)
            verdict = {"accept": res.accept, "passing_tokens": res.passing_tokens, "counts": res.counts.tolist()}
        else:
            raise ConfigError(f"verify supports dv and ensemble files, got family {family!r}", "/family")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed token or secret: {exc}") from exc
    verdict["verdict"] = "accept" if verdict["accept"] else "reject"
    _emit(args, json.dumps(verdict, sort_keys=True) + "\n")
    return EXIT_OK


def _design_params(args) -> dict:
    raw = _apply_overrides(_load_json(args.config), args.set, args.seed) if args.config else {}
    schema = json.loads(resources.files("qtoken.data").joinpath("design_schema.json").read_text())
    errors = list(jsonschema.Draft202012Validator(schema).iter_errors(raw))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ConfigError(best.message, "/" + "/".join(str(p) for p in best.absolute_path))
    return raw


def cmd_design(args) -> int:
    d = _design_params(args)
    readout = ReadoutModel.from_dict(d["readout"]) if "readout" in d else NV_FLIP_READOUT
    seed = d.get("master_seed", 0)
    try:
        design = ensemble.design_coin(
            d["targets"]["false_accept"],
            d["targets"]["false_reject"],
            readout,
            attack=d.get("attack", "three-axis"),
            N_range=range(d.get("N_min", 1), d.get("N_max", 12) + 1),
            M_max=d.get("M_max", 20_000),
            n_samples=d.get("samples", 1_000_000),
            confidence=d.get("confidence", 0.99),
            rng=derive_rng(seed, _STREAM_CLI, 2),
            seed=seed,
        )
    except ensemble.InfeasibleDesign as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.best:
            print(f"best achieved: {json.dumps(exc.best, sort_keys=True)}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(ensemble.format_certificate(design), file=sys.stderr)
    doc = {"policy": design.policy.to_dict(), "certificate": design.certificate}
    _emit(args, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_values(text: str) -> list:
    if text is None or not text.strip():
        return []
    out = []
    for part in text.split(","):
        try:
            out.append(json.loads(part))
        except json.JSONDecodeError:
            out.append(part.strip())
    return out


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if not args.param:
        raise ConfigError("--param is required")
    rows = harness.sweep(cfg, args.param, _parse_values(args.values), _threads(args))
    _emit(args, harness.sweep_to_csv(rows, args.param))
    return EXIT_OK


def cmd_report(args) -> int:
    path = args.results or args.config
    if not path:
        raise ConfigError("report needs a results file")
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    recs, bad = harness.read_results(text)
    rep = harness.summarize(recs, bad)
    print(harness.format_report(rep))
    if args.out:
        harness.atomic_write(args.out, harness.report_csv(rep))
    return EXIT_OK


def cmd_presets(args) -> int:
    presets = load_presets(args.config) if args.config else load_presets()
    if args.out:
        harness.atomic_write(args.out, dump_presets(presets))
    for label, spec in presets.items():
        print(f"{label:<14} t1={spec.t1:<10.6g} t2={spec.t2:<10.6g} modes={spec.modes:<4} {spec.multiplexing}")
    return EXIT_OK


COMMANDS = {
    "issue": cmd_issue,
    "verify": cmd_verify,
    "attack": cmd_attack,
    "design": cmd_design,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "presets": cmd_presets,
    "run": cmd_run,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output file (written atomically); stdout when absent")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry by dotted path")
    common.add_argument("--threads", type=int, help="worker threads (default: $QTOKEN_THREADS or 1)")
    common.add_argument("--seed", type=int, help="replace master_seed")

    parser = _Parser(prog="qtoken", description="Quantum token protocol simulator")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common], help="run an experiment, JSONL out")
    sub.add_parser("issue", parents=[common], help="issue one token and its secret")
    p = sub.add_parser("verify", parents=[common], help="verify an issued token")
    p.add_argument("--token", required=True)
    p.add_argument("--secret")
    p.add_argument("--min-matches", type=int)
    p.add_argument("--readout", help="readout model as JSON (ensemble)")
    p = sub.add_parser("attack", parents=[common], help="run an experiment with an adversary")
    p.add_argument("--strategy")
    sub.add_parser("design", parents=[common], help="search a coin policy meeting error targets")
    p = sub.add_parser("sweep", parents=[common], help="acceptance versus one parameter, CSV out")
    p.add_argument("--param")
    p.add_argument("--values", default="")
    p = sub.add_parser("report", parents=[common], help="summarize a JSONL result file")
    p.add_argument("results", nargs="?")
    sub.add_parser("presets", parents=[common], help="list or export memory presets")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"qtoken: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"qtoken: config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"qtoken: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
