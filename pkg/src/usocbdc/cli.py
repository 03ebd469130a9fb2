"""Command-line interface: run, verify, audit, keys, vectors.

Exit codes: 0 success, 1 verification/audit/invariant failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys

from . import instrument
from .asset import verify_asset
from .blindsig import REALISTIC_BITS, dump_key, generate_keypair
from .codec import CodecError
from .files import load_asset, load_roots
from .mint import audit_ledger_lines
from .sigs import KeyPair, private_pem
from .sim.config import ConfigInvalid, SimulationConfig, parse_scenario
from .sim.engine import run_scenario
from .sim.scenarios import BUILTIN
from .vectors import golden_files


def _read(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    cfg = SimulationConfig()
    try:
        if args.config:
            cfg = parse_scenario(_read(args.config), cfg)
        text = BUILTIN[args.scenario] if args.scenario in BUILTIN else _read(args.scenario)
        cfg = parse_scenario(text, cfg)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.flush_cycles:
            cfg.flush_cycles = True
        result = run_scenario(cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigInvalid as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 2
    paths = result.write(args.out)
    final = result.final
    summary = {
        "status": "ok" if not result.violation else "invariant_violation",
        "cycles": final.cycle,
        "in_flight": final.total_in_flight,
        "reserves": final.reserves,
        "conflicts": final.conflicts,
        "equivocations": final.equivocations,
        "files": [os.path.basename(p) for p in paths],
    }
    if result.violation:
        v = result.violation
        summary["violation"] = {"cycle": v.cycle, "assertion": v.assertion, "detail": v.detail}
    _emit(summary)
    return result.exit_status


def cmd_verify(args) -> int:
    roots_path = args.roots or os.path.join(os.path.dirname(os.path.abspath(args.asset)), "trust-roots.txt")
    try:
        roots = load_roots(_read(roots_path))
    except (OSError, ValueError, CodecError) as exc:
        print(f"error: cannot load trust roots: {exc}", file=sys.stderr)
        return 2
    try:
        with open(args.asset, "rb") as fh:
            asset = load_asset(fh.read())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, CodecError) as exc:
        _emit({"finality": "invalid", "passed": False, "findings": [f"unreadable asset: {exc}"]})
        return 1
    instrument.reset()
    report = verify_asset(asset, roots).as_dict()
    report["service_access"] = instrument.total()
    _emit(report)
    return 0 if report["passed"] else 1


def cmd_audit(args) -> int:
    lines: list[str] = []
    try:
        for p in args.ledgers:
            lines.extend(_read(p).splitlines())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    res = audit_ledger_lines(lines)
    _emit({"ok": res.ok, "in_flight": res.in_flight, "findings": res.findings})
    return 0 if res.ok else 1


def cmd_keys(args) -> int:
    rng = random.Random(args.seed) if args.seed is not None else None
    os.makedirs(args.out, exist_ok=True)
    written = []
    if args.kind == "plate":
        if args.denom is None or args.denom <= 0:
            print("error: plate keys need a positive --denom", file=sys.stderr)
            return 2
        key = generate_keypair(args.id, args.denom, args.bits, rng)
        for secret, suffix in ((True, "key"), (False, "pub")):
            path = os.path.join(args.out, f"{args.id}.{suffix}")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(dump_key(key, secret=secret))
            written.append(path)
    else:
        kp = KeyPair.generate(rng)
        path = os.path.join(args.out, f"{args.id}.pem")
        with open(path, "wb") as fh:
            fh.write(private_pem(kp))
        pub = os.path.join(args.out, f"{args.id}.pub")
        with open(pub, "w", encoding="utf-8") as fh:
            fh.write(kp.public.hex() + "\n")
        written += [path, pub]
    _emit({"written": written})
    return 0


def cmd_vectors(args) -> int:
    files = golden_files(args.bits)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(args.out, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        _emit({"written": sorted(files)})
    else:
        for name, text in files.items():
            sys.stdout.write(f"## {name}\n{text}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="usocbdc", description="USO-asset retail CBDC simulator and tools")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file or built-in scenario")
    r.add_argument("scenario", help=f"scenario file, or one of: {', '.join(sorted(BUILTIN))}")
    r.add_argument("--seed", type=int)
    r.add_argument("--config", help="base config file (same syntax) applied before the scenario")
    r.add_argument("--out", default="out", help="output directory (default: out)")
    r.add_argument("--flush-cycles", action="store_true", help="commit every relay every cycle")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="verify an exported asset offline")
    v.add_argument("asset")
    v.add_argument("--roots", help="trust roots file (default: trust-roots.txt beside the asset)")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("audit", help="audit monitoring ledgers")
    a.add_argument("ledgers", nargs="+")
    a.set_defaults(func=cmd_audit)

    k = sub.add_parser("keys", help="generate plate or actor keys")
    k.add_argument("kind", choices=["plate", "actor"])
    k.add_argument("--id", required=True)
    k.add_argument("--denom", type=int)
    k.add_argument("--bits", type=int, default=REALISTIC_BITS)
    k.add_argument("--seed", type=int)
    k.add_argument("--out", default=".")
    k.set_defaults(func=cmd_keys)

    g = sub.add_parser("vectors", help="emit golden test vectors")
    g.add_argument("--bits", type=int, default=512)
    g.add_argument("--out", help="directory for codec/blindsig/merkle vector files (default: stdout)")
    g.set_defaults(func=cmd_vectors)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
