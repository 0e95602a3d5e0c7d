"""Command-line front end.

Subcommands: ``link-curve``, ``table1``, ``tune``, ``simulate``.  Exit codes
are 0 on success, 2 for usage or configuration errors and 1 for failures
during a run.  Every file written carries a manifest (embedded for JSON, a
``.manifest.json`` sidecar for CSV) from which it can be regenerated.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .bell_algebra import PurificationPolicy
from .photonics import Attenuation, DegenerateChannelError, default_grid, link_curve, p_spd, write_curve_csv
from .repeater_sim import (
    Candidate,
    ConfigError,
    RepeaterConfig,
    aggregate,
    default_candidates,
    run_many,
    score_candidates,
    tune_base_fidelity,
    write_trace_csv,
)

SCHEMA_VERSION = 1
TABLE1_FIDELITIES = (0.98, 0.9, 0.75)
TABLE1_RATIOS = (0.4, 0.8, 1.6)

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def manifest(subcommand: str, *, config=None, seeds=None, outputs=None, args=None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "qubus-repeater",
        "version": __version__,
        "subcommand": subcommand,
        "config": config,
        "seeds": seeds,
        "outputs": outputs or [],
        "args": args,
    }


def _write_sidecar(path: Path, man: dict) -> None:
    Path(str(path) + ".manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# -- link-curve ---------------------------------------------------------------

def cmd_link_curve(args) -> int:
    if args.ratio <= 0:
        raise UsageError("--ratio must be > 0 (the lossless channel is degenerate)")
    if not 0 < args.eta2 <= 1:
        raise UsageError("--eta2 must lie in (0, 1]")
    grid = args.grid if args.grid is not None else default_grid(args.points)
    if any(not 0.5 <= F <= 1.0 for F in grid):
        raise UsageError("grid fidelities must lie in [0.5, 1]")
    rows = link_curve(Attenuation(args.ratio), args.eta2, grid)
    if args.out is None:
        write_curve_csv(rows, sys.stdout)
        return EXIT_OK
    out = Path(args.out)
    with out.open("w") as fh:
        write_curve_csv(rows, fh)
    _write_sidecar(out, manifest("link-curve", outputs=[str(out)],
                                 args={"ratio": args.ratio, "eta2": args.eta2, "grid": list(grid)}))
    return EXIT_OK


# -- table1 -------------------------------------------------------------------

def table1_rows(eta_sq: float = 0.9) -> list[tuple[float, list[float]]]:
    return [(F, [p_spd(F, r, eta_sq) for r in TABLE1_RATIOS]) for F in TABLE1_FIDELITIES]


def format_table1(eta_sq: float = 0.9) -> str:
    head = "F      " + "".join(f"{'l/l0=' + format(r, 'g'):>11}" for r in TABLE1_RATIOS)
    lines = [head]
    for F, vals in table1_rows(eta_sq):
        lines.append(f"{F:<7g}" + "".join(f"  {v:9.5f}" for v in vals))
    return "\n".join(lines) + "\n"


def cmd_table1(args) -> int:
    text = format_table1(args.eta2)
    if args.out is None:
        sys.stdout.write(text)
    else:
        out = Path(args.out)
        out.write_text(text)
        _write_sidecar(out, manifest("table1", outputs=[str(out)], args={"eta2": args.eta2}))
    return EXIT_OK


# -- tune ---------------------------------------------------------------------

def _parse_candidate(text: str, target: float) -> Candidate:
    """``label:F:kind[:rounds]``, e.g. ``sym:0.75:symmetric_nested:2``."""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise UsageError(f"candidate {text!r} is not label:F:kind[:rounds]")
    label, F, kind = parts[0], parts[1], parts[2]
    try:
        F = float(F)
        rounds = int(parts[3]) if len(parts) == 4 else None
        policy = PurificationPolicy(kind, rounds=rounds, target_fidelity=target)
    except ValueError as exc:
        raise UsageError(f"candidate {text!r}: {exc}") from None
    if not 0.5 < F <= 1:
        raise UsageError(f"candidate {text!r}: base fidelity must lie in (1/2, 1]")
    return Candidate(F, policy, label)


def cmd_tune(args) -> int:
    if args.ratio <= 0:
        raise UsageError("--ratio must be > 0")
    if args.candidate:
        cands = [_parse_candidate(c, args.target) for c in args.candidate]
    else:
        cands = default_candidates(args.target)
    att = Attenuation(args.ratio)
    scores = score_candidates(cands, att, args.eta2, args.gate_error)
    best = None
    if any(s.p_eff is not None for s in scores):
        best, scores = tune_base_fidelity(cands, att, args.eta2, args.gate_error)
    lines = []
    for s in scores:
        c = s.candidate
        name = c.label or f"{c.policy.kind}@{c.base_fidelity:g}"
        if s.p_eff is None:
            lines.append(f"{name:<12} F_base={c.base_fidelity:<6g} UNREACHABLE: {s.error}")
        else:
            lines.append(f"{name:<12} F_base={c.base_fidelity:<6g} rounds={s.rounds} "
                         f"F_final={s.final_fidelity:.5f} P_eff={s.p_eff:.5f}")
    if best is None:
        lines.append("winner: none (no candidate reaches its target fidelity)")
    else:
        c = best.candidate
        lines.append(f"winner: {c.label or c.policy.kind} (P_eff={best.p_eff:.5f})")
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if best is not None else EXIT_RUNTIME


# -- simulate -----------------------------------------------------------------

_SIM_FLAG_SKIP = {"seed", "trace"}


def _config_fields():
    return [f for f in dataclasses.fields(RepeaterConfig) if f.name not in _SIM_FLAG_SKIP]


def load_config_file(path: str) -> dict:
    import tomli

    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file {path} not found") from None
    except tomli.TOMLDecodeError as exc:
        raise UsageError(f"config file {path}: {exc}") from None
    if not isinstance(data, dict) or any(isinstance(v, dict) for v in data.values()):
        raise UsageError(f"config file {path}: expected flat key = value pairs")
    return data


def resolve_config(args) -> tuple[dict, list[int]]:
    """Defaults, then the config file, then explicit flags."""
    data: dict = {}
    seeds = None
    if args.replay:
        man = json.loads(Path(args.replay).read_text())
        man = man.get("manifest", man)
        data.update({k: v for k, v in man["config"].items() if k not in _SIM_FLAG_SKIP})
        seeds = man["seeds"]
    if args.config:
        data.update(load_config_file(args.config))
    for f in _config_fields():
        v = getattr(args, f.name)
        if v is not None:
            data[f.name] = v
    if "seed" in data:
        seeds = seeds or [data.pop("seed")]
    data.pop("trace", None)
    if args.seeds is not None:
        seeds = args.seeds
    return data, seeds or [0]


def cmd_simulate(args) -> int:
    data, seeds = resolve_config(args)
    if not seeds:
        raise UsageError("--seeds is empty")
    try:
        base = RepeaterConfig.from_dict(data)
        base.validate()
    except ConfigError as exc:
        for k, msg in exc.errors.items():
            print(f"config error: {k}: {msg}", file=sys.stderr)
        return EXIT_USAGE
    want_trace = args.trace_out is not None
    configs = [dataclasses.replace(base, seed=s, trace=want_trace) for s in seeds]

    def render() -> tuple[str, list]:
        reports = run_many(configs, parallel=args.parallel, workers=args.workers)
        outputs = [p for p in (args.out, args.trace_out) if p]
        agg = aggregate(reports)
        doc = {
            "manifest": manifest("simulate", config=base.to_dict(), seeds=list(seeds), outputs=outputs),
            "reports": [r.to_dict() for r in reports],
            "aggregate": {"n": agg.n, "rate_mean": agg.mean, "rate_stderr": agg.stderr},
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n", reports

    text, reports = render()
    for _ in range(args.repeat - 1):
        again, _ = render()
        if again != text:
            print("error: repeated run produced a different report", file=sys.stderr)
            return EXIT_RUNTIME
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.trace_out:
        with open(args.trace_out, "w") as fh:
            for r in reports:
                fh.write(f"# seed={r.seed}\n")
                write_trace_csv(r.trace, fh)
        _write_sidecar(Path(args.trace_out), json.loads(text)["manifest"])
    agg = aggregate(reports)
    summary = f"rate {agg.mean:.3g} pairs/s"
    if agg.n > 1:
        summary += f" +/- {agg.stderr:.3g} (n={agg.n})"
    print(summary, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qubus-repeater", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("link-curve", help="CSV of P_CSP and P_SPD against fidelity")
    p.add_argument("--ratio", type=float, default=0.8, help="segment length in attenuation lengths")
    p.add_argument("--eta2", type=float, default=0.9, help="detector efficiency")
    p.add_argument("--grid", type=_float_list, help="comma-separated fidelities (default: 101 points on [0.5, 1])")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out")
    p.set_defaults(func=cmd_link_curve)

    p = sub.add_parser("table1", help="P_SPD on the 3x3 fidelity/spacing grid")
    p.add_argument("--eta2", type=float, default=0.9)
    p.add_argument("--out")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("tune", help="compare direct generation with purification strategies")
    p.add_argument("--ratio", type=float, default=0.8)
    p.add_argument("--eta2", type=float, default=0.9)
    p.add_argument("--target", type=float, default=0.98)
    p.add_argument("--gate-error", type=float, default=0.0)
    p.add_argument("--candidate", action="append", help="label:F:kind[:rounds]; repeatable")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="Monte Carlo of the nested repeater chain")
    p.add_argument("--config", help="TOML file with flat RepeaterConfig keys")
    p.add_argument("--replay", help="re-run from a report or manifest JSON")
    p.add_argument("--seeds", type=_int_list)
    p.add_argument("--repeat", type=int, default=1, help="run N times and require identical output")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.add_argument("--trace-out")
    for f in _config_fields():
        kind = str(f.type)
        typ = int if "int" in kind else str if "str" in kind else float
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=typ, default=None)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if getattr(args, "repeat", 1) < 1:
            raise UsageError("--repeat must be >= 1")
        return args.func(args)
    except (UsageError, DegenerateChannelError) as exc:
        print(f"{ap.prog}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - surface any run failure as exit 1
        print(f"{ap.prog}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
