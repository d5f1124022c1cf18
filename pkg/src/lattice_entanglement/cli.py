"""
Command-line driver: ``lattice-ent {build,measure,bound,oracle,dephase,sweep}``.

Every subcommand accepts ``--config`` (YAML); command-line flags override the
file. Outputs go to ``--out-dir``, else ``$LATTICE_ENT_OUTDIR``, else the
current directory. JSON is written with sorted keys and no timestamps so the
same configuration and seed give byte-identical files.

Exit codes: 0 success, 2 validation error, 3 numerical-tolerance failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import verification
from .config import ConfigError, RunConfig, build_from_config, read_state, write_state
from .dephasing import dephased_q_internal, make_schedule
from .entanglement_bounds import (
    concurrence,
    qubit_block,
    ssr_eof,
    witness_report,
    witness_report_from_record,
    wootters_eof,
)
from .fock_space import NonPhysicalStateError, total_number
from .reduced_density import delocalized_rho_ab, project_nonzero, to_json_dict
from .state_builders import DefectBudget
from .tof_observables import (
    GridError,
    q_internal_direct,
    record_from_csv,
    record_to_csv,
    record_to_json,
    sample_shots,
    simulate_record,
)


EXIT_OK, EXIT_VALIDATION, EXIT_TOLERANCE = 0, 2, 3
OUTDIR_ENV = "LATTICE_ENT_OUTDIR"
ORACLE_MAX_BLOCK = 512
ORACLE_MAX_SITES = 10


class ToleranceError(RuntimeError):
    """A numerical check failed (oracle violation, quadrature mismatch)."""


# --- helpers ------------------------------------------------------------------


def _write_json(path: Path, data) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1, sort_keys=True, default=_encode) + "\n")
    return path


def _encode(obj):
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "L", None) is not None:
        cfg.geometry.L = args.L
    if getattr(args, "max_occ", None) is not None:
        cfg.geometry.max_occ = args.max_occ
    if getattr(args, "d", None) is not None:
        cfg.geometry.d = args.d
    if getattr(args, "statistics", None):
        cfg.statistics = args.statistics
    if getattr(args, "builder", None):
        cfg.builder.name = args.builder
    for item in getattr(args, "param", None) or []:
        key, _, value = item.partition("=")
        if not _:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        cfg.builder.params[key] = _parse_value(value)
    if getattr(args, "envelope", None):
        cfg.envelope.model = args.envelope
    if getattr(args, "sigma", None) is not None:
        cfg.envelope.sigma = args.sigma
    if getattr(args, "x", None):
        cfg.x = list(args.x)
    if getattr(args, "epsilon", None) is not None:
        cfg.budget.epsilon = args.epsilon
    if getattr(args, "r", None) is not None:
        cfg.budget.r = args.r
    if getattr(args, "inject", False):
        cfg.budget.inject = True
    if getattr(args, "regime", None):
        cfg.regimes = list(args.regime)
    if getattr(args, "shots", None) is not None:
        cfg.shots = args.shots
    if getattr(args, "random_times", False):
        cfg.schedule.random_times = True
    if getattr(args, "M", None) is not None:
        cfg.schedule.M = args.M
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out_dir", None):
        cfg.output_dir = args.out_dir
    return cfg


def _parse_value(text: str):
    import yaml

    return yaml.safe_load(text)


def _outdir(cfg: RunConfig) -> Path:
    path = Path(cfg.output_dir or os.environ.get(OUTDIR_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _output(cfg: RunConfig, args, default: str) -> Path:
    if getattr(args, "output", None):
        return Path(args.output)
    return _outdir(cfg) / default


def _xs(cfg: RunConfig, args, L: int) -> list[int]:
    if getattr(args, "all_x", False):
        return list(range(1, L))
    xs = [int(x) for x in cfg.x]
    for x in xs:
        if x % L == 0:
            raise ConfigError(f"offset x={x} is a multiple of L={L}")
    return xs


def _state_cfg(cfg: RunConfig, state) -> RunConfig:
    """Align geometry and statistics in ``cfg`` with a loaded state."""
    g = state.geometry
    cfg.geometry.L, cfg.geometry.d, cfg.geometry.max_occ = g.L, g.d, g.max_occ
    cfg.statistics = state.statistics.value
    return cfg


# --- subcommands -------------------------------------------------------------


def cmd_build(args) -> int:
    cfg = _config(args)
    state, budget = build_from_config(cfg)
    meta = {"config": cfg.to_dict(), "N": total_number(state), "defects": budget.D}
    path = write_state(state, _output(cfg, args, "state.json"), meta)
    print(f"wrote {path}  N={meta['N']:.6g}  basis terms={len(state.amplitudes)}")
    return EXIT_OK


def cmd_measure(args) -> int:
    cfg = _config(args)
    state = read_state(args.state)
    cfg = _state_cfg(cfg, state)
    record = simulate_record(state, cfg.wannier(), cfg.grid())
    if cfg.shots:
        record = sample_shots(record, cfg.shots, seed=cfg.seed)
    out = _output(cfg, args, "record.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    sidecar = record_to_csv(record, out)
    full = out.with_name(out.stem + "_full.json")
    record_to_json(record, full)
    print(f"wrote {out}, {sidecar} and {full}  ({len(record.grid)} momenta)")
    return EXIT_OK


def _table(reports) -> str:
    head = f"{'x':>3} {'|Q_x|':>10} {'lambda':>8} {'f_phi+':>8} {'f_phi-':>8} {'EoF lower':>10}  regimes"
    rows = [head, "-" * len(head)]
    for r in reports:
        fp = r.fidelities.get("phi+", float("nan"))
        fm = r.fidelities.get("phi-", float("nan"))
        rows.append(f"{r.x:>3} {abs(r.Q_x):>10.5f} {r.lambda_bound:>8.4f} {fp:>8.4f} {fm:>8.4f} "
                    f"{r.eof_lower:>10.5f}  {','.join(r.applicable) or '-'}")
    return "\n".join(rows)


def cmd_bound(args) -> int:
    cfg = _config(args)
    budget = DefectBudget(float(cfg.budget.epsilon), int(cfg.budget.r))
    if args.record:
        record = record_from_csv(args.record, d=cfg.geometry.d)
        L = record.L or cfg.geometry.L
        reports = [witness_report_from_record(record, x, cfg.regimes, budget, cfg.statistics)
                   for x in _xs(cfg, args, L)]
    else:
        state = read_state(args.state)
        cfg = _state_cfg(cfg, state)
        nominal = DefectBudget.certified(state, budget)
        reports = [witness_report(state, x, nominal, rotations=args.rotations)
                   for x in _xs(cfg, args, state.geometry.L)]
    path = _write_json(_output(cfg, args, "report.json"), [r.to_dict() for r in reports])
    print(_table(reports))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    state = read_state(args.state)
    cfg = _state_cfg(cfg, state)
    if state.geometry.L > ORACLE_MAX_SITES:
        raise ConfigError(f"oracle limited to L <= {ORACLE_MAX_SITES}")
    out = []
    failed = False
    for x in _xs(cfg, args, state.geometry.L):
        rab = delocalized_rho_ab(state, x)
        if len(rab.block.basis) > ORACLE_MAX_BLOCK:
            raise ConfigError(f"pair block dimension {len(rab.block.basis)} exceeds {ORACLE_MAX_BLOCK}")
        rep = witness_report(state, x, rotations=True)
        entry = {"x": x, "rho_ab": to_json_dict(rab), "report": rep.to_dict(), "verdicts": []}
        try:
            project_nonzero(rab)
            e = ssr_eof(rab, seed=cfg.seed)
            entry["ssr_eof"] = {"value": e.value, "lower": e.lower, "exact": e.exact,
                                "sectors": [{"n": s.n, "weight": s.weight, "value": s.value,
                                             "lower": s.lower, "method": s.method} for s in e.sectors]}
        except ValueError:
            e = None
        mat, leak = qubit_block(rab)
        if np.trace(mat).real > 1e-12 and abs(leak) < 1e-12:
            mat = mat / np.trace(mat).real
            entry["wootters_eof"] = wootters_eof(mat)
            entry["concurrence"] = concurrence(mat)
        for v in verification.check_state(state, "cli", [x], seed=cfg.seed):
            entry["verdicts"].append({"check": v.check, "bound": v.bound, "oracle": v.oracle,
                                      "certified": v.certified, "ok": v.ok})
            failed |= not v.ok
        out.append(entry)
        for v in entry["verdicts"]:
            print(f"x={x} {v['check']:<22} bound={v['bound']:.6f} oracle={v['oracle']:.6f} "
                  f"{'ok' if v['ok'] else 'VIOLATION'}{'' if v['certified'] else ' (upper estimate)'}")
    path = _write_json(_output(cfg, args, "oracle.json"), out)
    print(f"wrote {path}")
    if failed:
        raise ToleranceError("a bound exceeded its oracle value")
    return EXIT_OK


def cmd_dephase(args) -> int:
    cfg = _config(args)
    state = read_state(args.state)
    cfg = _state_cfg(cfg, state)
    L = state.geometry.L
    out = []
    for x in _xs(cfg, args, L):
        sched = make_schedule(L, x, cfg.schedule.random_times, cfg.schedule.M, seed=cfg.seed)
        single = q_internal_direct(state, x, False, args.channel)
        restricted = q_internal_direct(state, x, True, args.channel)
        averaged = dephased_q_internal(state, x, sched, args.channel)
        out.append({"x": x, "channel": args.channel, "schedule": sched.to_dict(),
                    "unrestricted": single, "restricted": restricted, "averaged": averaged,
                    "kernel_max": max(abs(sched.kernel(dl)) for dl in range(1, L))})
        print(f"x={x} M={sched.M} unrestricted={single:.6g} restricted={restricted:.6g} averaged={averaged:.6g}")
    path = _write_json(_output(cfg, args, "dephase.json"), out)
    print(f"wrote {path}")
    if not cfg.schedule.random_times:
        for row in out:
            if abs(row["averaged"] - row["restricted"]) > 1e-9:
                raise ToleranceError("schedule average does not reproduce the restricted sum")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.kind == "soundness":
        s = verification.soundness_sweep(args.trials, seed=cfg.seed)
        data = s.to_dict()
        bad = not s.ok
        print(f"{s.trials} states, {s.comparisons} comparisons, {len(s.violations)} violations, "
              f"{s.uncertified} against upper estimates ({s.seconds:.1f} s)")
    elif args.kind == "budgets":
        s = verification.defect_budget_sweep(args.trials, seed=cfg.seed)
        data = {"trials": s.trials, "failures": s.failures, "worst_ratio": s.worst}
        bad = not s.ok
        print(f"{s.trials} defect states, {len(s.failures)} budget failures, worst ratios {s.worst}")
    else:
        data = []
        for L in args.sizes:
            c = verification.ceiling_search(L, 1, restarts=args.restarts, seed=cfg.seed)
            data.append({"L": L, "best_found_eof": c.best_eof, "best_found_concurrence": c.best_concurrence,
                         "momentum": c.momentum, "pipeline_eof": c.pipeline_eof})
            print(f"L={L} best found EoF={c.best_eof:.6f} (C={c.best_concurrence:.6f})")
        bad = any(abs(r["best_found_eof"] - r["pipeline_eof"]) > 1e-9 for r in data)
    data = {k: v for k, v in data.items() if k != "seconds"} if isinstance(data, dict) else data
    path = _write_json(_output(cfg, args, f"sweep_{args.kind}.json"), data)
    print(f"wrote {path}")
    if bad:
        raise ToleranceError(f"{args.kind} sweep found failures")
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="YAML run configuration")
    p.add_argument("--out-dir", help=f"output directory (default ${OUTDIR_ENV} or .)")
    p.add_argument("-o", "--output", help="output file")
    p.add_argument("--seed", type=int)


def _xflags(p):
    p.add_argument("--x", type=int, nargs="+", help="pair offsets")
    p.add_argument("--all-x", action="store_true", help="use every offset 1..L-1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lattice-ent", description=__doc__.split("\n")[1])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a lattice state")
    _common(p)
    p.add_argument("--L", type=int)
    p.add_argument("--d", type=float)
    p.add_argument("--max-occ", type=int)
    p.add_argument("--statistics", choices=["boson", "fermion"])
    p.add_argument("--builder")
    p.add_argument("--param", action="append", help="builder parameter key=value")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--inject", action="store_true", help="inject random defects")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("measure", help="simulate time-of-flight densities and correlations")
    _common(p)
    p.add_argument("--state", required=True)
    p.add_argument("--envelope", choices=["ideal", "gaussian"])
    p.add_argument("--sigma", type=float)
    p.add_argument("--shots", type=int)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("bound", help="witnesses and entanglement lower bounds")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--state")
    src.add_argument("--record", help="CSV record (sidecar JSON picked up automatically)")
    _xflags(p)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--r", type=int)
    p.add_argument("--statistics", choices=["boson", "fermion"])
    p.add_argument("--d", type=float)
    p.add_argument("--regime", action="append",
                   choices=["occupation", "occupation_defects", "one_atom_fidelity", "general"],
                   help="declared regime for record input (repeatable)")
    p.add_argument("--rotations", action="store_true", help="add rotated fidelities (state input)")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("oracle", help="exact oracle values and bound verdicts")
    _common(p)
    p.add_argument("--state", required=True)
    _xflags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("dephase", help="quadratic-field dephasing of the internal witness")
    _common(p)
    p.add_argument("--state", required=True)
    _xflags(p)
    p.add_argument("--channel", default="ab", choices=["aa", "ab", "ba", "bb"])
    p.add_argument("--random-times", action="store_true")
    p.add_argument("--M", type=int)
    p.set_defaults(func=cmd_dephase)

    p = sub.add_parser("sweep", help="randomized verification sweeps")
    _common(p)
    p.add_argument("kind", choices=["soundness", "budgets", "ceiling"])
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--sizes", type=int, nargs="+", default=[4, 6, 8])
    p.add_argument("--restarts", type=int, default=2)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ToleranceError as exc:
        print(f"tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (ConfigError, GridError, NonPhysicalStateError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
