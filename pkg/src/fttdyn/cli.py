"""Command-line driver: ``decompose``, ``solve`` and ``compare``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort, 4 I/O or
file-compatibility error. Failures print one ``error kind=... msg=...`` line
on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import io as fio
from .config import ConfigError, RunConfig, build_initial_pdf, dump_config, load_config
from .diagnostics import (
    DiagnosticsRecord,
    MemorySink,
    l2_error,
    marginal_2d,
    tangent_residual,
    total_mass,
    write_csv,
    write_matrix_csv,
)
from .dynamics import SolverConfig, solve_dofft
from .errors import FormatError, FttError, ParameterError, SolverAbort
from .ftt import ftt_decompose
from .operators import build_fp_operator
from .reference import solve_full

log = logging.getLogger("fttdyn")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
SNAPSHOT_RE = re.compile(r"^snapshot_(\d+)\.(ftt|ful)$")


class CompatibilityError(FttError):
    pass


def _prepare_output(cfg: RunConfig) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "resolved_config.txt"), "w", newline="\n") as fh:
        fh.write(dump_config(cfg))
    return cfg.output_dir


def rank_report(ranks) -> str:
    return "r=" + ",".join(str(r) for r in ranks)


def solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        dt=cfg.dt,
        t_final=cfg.t_final,
        eps=cfg.effective_eps(),
        rcond_cap=cfg.rcond_cap,
        reorthonormalize_every=cfg.reorthonormalize_every,
        energy_check_every=cfg.energy_check_every,
        residual_every=cfg.residual_every,
        snapshot_times=cfg.effective_snapshot_times(),
    )


def decompose_initial(cfg: RunConfig):
    grids = cfg.grids()
    p0 = build_initial_pdf(cfg, grids)
    t, spectrum = ftt_decompose(p0, grids, cfg.effective_eps(grids))
    return p0, t, spectrum


def cmd_decompose(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    p0, t, _ = decompose_initial(cfg)
    fio.write_full(os.path.join(out, "initial.ful"), p0)
    fio.write_ftt(os.path.join(out, "initial.ftt"), t)
    line = rank_report(t.ranks)
    with open(os.path.join(out, "ranks.txt"), "w", newline="\n") as fh:
        fh.write(line + "\n")
    print(line)
    return EXIT_OK


class _FileSink(MemorySink):
    """Collects records and writes snapshots to disk as they arrive."""

    def __init__(self, out, ext, op=None, rcond_cap=None):
        super().__init__()
        self.out = out
        self.ext = ext
        self.op = op
        self.rcond_cap = rcond_cap

    def snapshot(self, step, t, state):
        path = os.path.join(self.out, f"snapshot_{step:07d}.{self.ext}")
        if self.ext == "ftt":
            fio.write_ftt(path, state)
            last = self.records[-1]
            if last.step == step and last.tangent_residual is None and self.op is not None:
                self.records[-1] = replace(last, tangent_residual=tangent_residual(state, self.op, self.rcond_cap))
        else:
            fio.write_full(path, state)


def cmd_solve(cfg: RunConfig, method: str) -> int:
    out = _prepare_output(cfg)
    grids = cfg.grids()
    op = build_fp_operator(grids, cfg.alpha, cfg.beta, cfg.kappa)
    scfg = solver_config(cfg)
    if method == "full":
        p0 = build_initial_pdf(cfg, grids)
        fio.write_full(os.path.join(out, "initial.ful"), p0)
        sink = _FileSink(out, "ful")
        solve_full(p0, grids, op, scfg, sink)
    else:
        _, t0, _ = decompose_initial(cfg)
        fio.write_ftt(os.path.join(out, "initial.ftt"), t0)
        sink = _FileSink(out, "ftt", op, cfg.rcond_cap)
        solve_dofft(t0, op, scfg, sink)
    write_csv(os.path.join(out, "diagnostics.csv"), sink.records, grids.d)
    return EXIT_OK


def list_snapshots(run_dir) -> dict:
    """Map step index -> snapshot path for a run directory."""
    try:
        names = sorted(os.listdir(run_dir))
    except OSError as exc:
        raise FormatError(f"{run_dir}: {exc.strerror}") from exc
    found = {}
    for name in names:
        m = SNAPSHOT_RE.match(name)
        if m:
            found[int(m.group(1))] = os.path.join(run_dir, name)
    if not found:
        raise FormatError(f"{run_dir}: no snapshot files")
    return found


def load_snapshot(path, grids):
    if path.endswith(".ftt"):
        t = fio.read_ftt(path)
        if not t.grids.same_as(grids):
            raise CompatibilityError(f"{path}: grid does not match configuration")
        return t.evaluate(), t.ranks
    u = fio.read_full(path)
    if u.shape != grids.shape:
        raise CompatibilityError(f"{path}: shape {u.shape} does not match grid {grids.shape}")
    ranks = tuple(
        min(int(np.prod(u.shape[:k])), int(np.prod(u.shape[k:]))) for k in range(u.ndim + 1)
    )
    return u, ranks


def cmd_compare(cfg: RunConfig, run_a: str, run_b: str) -> int:
    out = _prepare_output(cfg)
    grids = cfg.grids()
    snaps_a = list_snapshots(run_a)
    snaps_b = list_snapshots(run_b)
    common = sorted(set(snaps_a) & set(snaps_b))
    if not common:
        raise CompatibilityError(f"{run_a} and {run_b} share no snapshot steps")
    records = []
    for step in common:
        ua, ranks = load_snapshot(snaps_a[step], grids)
        ub, _ = load_snapshot(snaps_b[step], grids)
        records.append(
            DiagnosticsRecord(
                step=step,
                t=step * cfg.dt,
                ranks=ranks,
                mass=total_mass(ua, grids),
                l2_error=l2_error(ua, ub, grids),
            )
        )
        ma = marginal_2d(ua, grids, (0, 1))
        mb = marginal_2d(ub, grids, (0, 1))
        write_matrix_csv(os.path.join(out, f"marginal_a_{step:07d}.csv"), ma)
        write_matrix_csv(os.path.join(out, f"marginal_b_{step:07d}.csv"), mb)
        write_matrix_csv(os.path.join(out, f"marginal_diff_{step:07d}.csv"), ma - mb)
    write_csv(os.path.join(out, "errors.csv"), records, grids.d)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value configuration file")
    common.add_argument("--eps", type=float)
    common.add_argument("--dt", type=float)
    common.add_argument("--t-final", dest="t_final", type=float)
    common.add_argument("--output-dir", dest="output_dir")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fttdyn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("decompose", parents=[common], help="decompose the initial PDF")
    solve = sub.add_parser("solve", parents=[common], help="run a solver")
    solve.add_argument("--method", choices=("ftt", "full"), default="ftt")
    compare = sub.add_parser("compare", parents=[common], help="compare two runs")
    compare.add_argument("run_a")
    compare.add_argument("run_b")
    return parser


def _fail(kind, code, msg):
    msg = str(msg).replace("\n", " ").replace('"', "'")
    print(f'error kind={kind} code={code} msg="{msg}"', file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {k: getattr(args, k) for k in ("eps", "dt", "t_final", "output_dir")}
        cfg = load_config(args.config, overrides)
        if args.command == "decompose":
            return cmd_decompose(cfg)
        if args.command == "solve":
            return cmd_solve(cfg, args.method)
        return cmd_compare(cfg, args.run_a, args.run_b)
    except (ConfigError, ParameterError) as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except CompatibilityError as exc:
        return _fail("compat", EXIT_IO, exc)
    except (FormatError, OSError) as exc:
        return _fail("io", EXIT_IO, exc)
    except SolverAbort as exc:
        return _fail("numerical", EXIT_NUMERICAL, exc)
    except FttError as exc:
        return _fail("numerical", EXIT_NUMERICAL, exc)


if __name__ == "__main__":
    sys.exit(main())
