"""
Command-line front end.

    mixedwave COMMAND [--config FILE] [--out DIR] [overrides]

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical failure,
5 a reconstruction hit its iteration cap.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import config as cfgmod
from .csvio import write_csv
from .errors import InvalidArgument, NumericalFailure
from .grid import assemble, build_grid
from .inverse import (RESULT_HEADER, InverseSetup, make_rng, reconstruct, result_row,
                      synthesize_observation, write_profile, write_results)
from .observability import observability_sweep
from .presets import potential_from_name, source_from_name
from .solver import Forcing, boundary_trace, energy_history, integrate, make_time_grid
from .spectral import generalized_eigen, spectral_gap

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_NOT_CONVERGED = 0, 2, 3, 4, 5

log = logging.getLogger("mixedwave")

SWEEP_N = (9, 19, 39, 79, 159, 319)
TABLE_PRESETS = {
    # command: (potential, sources, default N list)
    "table1": ("smooth-sine", ("f-discontinuous", "g-smooth"), (9, 99, 999)),
    "table2": ("smooth-sine", ("f-discontinuous",), (99,)),
    "table3": ("discontinuous-step", ("f-discontinuous", "g-smooth"), (9, 99)),
    "time-sweep": ("smooth-sine", ("g-smooth",), (99,)),
}
TABLE2_DELTAS = (0.05, 0.10, 0.25)


class NotConverged(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _potential(cfg):
    return potential_from_name(cfg.potential, cfg.potential_value, cfg.potential_table)


def _single_n(cfg, default):
    if cfg.n is None:
        return default
    if len(cfg.n) != 1:
        raise InvalidArgument(f"command {cfg.command} takes a single N, got {len(cfg.n)}")
    return cfg.n[0]


def _intensity(cfg):
    c = cfg.intensity
    return lambda t: np.full(np.shape(t), c, dtype=float)


def _outdir(cfg):
    os.makedirs(cfg.out, exist_ok=True)
    return cfg.out


def _path(cfg, name):
    return os.path.join(cfg.out, name)


# ---------------------------------------------------------------------------
# forward / spectrum / observability / invert
# ---------------------------------------------------------------------------

def run_forward(cfg) -> int:
    N = _single_n(cfg, 99)
    ops = assemble(build_grid(N), _potential(cfg))
    tg = make_time_grid(cfg.t_final, cfg.dt or ops.h)
    if cfg.initial == "zero":
        W0 = W1 = np.zeros(N)
    elif cfg.initial == "mode":
        if not 1 <= cfg.initial_mode <= N:
            raise InvalidArgument(f"initial_mode must lie in 1..{N}")
        W0, W1 = generalized_eigen(ops).psi[:, cfg.initial_mode - 1], np.zeros(N)
    else:
        rng = make_rng(cfg.seed, "forward", N)
        W0, W1 = rng.standard_normal(N), rng.standard_normal(N)
        scale = np.sqrt(0.5 * (ops.s_form(W0) + ops.m_form(W1)))
        W0, W1 = W0 / scale, W1 / scale
    forcing = None
    if cfg.source != "none":
        from .inverse import discretize_source
        forcing = Forcing(discretize_source(source_from_name(cfg.source, cfg.source_table), ops),
                          _intensity(cfg))
    traj = integrate(ops, (W0, W1), forcing, tg)
    E = energy_history(ops, traj)
    # E(0) + int_0^t ||G||_M^2 by the trapezoid rule
    ref = np.full(E.shape, E[0])
    if forcing is not None:
        g2 = forcing.values(tg.times) ** 2 * float(ops.m_form(forcing.F))
        ref[1:] += np.cumsum(0.5 * tg.dt * (g2[1:] + g2[:-1]))
    _outdir(cfg)
    write_csv(_path(cfg, "forward_energy.csv"), ["t", "energy", "bound_reference"],
              np.column_stack([tg.times, E, ref]))
    boundary_trace(traj).to_csv(_path(cfg, "forward_trace.csv"))
    ratio = float(np.max(E / ref)) if np.all(ref > 0) else 0.0
    print(f"forward N={N} steps={tg.steps} max energy / bound_reference = {ratio:.6g}")
    return EXIT_OK


def run_spectrum(cfg) -> int:
    N = _single_n(cfg, 99)
    spec = generalized_eigen(assemble(build_grid(N), _potential(cfg)))
    _outdir(cfg)
    spec.to_csv(_path(cfg, "spectrum.csv"), with_gap=True)
    gap = spectral_gap(spec) if N > 1 else float("nan")
    print(f"spectrum N={N} min gap = {gap:.6g}")
    return EXIT_OK


def run_observability(cfg) -> int:
    Ns = cfg.n or SWEEP_N
    report = observability_sweep(_potential(cfg), Ns, cfg.t_final, strategy=cfg.strategy,
                                 trials=cfg.trials, seed=cfg.seed, first_term=cfg.first_term)
    _outdir(cfg)
    report.to_csv(_path(cfg, "observability.csv"), first_term=cfg.first_term)
    print(f"observability T={cfg.t_final} kappa0 = {report.kappa0:.6g} "
          f"max/min = {report.uniformity_ratio:.4g}  ({report.note})")
    return EXIT_OK


def _reconstruct_task(task):
    """One table row; pure function of its arguments."""
    (N, potential, source, T, dt, delta, seed, stream, fine_factor, gtol, intensity) = task
    ops = assemble(build_grid(N), potential_from_name(potential))
    c = intensity
    setup = InverseSetup(ops, T=T, dt=dt, intensity=lambda t: np.full(np.shape(t), c, dtype=float))
    src = source_from_name(source)
    rng = make_rng(seed, *stream)
    y = synthesize_observation(setup, src, delta=delta, seed=seed, fine_factor=fine_factor, rng=rng)
    res = reconstruct(setup, y, gtol=gtol, f_true=src)
    return result_row(res, setup, delta, source, potential), res.F, res.converged


def _run_tasks(tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_reconstruct_task, tasks))
    return [_reconstruct_task(t) for t in tasks]


def _task(cfg, N, potential, source, T, delta, stream):
    return (N, potential, source, T, cfg.dt, delta, cfg.seed, stream, cfg.fine_factor,
            cfg.gtol, cfg.intensity)


def run_invert(cfg) -> int:
    N = _single_n(cfg, 99)
    ops = assemble(build_grid(N), _potential(cfg))
    setup = InverseSetup(ops, T=cfg.t_final, dt=cfg.dt, intensity=_intensity(cfg))
    src = source_from_name(cfg.source, cfg.source_table)
    delta = cfg.delta[0]
    y = synthesize_observation(setup, src, delta=delta, seed=cfg.seed, fine_factor=cfg.fine_factor,
                               rng=make_rng(cfg.seed, "invert", N, delta))
    res = reconstruct(setup, y, gtol=cfg.gtol, f_true=src)
    row, F, ok = result_row(res, setup, delta, cfg.source, cfg.potential), res.F, res.converged
    _outdir(cfg)
    write_results(_path(cfg, "invert_result.csv"), [row])
    write_profile(_path(cfg, "invert_profile.csv"), F, ops)
    print(f"invert N={N} l2_error={row[5]:.6g} m_error={row[6]:.6g} iters={row[7]}")
    if not ok:
        raise NotConverged("reconstruction reached the iteration cap")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def run_table(cfg) -> int:
    potential, sources, default_n = TABLE_PRESETS[cfg.command]
    Ns = cfg.n or default_n
    name = cfg.command.replace("-", "_")
    tasks, keys = [], []
    if cfg.command == "table2":
        deltas = TABLE2_DELTAS if cfg.delta == cfgmod.RunConfig().delta else cfg.delta
        for N in Ns:
            for d in deltas:
                for rep in range(cfg.seeds):
                    tasks.append(_task(cfg, N, potential, sources[0], cfg.t_final, d,
                                       (name, N, d, rep)))
                    keys.append(rep)
    elif cfg.command == "time-sweep":
        for N in Ns:
            for T in cfg.t_list:
                tasks.append(_task(cfg, N, potential, sources[0], T, cfg.delta[0],
                                   (name, N, cfg.delta[0])))
                keys.append((N, T))
    else:
        for src in sources:
            for N in Ns:
                tasks.append(_task(cfg, N, potential, src, cfg.t_final, cfg.delta[0],
                                   (name, N, src, cfg.delta[0])))
                keys.append(None)

    results = _run_tasks(tasks, cfg.jobs)
    _outdir(cfg)
    rows = [r[0] for r in results]
    if cfg.command == "table2":
        write_csv(_path(cfg, "table2_runs.csv"), RESULT_HEADER + ["rep"],
                  [row + [rep] for row, rep in zip(rows, keys)])
        summary = []
        for N in Ns:
            h = 1.0 / (N + 1)
            for d in sorted({row[2] for row in rows}):
                grp = [row for row in rows if row[2] == d and row[0] == h]
                err = np.array([row[5] for row in grp])
                summary.append([h, cfg.t_final, d, sources[0], potential, float(err.mean()),
                                float(err.std()), float(np.mean([row[6] for row in grp])), len(grp)])
        write_csv(_path(cfg, "table2.csv"), ["h", "T", "delta", "source", "potential", "l2_error",
                                             "l2_error_std", "m_error", "seeds"], summary)
        shown = summary
    else:
        write_results(_path(cfg, f"{name}.csv"), rows)
        shown = rows
        if cfg.command == "time-sweep":
            for (N, T), res in zip(keys, results):
                ops = assemble(build_grid(N), potential_from_name(potential))
                write_profile(_path(cfg, f"profile_N{N}_T{T:g}.csv"), res[1], ops)
    for row in shown:
        print(f"h={row[0]:.4g} T={row[1]:g} delta={row[2]:g} {row[3]} {row[4]}: l2_error={row[5]:.4g}")
    if not all(r[2] for r in results):
        raise NotConverged("at least one reconstruction reached the iteration cap")
    return EXIT_OK


RUNNERS = {
    "forward": run_forward,
    "spectrum": run_spectrum,
    "observability": run_observability,
    "invert": run_invert,
    "table1": run_table,
    "table2": run_table,
    "table3": run_table,
    "time-sweep": run_table,
}


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(f"  {k:16s}{v}" for k, v in cfgmod.KEY_HELP.items())
    p = argparse.ArgumentParser(
        prog="mixedwave",
        description="Mixed finite element wave solver, observability sweeps and source reconstruction.",
        epilog="configuration file keys (key = value):\n" + keys,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("command", choices=cfgmod.COMMANDS)
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--seed", metavar="U64", help="base seed")
    p.add_argument("--n", metavar="N[,N...]", help="interior node count(s)")
    p.add_argument("--t-final", metavar="T", help="observation time")
    p.add_argument("--dt", metavar="DT", help="time step or 'auto'")
    p.add_argument("--delta", metavar="D[,D...]", help="noise level(s)")
    p.add_argument("--fine-factor", metavar="K", help="data mesh refinement factor (>= 4)")
    p.add_argument("--potential", help="potential selector")
    p.add_argument("--source", help="source selector")
    p.add_argument("--strategy", help="observability search strategy")
    p.add_argument("--first-term", action="store_true", help="report the first-term-only quotient")
    p.add_argument("--jobs", metavar="J", help="worker processes for table rows")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override any configuration key")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> cfgmod.RunConfig:
    base = cfgmod.RunConfig(command=args.command)
    if args.config:
        base = cfgmod.load(args.config, base)
        base = base.replace(command=args.command)
    items = []
    for flag, key in (("out", "out"), ("seed", "seed"), ("n", "n"), ("t_final", "t_final"),
                      ("dt", "dt"), ("delta", "delta"), ("fine_factor", "fine_factor"),
                      ("potential", "potential"), ("source", "source"),
                      ("strategy", "strategy"), ("jobs", "jobs")):
        value = getattr(args, flag)
        if value is not None:
            items.append((key, value))
    if args.first_term:
        items.append(("first_term", "true"))
    for kv in args.set:
        if "=" not in kv:
            raise InvalidArgument(f"--set expects KEY=VALUE, got {kv!r}")
        k, v = kv.split("=", 1)
        items.append((k.strip(), v.strip()))
    return cfgmod.parse_items(items, base)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        return RUNNERS[cfg.command](cfg)
    except InvalidArgument as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NotConverged as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        where = exc.filename or getattr(args, "out", None) or ""
        print(f"I/O error: {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
