"""Command line entry point.

    fcmschwarz run <config> --study <name> --out <dir>
    fcmschwarz export-matrix <config> --out <dir>
    fcmschwarz verify

``FCMSCHWARZ_WORKERS`` sets the number of threads used for block inversion.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import STUDIES, ConfigError, load_config

log = logging.getLogger("fcmschwarz")


def _run(args):
    from .io import write_outputs, write_partition_report
    from .studies import run_study

    cfg = load_config(args.config)
    results = run_study(cfg, args.study)
    paths = write_outputs(results, cfg, args.study, args.out)
    if args.study == "partition_check":
        from .partition import make_partition, partition_report

        sc = results[-1].scenario
        part = make_partition(sc.dofmap, cfg.partition.n_ranks, cfg.partition.strategy)
        path = os.path.join(args.out, "partition.csv")
        write_partition_report(path, partition_report(part, sc.system.A))
        paths["partition"] = path
    for res in results:
        rep = res.report
        msg = f"{res.label}: "
        if rep is not None:
            msg += f"{rep.iterations} iterations ({rep.reason.value})"
        if "kappa" in res.extra:
            msg += f" kappa={res.extra['kappa']:.3e}"
        print(msg)
    for key, path in paths.items():
        log.info("wrote %s: %s", key, path)
    return 0


def _export(args):
    from .io import write_blocks, write_matrix, write_vector
    from .studies import blockset_for, make_preconditioner, prepare

    cfg = load_config(args.config)
    sc = prepare(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_matrix(os.path.join(args.out, "A.mtx"), sc.system.A)
    write_vector(os.path.join(args.out, "b.mtx"), sc.system.b)
    P = make_preconditioner(cfg, sc)
    write_matrix(os.path.join(args.out, "S.mtx"), P.S)
    if cfg.preconditioner.kind in ("full_blocks", "truncated_blocks"):
        write_blocks(os.path.join(args.out, "blocks.csv"), blockset_for(cfg.preconditioner.kind, sc.dofmap))
    print(f"n = {sc.dofmap.n}, nnz(A) = {sc.system.A.nnz}, nnz(S) = {P.S.nnz}")
    return 0


def _verify(args):
    from .verify import run_checks

    failures = 0
    for name, ok, detail in run_checks():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += not ok
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog="fcmschwarz", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run a named study")
    p.add_argument("config")
    p.add_argument("--study", required=True, choices=STUDIES)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_run)
    p = sub.add_parser("export-matrix", help="write A, b and S as Matrix Market")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_export)
    p = sub.add_parser("verify", help="run the invariant checks on built-in cases")
    p.set_defaults(func=_verify)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
