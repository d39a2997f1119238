"""Command line interface.

Every subcommand prints one machine-readable JSON report to stdout and uses
a stable exit-code contract:

    0  verdict computed / scaling converged / all checks passed
    2  I/O, validation or precondition errors
    3  scaling diverged (no-support-numerical)
    4  scaling hit the iteration cap (max-iter-inconclusive)
    5  certificate verification failed

Batch mode (``--batch``) treats the input path as a directory of ``*.json``
jobs, processes them on a bounded worker pool, writes one report per job
atomically, and never lets one failing job abort the rest.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import glob
import json
import os
import sys

import numpy as np

from . import __version__, fixtures
from .fnf import (BipartiteState, FnfPreconditionFailed, ScalingInconclusive,
                  check_preconditions, compute_fnf, sufficient_conditions,
                  verify_fnf)
from .io import (ValidationError, atomic_write_json, load_json, map_to_obj,
                 matrix_to_obj, obj_to_matrix, parse_map, parse_pattern_matrix,
                 parse_state, state_to_obj)
from .matcomb import (NonnegPattern, SizeGuardError, has_support,
                      has_support_bruteforce, has_total_support,
                      has_total_support_bruteforce)
from .numkernel import (NotPositiveDefinite, NumericalFailure, Tolerances,
                        frob, kron, realign, unrealign)
from .posmap import (BlockCertificate, ChoiMap, is_doubly_stochastic,
                     pattern_matrix, verify_block_certificate)
from .scaling import (VERDICT_CONVERGED, VERDICT_INCONCLUSIVE,
                      VERDICT_NO_SUPPORT, VERDICT_PRECONDITION,
                      block_commutation_check, run)

_VERDICT_EXIT = {
    VERDICT_CONVERGED: 0,
    VERDICT_NO_SUPPORT: 3,
    VERDICT_INCONCLUSIVE: 4,
    VERDICT_PRECONDITION: 2,
}


def _resolve_seed(args) -> int:
    env = os.environ.get("OPSCALE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ValidationError(f"OPSCALE_SEED must be an integer: {env!r}") from exc
    return int(args.seed)


def _tolerances(args) -> Tolerances:
    return Tolerances(rank_rel=args.rank_rel, pd_min=args.pd_min, conv_eps=args.tol)


def _envelope(seed: int, tol: Tolerances) -> dict:
    return {
        "version": __version__,
        "seed": seed,
        "tolerances": {"rank_rel": tol.rank_rel, "pd_min": tol.pd_min,
                       "conv_eps": tol.conv_eps},
    }


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2)
    sys.stdout.write("\n")


def _witness_obj(witness, entry=None):
    if witness is None:
        return None
    obj = {"alpha": list(witness.alpha), "beta": list(witness.beta),
           "weight": witness.weight, "tight_violation": witness.tight_violation}
    if entry is not None:
        obj["entry"] = list(entry)
    return obj


def _add_common(sub, batch: bool = False):
    sub.add_argument("--seed", type=int, default=42,
                     help="seed for randomized checks (env OPSCALE_SEED overrides)")
    sub.add_argument("--tol", type=float, default=Tolerances().conv_eps,
                     help="convergence threshold for marginal residuals")
    sub.add_argument("--rank-rel", type=float, default=Tolerances().rank_rel,
                     help="relative eigenvalue cutoff for rank decisions")
    sub.add_argument("--pd-min", type=float, default=Tolerances().pd_min,
                     help="relative positive-definiteness floor")
    if batch:
        sub.add_argument("--batch", action="store_true",
                         help="treat the input path as a directory of *.json jobs")
        sub.add_argument("--jobs", type=int, default=4,
                         help="worker pool size for batch mode")
        sub.add_argument("--out", default=None,
                         help="output directory (batch) or output prefix (fnf)")


# ---------------------------------------------------------------- support

def _support_job(path: str, args, seed: int, tol: Tolerances) -> tuple[dict, int]:
    A = parse_pattern_matrix(load_json(path))
    pattern = NonnegPattern(A, zero_eps=args.zero_eps)
    report = _envelope(seed, tol)
    report.update({"input": path, "k": pattern.k, "m": pattern.m,
                   "zero_eps": pattern.zero_eps})
    sup = has_support(pattern)
    report["support"] = sup.has_support
    report["witness"] = _witness_obj(sup.witness)
    if args.total:
        tot = has_total_support(pattern)
        report["total_support"] = tot.has_total_support
        report["total_witness"] = _witness_obj(tot.witness, tot.failing_entry)
    if args.oracle:
        try:
            oracle = {"support": has_support_bruteforce(pattern)}
            if args.total:
                oracle["total_support"] = has_total_support_bruteforce(pattern)
            oracle["agrees"] = (oracle["support"] == sup.has_support
                                and oracle.get("total_support", None)
                                in (None, report.get("total_support")))
            report["oracle"] = oracle
        except SizeGuardError as exc:
            raise ValidationError(str(exc)) from exc
    return report, 0


def cmd_support(args) -> int:
    seed = _resolve_seed(args)
    tol = _tolerances(args)
    if args.batch:
        return _run_batch(args, seed, tol, _support_job)
    report, code = _support_job(args.path, args, seed, tol)
    _emit(report)
    return code


# ------------------------------------------------------------------ scale

def _scaling_obj(report) -> dict:
    obj = {
        "verdict": report.verdict,
        "iterations": report.iterations,
        "in_residual": report.in_residual,
        "out_residual": report.out_residual,
        "logdet": report.logdet,
        "failure_reason": report.failure_reason,
    }
    if report.in_filter is not None:
        obj["input_filter"] = matrix_to_obj(report.in_filter)
        obj["output_filter"] = matrix_to_obj(report.out_filter)
    return obj


def _scale_job(path: str, args, seed: int, tol: Tolerances,
               history_path: str | None = None) -> tuple[dict, int]:
    T = parse_map(load_json(path), rng=np.random.default_rng(seed))
    result = run(T, tol, max_iter=args.max_iter,
                 divergence_logdet=args.divergence)
    report = _envelope(seed, tol)
    report.update({"input": path, "k": T.k, "m": T.m})
    report.update(_scaling_obj(result))
    if result.converged:
        check = is_doubly_stochastic(result.ds_map, 10.0 * tol.conv_eps)
        report["ds_check"] = {
            "is_doubly_stochastic": check.is_doubly_stochastic,
            "forward_defect": check.forward_defect,
            "adjoint_defect": check.adjoint_defect,
        }
    if history_path:
        atomic_write_json(history_path, {
            "input": path,
            "history": [{"n": rec.n, "in_residual": rec.in_residual,
                         "out_residual": rec.out_residual, "logdet": rec.logdet}
                        for rec in result.history],
        })
        report["history_file"] = history_path
    return report, _VERDICT_EXIT[result.verdict]


def cmd_scale(args) -> int:
    seed = _resolve_seed(args)
    tol = _tolerances(args)
    if args.batch:
        def job(path, args, seed, tol):
            hist = None
            if args.history:
                hist = os.path.join(_batch_outdir(args),
                                    _stem(path) + ".history.json")
            return _scale_job(path, args, seed, tol, history_path=hist)
        return _run_batch(args, seed, tol, job)
    report, code = _scale_job(args.path, args, seed, tol,
                              history_path=args.history)
    _emit(report)
    return code


# -------------------------------------------------------------------- fnf

def _precondition_obj(pre) -> dict:
    return {
        "first_factor": {"is_pd": pre.first_factor.is_pd,
                         "min_eigenvalue": pre.first_factor.min_eigenvalue,
                         "max_eigenvalue": pre.first_factor.max_eigenvalue},
        "second_factor": {"is_pd": pre.second_factor.is_pd,
                          "min_eigenvalue": pre.second_factor.min_eigenvalue,
                          "max_eigenvalue": pre.second_factor.max_eigenvalue},
        "ok": pre.ok,
    }


def _sufficient_obj(suff, actual_verdict: str | None) -> dict:
    verdict = suff.coprime_scaling_verdict
    if suff.coprime and actual_verdict is not None:
        verdict = actual_verdict
    guaranteed = (suff.rect_kernel or suff.square_kernel or suff.ratio_kernel
                  or (suff.coprime and verdict == VERDICT_CONVERGED))
    return {
        "kernel_dim": suff.kernel_dim,
        "marginals_pd": suff.marginals_pd,
        "rect_kernel": suff.rect_kernel,
        "square_kernel": suff.square_kernel,
        "ratio_kernel": suff.ratio_kernel,
        "coprime": suff.coprime,
        "coprime_scaling_verdict": verdict,
        "guaranteed": guaranteed,
    }


def _verification_obj(ver) -> dict:
    def check(c):
        return {"passed": c.passed, "defect": c.defect, "limit": c.limit}
    obj = {
        "leading_pair": check(ver.leading_pair),
        "coefficients": check(ver.coefficients),
        "orthonormal_first": check(ver.orthonormal_first),
        "orthonormal_second": check(ver.orthonormal_second),
        "reconstruction": check(ver.reconstruction),
        "marginals": check(ver.marginals),
        "filters_invertible": check(ver.filters_invertible),
        "passed": ver.passed,
    }
    if ver.filtered_state is not None:
        obj["filtered_state"] = check(ver.filtered_state)
    return obj


def _fnf_job(path: str, args, seed: int, tol: Tolerances,
             out_prefix: str | None = None) -> tuple[dict, int]:
    state = parse_state(load_json(path))
    prefix = out_prefix if out_prefix is not None else os.path.splitext(path)[0]
    report = _envelope(seed, tol)
    report.update({"input": path, "k": state.k, "m": state.m})
    report["preconditions"] = _precondition_obj(check_preconditions(state, tol))
    suff = sufficient_conditions(state, tol, run_coprime_scaling=False)

    try:
        result = compute_fnf(state, tol, max_iter=args.max_iter,
                             divergence_logdet=args.divergence)
    except FnfPreconditionFailed as exc:
        report["sufficient_conditions"] = _sufficient_obj(suff, None)
        report["outcome"] = VERDICT_PRECONDITION
        report["error"] = str(exc)
        atomic_write_json(prefix + ".report.json", report)
        return report, 2
    except ScalingInconclusive as exc:
        report["sufficient_conditions"] = _sufficient_obj(suff, exc.report.verdict)
        report["scaling"] = _scaling_obj(exc.report)
        report["outcome"] = exc.report.verdict
        atomic_write_json(prefix + ".report.json", report)
        return report, _VERDICT_EXIT[exc.report.verdict]

    verification = verify_fnf(result, tol, original=state)
    report["sufficient_conditions"] = _sufficient_obj(
        suff, result.scaling_report.verdict)
    report["scaling"] = _scaling_obj(result.scaling_report)
    report["verification"] = _verification_obj(verification)
    report["outcome"] = "fnf-computed"
    report["schmidt_rank"] = len(result.schmidt)
    report["coefficients"] = [t.coeff for t in result.schmidt]

    atomic_write_json(prefix + ".filters.json", {
        "k": state.k, "m": state.m,
        "filter_first": matrix_to_obj(result.filter_first),
        "filter_second": matrix_to_obj(result.filter_second),
    })
    atomic_write_json(prefix + ".state.json", state_to_obj(result.state_fnf))
    atomic_write_json(prefix + ".schmidt.json", {
        "k": state.k, "m": state.m,
        "coefficients": [t.coeff for t in result.schmidt],
        "first_factors": [matrix_to_obj(t.first) for t in result.schmidt],
        "second_factors": [matrix_to_obj(t.second) for t in result.schmidt],
    })
    atomic_write_json(prefix + ".report.json", report)
    report["files"] = [prefix + suffix for suffix in
                       (".filters.json", ".state.json", ".schmidt.json", ".report.json")]
    return report, 0 if verification.passed else 2


def cmd_fnf(args) -> int:
    seed = _resolve_seed(args)
    tol = _tolerances(args)
    if args.batch:
        def job(path, args, seed, tol):
            prefix = os.path.join(_batch_outdir(args), _stem(path))
            return _fnf_job(path, args, seed, tol, out_prefix=prefix)
        return _run_batch(args, seed, tol, job)
    report, code = _fnf_job(args.path, args, seed, tol, out_prefix=args.out)
    _emit(report)
    return code


# ------------------------------------------------------------------ tilde

def cmd_tilde(args) -> int:
    seed = _resolve_seed(args)
    tol = _tolerances(args)
    T = parse_map(load_json(args.path), rng=np.random.default_rng(seed))
    lifted = T.tilde_lift()
    out = args.out or os.path.splitext(args.path)[0] + ".tilde.json"
    atomic_write_json(out, map_to_obj(lifted))
    report = _envelope(seed, tol)
    report.update({"input": args.path, "output": out,
                   "k": T.k, "m": T.m,
                   "lifted_k": lifted.k, "lifted_m": lifted.m})
    code = 0
    if args.check:
        ra = run(T, tol, max_iter=args.max_iter, divergence_logdet=args.divergence)
        rb = run(lifted, tol, max_iter=args.max_iter)
        report["check"] = {
            "original_verdict": ra.verdict,
            "lifted_verdict": rb.verdict,
            "category_match": ra.verdict == rb.verdict,
        }
    _emit(report)
    return code


# ------------------------------------------------------------ certificate

def _parse_certificate(obj) -> BlockCertificate:
    if not isinstance(obj, dict):
        raise ValidationError("certificate must be a JSON object")
    for field in ("input_projectors", "output_projectors"):
        if field not in obj or not isinstance(obj[field], list) or not obj[field]:
            raise ValidationError(f'certificate needs a nonempty "{field}" list')
    try:
        return BlockCertificate(
            tuple(obj_to_matrix(o) for o in obj["input_projectors"]),
            tuple(obj_to_matrix(o) for o in obj["output_projectors"]))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def cmd_certificate(args) -> int:
    seed = _resolve_seed(args)
    tol = _tolerances(args)
    rng = np.random.default_rng(seed)
    T = parse_map(load_json(args.map), rng=rng)
    cert = _parse_certificate(load_json(args.cert))
    try:
        result = verify_block_certificate(T, cert, tol=tol, rng=rng)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    report = _envelope(seed, tol)

    def cond(c):
        return {"passed": c.passed, "sampled": c.sampled, "detail": c.detail,
                "worst_defect": c.worst_defect}

    report.update({
        "map": args.map, "certificate": args.cert,
        "decomposition": cond(result.decomposition),
        "invariance": cond(result.invariance),
        "strict_rank_increase": cond(result.strict_rank_increase),
        "rank_ratio": cond(result.rank_ratio),
        "passed": result.passed,
    })
    passed = result.passed
    if args.commutation_steps > 0:
        comm = block_commutation_check(T, cert, n_steps=args.commutation_steps,
                                       tol=tol)
        report["commutation"] = {
            "passed": comm.passed,
            "precondition_ok": comm.precondition_ok,
            "steps_run": comm.steps_run,
            "first_failure": list(comm.first_failure) if comm.first_failure else None,
        }
        passed = passed and comm.passed
    _emit(report)
    return 0 if passed else 5


# --------------------------------------------------------------- selftest

def _selftest_checks(seed: int, tol: Tolerances):
    rng = np.random.default_rng(seed)

    def check_realign_round_trip():
        M = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        return np.array_equal(unrealign(realign(M, 2, 3), 2, 3), M)

    def check_boundary_pattern():
        pat = NonnegPattern(np.array([[0.0, 1.0], [1.0, 1.0]]))
        return (has_support(pat).has_support
                and not has_total_support(pat).has_total_support
                and has_support_bruteforce(pat)
                and not has_total_support_bruteforce(pat))

    def check_boundary_scaling():
        rep = run(fixtures.boundary_map(), Tolerances(conv_eps=1e-8), max_iter=5000)
        return rep.converged and is_doubly_stochastic(rep.ds_map, 1e-7).is_doubly_stochastic

    def check_no_support_divergence():
        rep = run(fixtures.no_support_map(), tol, max_iter=10000)
        return rep.verdict == VERDICT_NO_SUPPORT

    def check_ds_fixed_point():
        rep = run(fixtures.trace_ds_map(2, 3), tol)
        return rep.converged and rep.iterations <= 1

    def check_fnf_maximally_mixed():
        state = BipartiteState(2, 2, fixtures.maximally_mixed_state(2, 2))
        result = compute_fnf(state, tol)
        return (len(result.schmidt) == 1
                and abs(result.schmidt[0].coeff - 0.5) < 1e-12)

    def check_fnf_max_entangled():
        state = BipartiteState(2, 2, fixtures.max_entangled_state(2))
        result = compute_fnf(state, tol)
        coeffs = [t.coeff for t in result.schmidt]
        return (len(coeffs) == 4
                and max(abs(c - 0.5) for c in coeffs) < 1e-9
                and verify_fnf(result, tol, original=state).passed)

    def check_tilde_identity():
        T = fixtures.random_cp_map(2, 3, rng)
        lifted = T.tilde_lift()
        lhs = lifted.apply(np.eye(6, dtype=complex))
        rhs = kron(T.apply(3.0 * np.eye(2, dtype=complex)), np.eye(2))
        return frob(lhs - rhs) < 1e-10

    def check_canonical_pattern():
        pat = pattern_matrix(fixtures.boundary_map(), np.eye(2, dtype=complex),
                             np.eye(2, dtype=complex))
        mask = pat.nonzero_mask()
        return (not mask[0, 0]) and mask[0, 1] and mask[1, 0] and mask[1, 1]

    return [
        ("realign round trip", check_realign_round_trip),
        ("boundary pattern support/total verdicts", check_boundary_pattern),
        ("boundary map scaling converges to doubly stochastic", check_boundary_scaling),
        ("no-support fixture diverges", check_no_support_divergence),
        ("doubly stochastic input is a fixed point", check_ds_fixed_point),
        ("maximally mixed state has a single factor", check_fnf_maximally_mixed),
        ("maximally entangled state has four equal factors", check_fnf_max_entangled),
        ("square lift evaluation identity", check_tilde_identity),
        ("canonical pattern of the boundary map", check_canonical_pattern),
    ]


def cmd_selftest(args) -> int:
    seed = _resolve_seed(args)
    tol = _tolerances(args)
    failures = 0
    for name, fn in _selftest_checks(seed, tol):
        try:
            ok = bool(fn())
        except Exception as exc:  # a selftest must never abort the battery
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        print(f"[{'ok' if ok else 'FAIL'}] {name}")
        if not ok:
            failures += 1
    print(f"{failures} failure(s)")
    return 0 if failures == 0 else 1


# ------------------------------------------------------------------ batch

def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def _batch_outdir(args) -> str:
    out = args.out if args.out else args.path
    os.makedirs(out, exist_ok=True)
    return out


def _run_batch(args, seed: int, tol: Tolerances, job) -> int:
    if not os.path.isdir(args.path):
        raise ValidationError(f"--batch expects a directory, got {args.path!r}")
    inputs = sorted(p for p in glob.glob(os.path.join(args.path, "*.json"))
                    if not p.endswith((".report.json", ".history.json",
                                       ".filters.json", ".state.json",
                                       ".schmidt.json", ".tilde.json")))
    if not inputs:
        raise ValidationError(f"no *.json inputs found in {args.path!r}")
    outdir = _batch_outdir(args)

    def safe(path):
        try:
            report, code = job(path, args, seed, tol)
        except (ValidationError, NotPositiveDefinite, NumericalFailure) as exc:
            report, code = {"input": path, "error": str(exc)}, 2
        except Exception as exc:  # defensive: one job must not kill the batch
            report, code = {"input": path,
                            "error": f"{type(exc).__name__}: {exc}"}, 2
        report_path = os.path.join(outdir, _stem(path) + ".report.json")
        atomic_write_json(report_path, report)
        return {"input": path, "exit_code": code, "report": report_path,
                "error": report.get("error")}

    workers = max(1, int(args.jobs))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(safe, inputs))
    summary = _envelope(seed, tol)
    summary.update({
        "batch_dir": args.path,
        "jobs": len(rows),
        "failed": sum(1 for r in rows if r["exit_code"] != 0),
        "results": rows,
    })
    _emit(summary)
    return 0


# ------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opscale",
        description="Support certificates, operator Sinkhorn scaling and "
                    "filter normal forms for positive maps and bipartite states.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("support", help="decide support / total support of a "
                                       "nonnegative matrix file")
    p.add_argument("path", help="matrix file (or directory with --batch)")
    p.add_argument("--total", action="store_true", help="also decide total support")
    p.add_argument("--oracle", action="store_true",
                   help="cross-check with the exhaustive oracle (small sizes)")
    p.add_argument("--zero-eps", type=float, default=0.0,
                   help="entries at or below this count as structural zeros")
    _add_common(p, batch=True)
    p.set_defaults(func=cmd_support)

    p = sub.add_parser("scale", help="run the scaling loop on a map file")
    p.add_argument("path", help="map file (or directory with --batch)")
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--divergence", type=float, default=None,
                   help="log-determinant divergence threshold (default 50*k*m)")
    p.add_argument("--history", default=None,
                   help="write per-iteration residual history to this file")
    _add_common(p, batch=True)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("fnf", help="compute the filter normal form of a state file")
    p.add_argument("path", help="state file (or directory with --batch)")
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--divergence", type=float, default=None)
    _add_common(p, batch=True)
    p.set_defaults(func=cmd_fnf)

    p = sub.add_parser("tilde", help="write the square lift of a map")
    p.add_argument("path", help="map file")
    p.add_argument("--out", default=None, help="output map file")
    p.add_argument("--check", action="store_true",
                   help="also scale the map and its lift and compare verdicts")
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--divergence", type=float, default=None)
    _add_common(p)
    p.set_defaults(func=cmd_tilde)

    p = sub.add_parser("certificate", help="verify a block certificate against a map")
    p.add_argument("map", help="map file")
    p.add_argument("cert", help="certificate file")
    p.add_argument("--commutation-steps", type=int, default=0,
                   help="also run this many scaling steps checking projector "
                        "commutation")
    _add_common(p)
    p.set_defaults(func=cmd_certificate)

    p = sub.add_parser("selftest", help="run the built-in fixture battery")
    _add_common(p)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        _emit({"version": __version__, "error": str(exc)})
        return 2
    except (NotPositiveDefinite, NumericalFailure) as exc:
        _emit({"version": __version__, "error": str(exc)})
        return 2


if __name__ == "__main__":
    sys.exit(main())
