"""Alternating marginal normalization of a positive map.

Starting from a positive map T with T(Id) and T*(Id) positive definite, the
iteration keeps a pair of invertible filters: ``in_filter`` acting on inputs
and ``out_filter`` acting on outputs, so that the scaled map is
``X -> out_filter T(in_filter X in_filter*) out_filter*``.  Each step
renormalizes one marginal exactly; convergence of both marginal residuals
means the scaled map is doubly stochastic.  The tracked log-determinant
``m*log|det in_filter| + k*log|det out_filter|`` never decreases, stays
bounded when the map's pattern has support in every basis pair, and grows
without bound otherwise, which is the divergence heuristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numkernel import (DEFAULT_TOL, NotPositiveDefinite, NumericalFailure,
                        Tolerances, frob, herm_eig, hermitian_part)
from .posmap import BlockCertificate, ChoiMap, invariance_defect

VERDICT_CONVERGED = "converged-ds"
VERDICT_NO_SUPPORT = "no-support-numerical"
VERDICT_INCONCLUSIVE = "max-iter-inconclusive"
VERDICT_PRECONDITION = "precondition-failed"

# A step whose recomputed marginal identity drifts past this is reported as a
# numerical failure instead of silently continuing.
_STEP_DEFECT_LIMIT = 1e-6


class PreconditionFailed(ValueError):
    """T(Id) or T*(Id) is not positive definite at tolerance."""

    def __init__(self, message: str, marginal: str, min_eigenvalue: float):
        super().__init__(message)
        self.marginal = marginal
        self.min_eigenvalue = min_eigenvalue


def _pd_inv_sqrt_logdet(H, tol: Tolerances, what: str):
    """Inverse square root plus sum of eigenvalue logs, with the PD floor.

    The eigenvalue log sum feeds the incremental log-determinant update; the
    floor failure is loud, eigenvalues are never clamped.
    """
    w, V = herm_eig(H)
    top, bottom = float(w[0]), float(w[-1])
    if top <= 0.0 or bottom <= tol.pd_min * top:
        raise NotPositiveDefinite(
            f"{what} lost positive definiteness: eigenvalue {bottom:.6e} "
            f"vs largest {top:.6e}",
            min_eigenvalue=bottom, max_eigenvalue=top)
    S = hermitian_part(V @ np.diag(w ** -0.5) @ V.conj().T)
    return S, float(np.sum(np.log(w)))


@dataclass(frozen=True)
class ScalingState:
    """One iterate of the alternating normalization.

    ``in_marginal`` is the input-side marginal of the scaled map (tends to
    Id/sqrt(k) on convergence) and ``out_marginal`` the output-side one
    (tends to Id/sqrt(m)); ``in_filter_next`` already absorbs the current
    input-side correction and becomes the input filter of the next state.
    ``logdet`` is m*log|det in_filter| + k*log|det out_filter|.
    """

    n: int
    in_filter: np.ndarray
    out_filter: np.ndarray
    in_marginal: np.ndarray
    out_marginal: np.ndarray
    in_filter_next: np.ndarray
    logdet: float
    in_residual: float
    out_residual: float
    marginal_defect: float
    in_marginal_eig_logsum: float

    @property
    def converged(self) -> bool:  # against the default threshold only
        return max(self.in_residual, self.out_residual) <= DEFAULT_TOL.conv_eps

    def trace_defects(self, k: int, m: int) -> tuple[float, float]:
        """Distance of tr(in_marginal) from sqrt(k) and tr(out_marginal)
        from sqrt(m); both are exact invariants of the iteration."""
        return (abs(float(np.trace(self.in_marginal).real) - math.sqrt(k)),
                abs(float(np.trace(self.out_marginal).real) - math.sqrt(m)))


def _residuals(A, B, k: int, m: int) -> tuple[float, float]:
    return (frob(math.sqrt(k) * A - np.eye(k)),
            frob(math.sqrt(m) * B - np.eye(m)))


def init(T: ChoiMap, tol: Tolerances = DEFAULT_TOL) -> ScalingState:
    """First iterate.  Raises PreconditionFailed unless T(Id) and T*(Id) are
    positive definite at the relative floor."""
    k, m = T.k, T.m
    eye_k = np.eye(k)
    eye_m = np.eye(m)

    fwd = hermitian_part(T.apply(eye_k / math.sqrt(k)))      # T(Id/sqrt(k))
    adj = hermitian_part(T.apply_adjoint(eye_m))             # T*(Id)
    for name, M in (("T(Id)", fwd), ("T*(Id)", adj)):
        w = np.linalg.eigvalsh(M)
        if w[-1] <= 0.0 or w[0] <= tol.pd_min * w[-1]:
            raise PreconditionFailed(
                f"{name} is not positive definite: eigenvalue {w[0]:.6e} "
                f"vs largest {w[-1]:.6e}", marginal=name,
                min_eigenvalue=float(w[0]))

    fwd_is, fwd_logsum = _pd_inv_sqrt_logdet(fwd, tol, "T(Id/sqrt(k))")
    X0 = eye_k.astype(complex)
    Y0 = m ** -0.25 * fwd_is
    # logdet of the (X0, Y0) pair, from the eigenvalues of T(Id/sqrt(k)).
    logdet0 = k * (-(m / 4.0) * math.log(m) - 0.5 * fwd_logsum)

    A0 = hermitian_part(T.apply_adjoint(Y0.conj().T @ (eye_m / math.sqrt(m)) @ Y0))
    A0_is, A0_logsum = _pd_inv_sqrt_logdet(A0, tol, "input-side marginal")
    X1 = k ** -0.25 * (X0 @ A0_is)
    B0 = hermitian_part(Y0 @ T.apply(X1 @ (eye_k / math.sqrt(k)) @ X1.conj().T) @ Y0.conj().T)

    in_res, out_res = _residuals(A0, B0, k, m)
    defect = frob(Y0 @ T.apply(X0 @ X0.conj().T / math.sqrt(k)) @ Y0.conj().T
                  - eye_m / math.sqrt(m))
    return ScalingState(n=0, in_filter=X0, out_filter=Y0,
                        in_marginal=A0, out_marginal=B0, in_filter_next=X1,
                        logdet=logdet0, in_residual=in_res, out_residual=out_res,
                        marginal_defect=float(defect),
                        in_marginal_eig_logsum=A0_logsum)


def step(state: ScalingState, T: ChoiMap, tol: Tolerances = DEFAULT_TOL) -> ScalingState:
    """Advance one iteration: renormalize the output marginal, recompute the
    input marginal, and prepare the next input filter."""
    k, m = T.k, T.m
    eye_k = np.eye(k)
    eye_m = np.eye(m)

    B_is, B_logsum = _pd_inv_sqrt_logdet(state.out_marginal, tol, "output-side marginal")
    Y1 = m ** -0.25 * (B_is @ state.out_filter)
    X1 = state.in_filter_next

    A1 = hermitian_part(
        X1.conj().T @ T.apply_adjoint(Y1.conj().T @ (eye_m / math.sqrt(m)) @ Y1) @ X1)
    A1_is, A1_logsum = _pd_inv_sqrt_logdet(A1, tol, "input-side marginal")
    X2 = k ** -0.25 * (X1 @ A1_is)
    B1 = hermitian_part(Y1 @ T.apply(X2 @ (eye_k / math.sqrt(k)) @ X2.conj().T) @ Y1.conj().T)

    # det X advances by det(A)^(-1/2) * k^(-k/4), det Y by det(B)^(-1/2) * m^(-m/4).
    logdet = state.logdet
    logdet += m * (-0.5 * state.in_marginal_eig_logsum - (k / 4.0) * math.log(k))
    logdet += k * (-0.5 * B_logsum - (m / 4.0) * math.log(m))

    in_res, out_res = _residuals(A1, B1, k, m)
    defect = frob(Y1 @ T.apply(X1 @ X1.conj().T / math.sqrt(k)) @ Y1.conj().T
                  - eye_m / math.sqrt(m))
    if defect > _STEP_DEFECT_LIMIT:
        raise NumericalFailure(
            f"renormalized marginal drifted to defect {defect:.3e}",
            residual=float(defect))
    tr_in = abs(float(np.trace(A1).real) - math.sqrt(k))
    tr_out = abs(float(np.trace(B1).real) - math.sqrt(m))
    if max(tr_in, tr_out) > _STEP_DEFECT_LIMIT:
        raise NumericalFailure(
            f"marginal trace invariant drifted to {max(tr_in, tr_out):.3e}",
            residual=float(max(tr_in, tr_out)))

    return ScalingState(n=state.n + 1, in_filter=X1, out_filter=Y1,
                        in_marginal=A1, out_marginal=B1, in_filter_next=X2,
                        logdet=logdet, in_residual=in_res, out_residual=out_res,
                        marginal_defect=float(defect),
                        in_marginal_eig_logsum=A1_logsum)


@dataclass(frozen=True)
class IterationRecord:
    n: int
    in_residual: float
    out_residual: float
    logdet: float


@dataclass(frozen=True)
class ScalingReport:
    """Outcome of a scaling run.

    ``verdict`` is one of converged-ds, no-support-numerical,
    max-iter-inconclusive, precondition-failed.  The no-support verdict is a
    divergence heuristic (log-determinant past the threshold), not a proof.
    On convergence ``ds_map`` is the scaled map, built from the final filter
    pair.
    """

    verdict: str
    iterations: int
    in_residual: float | None
    out_residual: float | None
    logdet: float | None
    in_filter: np.ndarray | None
    out_filter: np.ndarray | None
    ds_map: ChoiMap | None
    history: tuple[IterationRecord, ...]
    failure_reason: str | None = None

    @property
    def converged(self) -> bool:
        return self.verdict == VERDICT_CONVERGED


def run(T: ChoiMap, tol: Tolerances = DEFAULT_TOL, max_iter: int = 10000,
        divergence_logdet: float | None = None,
        keep_history: bool = True) -> ScalingReport:
    """Iterate until both marginal residuals drop to ``tol.conv_eps``, the
    log-determinant exceeds the divergence threshold (default ``50 * k * m``),
    or ``max_iter`` is hit."""
    threshold = 50.0 * T.k * T.m if divergence_logdet is None else float(divergence_logdet)
    try:
        state = init(T, tol)
    except PreconditionFailed as exc:
        return ScalingReport(
            verdict=VERDICT_PRECONDITION, iterations=0, in_residual=None,
            out_residual=None, logdet=None, in_filter=None, out_filter=None,
            ds_map=None, history=(), failure_reason=str(exc))

    history: list[IterationRecord] = []
    while True:
        if keep_history:
            history.append(IterationRecord(state.n, state.in_residual,
                                           state.out_residual, state.logdet))
        if max(state.in_residual, state.out_residual) <= tol.conv_eps:
            ds_map = T.conjugated(state.in_filter, state.out_filter)
            return ScalingReport(
                verdict=VERDICT_CONVERGED, iterations=state.n,
                in_residual=state.in_residual, out_residual=state.out_residual,
                logdet=state.logdet, in_filter=state.in_filter,
                out_filter=state.out_filter, ds_map=ds_map,
                history=tuple(history))
        if state.logdet > threshold:
            return ScalingReport(
                verdict=VERDICT_NO_SUPPORT, iterations=state.n,
                in_residual=state.in_residual, out_residual=state.out_residual,
                logdet=state.logdet, in_filter=state.in_filter,
                out_filter=state.out_filter, ds_map=None,
                history=tuple(history),
                failure_reason=f"log-determinant {state.logdet:.3f} exceeded {threshold:.3f}")
        if state.n >= max_iter:
            return ScalingReport(
                verdict=VERDICT_INCONCLUSIVE, iterations=state.n,
                in_residual=state.in_residual, out_residual=state.out_residual,
                logdet=state.logdet, in_filter=state.in_filter,
                out_filter=state.out_filter, ds_map=None,
                history=tuple(history),
                failure_reason=f"residuals above {tol.conv_eps:g} after {max_iter} iterations")
        state = step(state, T, tol)


@dataclass(frozen=True)
class CommutationReport:
    """Whether the scaling iterates commute with certificate projectors."""

    passed: bool
    precondition_ok: bool
    steps_run: int
    first_failure: tuple[int, str, float] | None


def block_commutation_check(T: ChoiMap, cert: BlockCertificate,
                            n_steps: int = 50,
                            tol: Tolerances = DEFAULT_TOL,
                            rel_tol: float = 1e-8) -> CommutationReport:
    """Run ``n_steps`` scaling steps asserting that every iterate commutes
    with the certificate's projectors.

    Requires the certificate to be structurally valid and invariant under T
    (checked first; a violation rejects the run instead of producing a
    misleading commutator report).
    """
    if cert.structure_defect() > 1e-10 * max(T.k, T.m):
        return CommutationReport(passed=False, precondition_ok=False,
                                 steps_run=0, first_failure=None)
    if invariance_defect(T, cert) > 1e-8 * max(1.0, frob(T.choi)):
        return CommutationReport(passed=False, precondition_ok=False,
                                 steps_run=0, first_failure=None)

    def worst_commutator(state: ScalingState) -> tuple[str, float] | None:
        for label, M, family in (("input", state.in_filter, cert.input_projectors),
                                 ("output", state.out_filter, cert.output_projectors)):
            scale = max(frob(M), 1e-300)
            for P in family:
                defect = frob(M @ P - P @ M)
                if defect > rel_tol * scale:
                    return label, float(defect)
        return None

    state = init(T, tol)
    for _ in range(n_steps):
        bad = worst_commutator(state)
        if bad is not None:
            return CommutationReport(passed=False, precondition_ok=True,
                                     steps_run=state.n, first_failure=(state.n, *bad))
        if max(state.in_residual, state.out_residual) <= tol.conv_eps:
            break
        state = step(state, T, tol)
    return CommutationReport(passed=True, precondition_ok=True,
                             steps_run=state.n, first_failure=None)
