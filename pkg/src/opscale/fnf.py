"""Filter normal form of bipartite states.

A state rho on ``C^k (x) C^m`` with invertible filters L (k x k) and R
(m x m) is in filter normal form when

    (L (x) R) rho (L (x) R)* = sum_i c_i kron(C_i, D_i)

with ``C_1 = Id/sqrt(k)``, ``D_1 = Id/sqrt(m)`` and both factor families
trace-orthonormal.  Equivalently, the filtered state has both reduced states
maximally mixed.  The filters come from scaling the induced map of rho to a
doubly stochastic one; the factor expansion is an operator Schmidt
decomposition computed through realignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import scaling
from .numkernel import (DEFAULT_TOL, NumericalFailure, Tolerances,
                        as_complex_matrix, frob, hermitian_part, kron,
                        partial_trace_first, partial_trace_second, rank_tol,
                        realign, svd)
from .posmap import ChoiMap, from_state


@dataclass(frozen=True)
class BipartiteState:
    """A PSD matrix on a k x m tensor pair, normalized to unit trace."""

    k: int
    m: int
    rho: np.ndarray

    def __post_init__(self):
        rho = as_complex_matrix(self.rho)
        if rho.shape != (self.k * self.m, self.k * self.m):
            raise ValueError(
                f"state must be {(self.k * self.m,) * 2} for k={self.k}, m={self.m}, "
                f"got {rho.shape}")
        defect = frob(rho - rho.conj().T)
        if defect > 1e-8 * max(1.0, frob(rho)):
            raise ValueError(f"state is not Hermitian: defect {defect:.3e}")
        rho = hermitian_part(rho)
        w = np.linalg.eigvalsh(rho)
        if w[0] < -1e-9 * max(float(w[-1]), 1e-300):
            raise ValueError(f"state is not PSD: eigenvalue {w[0]:.3e}")
        tr = float(np.trace(rho).real)
        if tr <= 0.0:
            raise ValueError("state has nonpositive trace")
        rho = rho / tr
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def reduced_second(self) -> np.ndarray:
        """Reduced state on the second (m-dimensional) factor."""
        return partial_trace_first(self.rho, self.k, self.m)

    def reduced_first(self) -> np.ndarray:
        """Reduced state on the first (k-dimensional) factor."""
        return partial_trace_second(self.rho, self.k, self.m)


class FnfPreconditionFailed(ValueError):
    """A reduced state is not positive definite, so no filters exist."""


class ScalingInconclusive(RuntimeError):
    """Scaling did not converge; carries the full scaling report."""

    def __init__(self, report: scaling.ScalingReport):
        super().__init__(f"scaling ended with verdict {report.verdict!r}")
        self.report = report


@dataclass(frozen=True)
class MarginalCheck:
    is_pd: bool
    min_eigenvalue: float
    max_eigenvalue: float


@dataclass(frozen=True)
class PreconditionReport:
    first_factor: MarginalCheck
    second_factor: MarginalCheck

    @property
    def ok(self) -> bool:
        return self.first_factor.is_pd and self.second_factor.is_pd


def check_preconditions(state: BipartiteState,
                        tol: Tolerances = DEFAULT_TOL) -> PreconditionReport:
    """Both reduced states must be positive definite for filters to exist."""
    checks = []
    for M in (state.reduced_first(), state.reduced_second()):
        w = np.linalg.eigvalsh(hermitian_part(M))
        checks.append(MarginalCheck(
            is_pd=bool(w[-1] > 0.0 and w[0] > tol.pd_min * w[-1]),
            min_eigenvalue=float(w[0]), max_eigenvalue=float(w[-1])))
    return PreconditionReport(first_factor=checks[0], second_factor=checks[1])


@dataclass(frozen=True)
class SufficientReport:
    """Which sufficient conditions for a filter normal form hold.

    The kernel conditions are deterministic; the coprime branch reports the
    numerical support verdict of the induced map's scaling when requested.
    """

    kernel_dim: int
    marginals_pd: bool
    rect_kernel: bool        # k != m and ker < min(k, m)
    square_kernel: bool      # k == m and ker < k - 1
    ratio_kernel: bool       # marginals PD and ker < max(k, m)/min(k, m)
    coprime: bool
    coprime_scaling_verdict: str | None

    @property
    def guaranteed(self) -> bool:
        return (self.rect_kernel or self.square_kernel or self.ratio_kernel
                or (self.coprime and self.coprime_scaling_verdict == scaling.VERDICT_CONVERGED))


def sufficient_conditions(state: BipartiteState, tol: Tolerances = DEFAULT_TOL,
                          run_coprime_scaling: bool = True,
                          max_iter: int = 10000) -> SufficientReport:
    """Evaluate the kernel-dimension conditions and the coprime branch.

    A small kernel forces a filter normal form to exist: dimension below
    min(k, m) for rectangular shapes, below k - 1 for square ones, or below
    max(k, m)/min(k, m) when both reduced states are positive definite.  For
    coprime k, m existence is equivalent to the induced map having support,
    which is probed numerically by scaling.
    """
    k, m = state.k, state.m
    ker = k * m - rank_tol(state.rho, tol)
    pre = check_preconditions(state, tol)
    coprime = math.gcd(k, m) == 1
    verdict = None
    if coprime and run_coprime_scaling and pre.ok:
        G, _ = from_state(state.rho, k, m, tol)
        verdict = scaling.run(G, tol, max_iter=max_iter, keep_history=False).verdict
    return SufficientReport(
        kernel_dim=ker,
        marginals_pd=pre.ok,
        rect_kernel=(k != m and ker < min(k, m)),
        square_kernel=(k == m and ker < k - 1),
        ratio_kernel=(pre.ok and ker < max(k, m) / min(k, m)),
        coprime=coprime,
        coprime_scaling_verdict=verdict)


@dataclass(frozen=True)
class SchmidtTerm:
    """One term ``coeff * kron(first, second)`` of the factor expansion."""

    coeff: float
    first: np.ndarray
    second: np.ndarray


@dataclass(frozen=True)
class FnfResult:
    """Filters, filtered state and its operator Schmidt expansion.

    Invariants: ``schmidt[0]`` is exactly ``(1/sqrt(k*m), Id/sqrt(k),
    Id/sqrt(m))``; coefficients are nonnegative and non-increasing from the
    second term on; both factor families are trace-orthonormal; the expansion
    reconstructs ``state_fnf``; and both reduced states of ``state_fnf`` are
    maximally mixed.
    """

    filter_first: np.ndarray
    filter_second: np.ndarray
    state_fnf: BipartiteState
    schmidt: tuple[SchmidtTerm, ...]
    scaling_report: scaling.ScalingReport


def _schmidt_expansion(state_mat: np.ndarray, k: int, m: int,
                       tol: Tolerances) -> tuple[SchmidtTerm, ...]:
    """Leading identity term plus the realignment SVD of the remainder.

    Both reduced states of ``state_mat`` are maximally mixed, so the
    remainder after removing the identity component has traceless factors on
    both sides; orthonormality against the leading pair is automatic.
    """
    lead = SchmidtTerm(coeff=1.0 / math.sqrt(k * m),
                       first=np.eye(k, dtype=complex) / math.sqrt(k),
                       second=np.eye(m, dtype=complex) / math.sqrt(m))
    rest = state_mat - np.eye(k * m, dtype=complex) / (k * m)
    U, s, V = svd(realign(rest, k, m))
    cutoff = tol.rank_rel * max(frob(state_mat), 1e-300)
    terms = [lead]
    for idx in range(len(s)):
        if s[idx] <= cutoff:
            break
        terms.append(SchmidtTerm(
            coeff=float(s[idx]),
            first=U[:, idx].reshape(k, k),
            second=V[:, idx].conj().reshape(m, m)))
    return tuple(terms)


def compute_fnf(state: BipartiteState, tol: Tolerances = DEFAULT_TOL,
                max_iter: int = 10000,
                divergence_logdet: float | None = None) -> FnfResult:
    """Compute the filter normal form by scaling the induced map.

    Raises FnfPreconditionFailed when a reduced state is singular and
    ScalingInconclusive (carrying the scaling report) when the scaling does
    not converge; no partial result is produced in either case.
    """
    k, m = state.k, state.m
    pre = check_preconditions(state, tol)
    if not pre.ok:
        raise FnfPreconditionFailed(
            "a reduced state is not positive definite: "
            f"first factor min eigenvalue {pre.first_factor.min_eigenvalue:.3e}, "
            f"second factor min eigenvalue {pre.second_factor.min_eigenvalue:.3e}")

    G, _ = from_state(state.rho, k, m, tol)
    report = scaling.run(G, tol, max_iter=max_iter,
                         divergence_logdet=divergence_logdet)
    if not report.converged:
        raise ScalingInconclusive(report)

    # The scaled map X -> out T(in X in*) out* is induced by the state
    # filtered with (in* (x) out); absorb the trace normalization evenly.
    filt_first = report.in_filter.conj().T
    filt_second = report.out_filter
    W = kron(filt_first, filt_second)
    raw = hermitian_part(W @ state.rho @ W.conj().T)
    tr = float(np.trace(raw).real)
    if tr <= 0.0:
        raise NumericalFailure("filtered state lost its trace")
    scale = tr ** -0.25
    filt_first = scale * filt_first
    filt_second = scale * filt_second
    fnf_state = BipartiteState(k, m, raw / tr)

    eye_defect = max(
        frob(partial_trace_first(fnf_state.rho, k, m) - np.eye(m) / m),
        frob(partial_trace_second(fnf_state.rho, k, m) - np.eye(k) / k))
    if eye_defect > 10.0 * tol.conv_eps:
        raise NumericalFailure(
            f"filtered state's reduced states are off maximally mixed by {eye_defect:.3e}",
            residual=eye_defect)

    terms = _schmidt_expansion(fnf_state.rho, k, m, tol)
    return FnfResult(filter_first=filt_first, filter_second=filt_second,
                     state_fnf=fnf_state, schmidt=terms, scaling_report=report)


@dataclass(frozen=True)
class FnfCheck:
    passed: bool
    defect: float
    limit: float


@dataclass(frozen=True)
class FnfVerification:
    leading_pair: FnfCheck
    coefficients: FnfCheck
    orthonormal_first: FnfCheck
    orthonormal_second: FnfCheck
    reconstruction: FnfCheck
    marginals: FnfCheck
    filters_invertible: FnfCheck
    filtered_state: FnfCheck | None = None

    @property
    def passed(self) -> bool:
        checks = [self.leading_pair, self.coefficients, self.orthonormal_first,
                  self.orthonormal_second, self.reconstruction, self.marginals,
                  self.filters_invertible]
        if self.filtered_state is not None:
            checks.append(self.filtered_state)
        return all(c.passed for c in checks)


def _gram_defect(factors: list[np.ndarray]) -> float:
    n = len(factors)
    gram = np.empty((n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            gram[a, b] = np.trace(factors[a] @ factors[b].conj().T)
    return frob(gram - np.eye(n))


def verify_fnf(result: FnfResult, tol: Tolerances = DEFAULT_TOL,
               original: BipartiteState | None = None) -> FnfVerification:
    """Independent re-check of every filter-normal-form invariant.

    With ``original`` supplied, additionally checks that the filtered
    original state reproduces ``state_fnf``.
    """
    k, m = result.state_fnf.k, result.state_fnf.m
    rho = result.state_fnf.rho

    lead = result.schmidt[0]
    lead_defect = max(
        frob(lead.first - np.eye(k) / math.sqrt(k)),
        frob(lead.second - np.eye(m) / math.sqrt(m)),
        abs(lead.coeff - 1.0 / math.sqrt(k * m)))
    leading_pair = FnfCheck(lead_defect == 0.0, lead_defect, 0.0)

    coeffs = [t.coeff for t in result.schmidt]
    tail = coeffs[1:]
    mono = all(tail[i] >= tail[i + 1] for i in range(len(tail) - 1))
    nonneg = all(c >= 0.0 for c in coeffs)
    coefficients = FnfCheck(mono and nonneg, 0.0 if (mono and nonneg) else 1.0, 0.0)

    g1 = _gram_defect([t.first for t in result.schmidt])
    g2 = _gram_defect([t.second for t in result.schmidt])
    orthonormal_first = FnfCheck(g1 <= 1e-8, g1, 1e-8)
    orthonormal_second = FnfCheck(g2 <= 1e-8, g2, 1e-8)

    recon = sum(t.coeff * kron(t.first, t.second) for t in result.schmidt)
    rdef = frob(recon - rho)
    reconstruction = FnfCheck(rdef <= 1e-8, rdef, 1e-8)

    mdef = max(frob(partial_trace_first(rho, k, m) - np.eye(m) / m),
               frob(partial_trace_second(rho, k, m) - np.eye(k) / k))
    mlimit = 10.0 * tol.conv_eps
    marginals = FnfCheck(mdef <= mlimit, mdef, mlimit)

    inv_ok = True
    worst_ratio = 0.0
    for F in (result.filter_first, result.filter_second):
        s = np.linalg.svd(F, compute_uv=False)
        ratio = float(s[-1] / max(s[0], 1e-300))
        worst_ratio = max(worst_ratio, 1e-10 / max(ratio, 1e-300))
        if s[-1] <= 1e-10 * s[0]:
            inv_ok = False
    filters_invertible = FnfCheck(inv_ok, 0.0 if inv_ok else worst_ratio, 1.0)

    filtered_state = None
    if original is not None:
        W = kron(result.filter_first, result.filter_second)
        filt = hermitian_part(W @ original.rho @ W.conj().T)
        tr = float(np.trace(filt).real)
        fdef = frob(filt / tr - rho) if tr > 0 else float("inf")
        filtered_state = FnfCheck(fdef <= 1e-8, fdef, 1e-8)

    return FnfVerification(
        leading_pair=leading_pair, coefficients=coefficients,
        orthonormal_first=orthonormal_first, orthonormal_second=orthonormal_second,
        reconstruction=reconstruction, marginals=marginals,
        filters_invertible=filters_invertible, filtered_state=filtered_state)
