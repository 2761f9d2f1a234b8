"""Finite-difference surface Hamiltonian and low-lying spectra.

The kinetic term uses a flux-form (conservative) stencil with mid-point
averaged ``sqrt(g) g^{aa}`` and a symmetric centered discretization of the
mixed ``g^{12}`` terms, so ``sqrt(g) * H0`` is a symmetric matrix.  The
minimal-coupling term ``2i(e/hbar) g^{ab} A_b d_a`` is discretized in
skew-symmetric form, ``(i e/hbar)/sqrt(g) * (S D + D S)`` with
``S = diag(sqrt(g) g^{ab} A_b)``, which equals the centered difference
whenever the field is divergence free and keeps H0 exactly Hermitian in the
``sqrt(g)`` measure for any grid.

All eigen-decompositions run on the similarity transform
``D H D^{-1}`` with ``D = diag(sqrt(sqrt_g))``, which is Hermitian in the
Euclidean inner product exactly when H is Hermitian in the measure.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from thinlayer.em import FieldConfig, gauge_check
from thinlayer.errors import ConvergenceFailure, GaugeViolation, ShapeMismatch
from thinlayer.geometry import ChartPoint, SurfaceChart, fundamental_forms
from thinlayer.grid import GridSpec
from thinlayer.potentials import OperatorCoefficients, PhysicalScale

__all__ = [
    "GridSpec",
    "HamiltonianMatrix",
    "Spectrum",
    "ConvergenceTable",
    "assemble_h0",
    "assemble_hprime",
    "lowest_eigenpairs",
    "convergence_study",
]

log = logging.getLogger(__name__)

GAUGE_TOL = 1e-6
HERMITIAN_TOL = 1e-10
DENSE_LIMIT = 1024
DEGENERACY_TOL = 1e-9


def _periodic_ops(n: int, h: float):
    """Forward difference, centered difference and second difference on a ring."""
    shift = sp.diags([np.ones(n - 1), np.ones(1)], [1, -(n - 1)], shape=(n, n), format="csr")
    eye = sp.identity(n, format="csr")
    forward = (shift - eye) / h
    centered = (shift - shift.T) / (2.0 * h)
    second = (shift - 2.0 * eye + shift.T) / (h * h)
    return forward, centered, second


def _lift(op1, op2, n1, n2):
    """Embed 1D operators along each axis of an ``n1 x n2`` grid (q1 slow)."""
    return sp.kron(op1, sp.identity(n2), format="csr"), sp.kron(sp.identity(n1), op2, format="csr")


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Sparse operator on a periodic grid plus its ``sqrt(g)`` measure.

    The inner product is ``<u, v> = sum sqrt_g * conj(u) * v * cell``.
    """

    matrix: sp.csr_matrix
    sqrt_g: np.ndarray
    cell: float
    grid: GridSpec

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def measure(self) -> np.ndarray:
        return self.sqrt_g * self.cell

    def symmetric_form(self) -> sp.csr_matrix:
        d = np.sqrt(self.sqrt_g)
        return sp.diags(d) @ self.matrix @ sp.diags(1.0 / d)

    def hermiticity_deviation(self) -> float:
        """``||H~ - H~^dagger||_F / ||H~||_F`` for the symmetric form ``H~``."""
        A = self.symmetric_form()
        norm = spla.norm(A)
        if norm == 0:
            return 0.0
        return float(spla.norm(A - A.conj().T) / norm)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v

    def __add__(self, other: "HamiltonianMatrix") -> "HamiltonianMatrix":
        if other.grid != self.grid or other.sqrt_g.shape != self.sqrt_g.shape:
            raise ShapeMismatch("operators live on different grids")
        if other.matrix.nnz == 0:
            return self
        if self.matrix.nnz == 0:
            return HamiltonianMatrix(other.matrix, self.sqrt_g, self.cell, self.grid)
        return HamiltonianMatrix((self.matrix + other.matrix).tocsr(), self.sqrt_g, self.cell, self.grid)


def _grid_values(values, grid: GridSpec, chart, what: str) -> np.ndarray:
    if values is None:
        return np.zeros(grid.size)
    if callable(values):
        q1, q2 = grid.mesh(chart)
        values = values(q1, q2)
    arr = np.asarray(values, dtype=float)
    if arr.shape == (grid.n1, grid.n2):
        arr = arr.ravel()
    if arr.shape != (grid.size,):
        raise ShapeMismatch(f"{what} has shape {arr.shape}, grid needs ({grid.n1}, {grid.n2})")
    return arr


def assemble_h0(
    chart: SurfaceChart,
    grid: GridSpec,
    field: FieldConfig | None = None,
    potential=None,
    scale: PhysicalScale = PhysicalScale(),
    gauge_tol: float = GAUGE_TOL,
) -> HamiltonianMatrix:
    """Discretize the surface operator

        -k [ (1/sqrt g) d_a(sqrt g g^{ab} d_b) + 2i eps g^{ab} A_b d_a - eps^2 g^{ab} A_a A_b ]
        + V + eps A0

    with ``k = kinetic_coeff`` and ``eps = charge_coeff``.  ``potential`` is
    a callable of the chart coordinates or an array over the grid nodes.
    """
    n1, n2 = grid.n1, grid.n2
    h1, h2 = grid.spacing(chart)
    q1, q2 = grid.mesh(chart)
    forms = fundamental_forms(chart, ChartPoint(q1, q2))
    sg = forms.sqrt_g
    ginv = forms.ginv
    V = _grid_values(potential, grid, chart, "potential")

    fwd1, cen1, _ = _periodic_ops(n1, h1)
    fwd2, cen2, _ = _periodic_ops(n2, h2)
    F1, F2 = _lift(fwd1, fwd2, n1, n2)
    C1, C2 = _lift(cen1, cen2, n1, n2)

    s11 = (sg * ginv[:, 0, 0]).reshape(n1, n2)
    s22 = (sg * ginv[:, 1, 1]).reshape(n1, n2)
    s12 = sg * 0.5 * (ginv[:, 0, 1] + ginv[:, 1, 0])
    s11_mid = 0.5 * (s11 + np.roll(s11, -1, axis=0))
    s22_mid = 0.5 * (s22 + np.roll(s22, -1, axis=1))

    L = -(F1.T @ sp.diags(s11_mid.ravel()) @ F1) - (F2.T @ sp.diags(s22_mid.ravel()) @ F2)
    if np.any(s12 != 0):
        S12 = sp.diags(s12)
        L = L + C1 @ S12 @ C2 + C2 @ S12 @ C1

    k = scale.kinetic_coeff
    diag = V.astype(complex)
    kinetic = L.astype(complex)
    if field is not None:
        report = gauge_check(chart, field, grid)
        if report.max_div > gauge_tol:
            raise GaugeViolation(
                f"surface divergence {report.max_div:.3e} exceeds {gauge_tol:.1e}"
            )
        eps = scale.charge_coeff
        A = field.covariant(q1, q2)
        u = np.einsum("nab,nb->na", ginv, A)
        for axis, C in ((0, C1), (1, C2)):
            S = sp.diags(sg * u[:, axis])
            kinetic = kinetic + 1j * eps * (S @ C + C @ S)
        diag = diag + k * eps * eps * np.einsum("na,na->n", A, u) + eps * field.scalar(q1, q2)

    H = -k * (sp.diags(1.0 / sg) @ kinetic) + sp.diags(diag)
    H = H.tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    return HamiltonianMatrix(H, sg, h1 * h2, grid)


def assemble_hprime(
    chart: SurfaceChart, grid: GridSpec, coeffs: OperatorCoefficients
) -> HamiltonianMatrix:
    """Assemble ``c2 d_a d_b + c1 d_a + c0`` verbatim, without symmetrization."""
    n = grid.size
    c2 = np.asarray(coeffs.c2)
    c1 = np.asarray(coeffs.c1)
    c0 = np.asarray(coeffs.c0)
    if c2.shape != (n, 2, 2) or c1.shape != (n, 2) or c0.shape != (n,):
        raise ShapeMismatch(
            f"coefficient shapes {c2.shape}, {c1.shape}, {c0.shape} do not match {n} grid nodes"
        )
    n1, n2 = grid.n1, grid.n2
    h1, h2 = grid.spacing(chart)
    _, cen1, sec1 = _periodic_ops(n1, h1)
    _, cen2, sec2 = _periodic_ops(n2, h2)
    C1, C2 = _lift(cen1, cen2, n1, n2)
    S1, S2 = _lift(sec1, sec2, n1, n2)

    H = (
        sp.diags(c2[:, 0, 0].astype(complex)) @ S1
        + sp.diags(c2[:, 1, 1].astype(complex)) @ S2
        + sp.diags((c2[:, 0, 1] + c2[:, 1, 0]).astype(complex)) @ (C1 @ C2)
        + sp.diags(c1[:, 0]) @ C1
        + sp.diags(c1[:, 1]) @ C2
        + sp.diags(c0)
    ).tocsr()
    H.sum_duplicates()
    H.eliminate_zeros()
    sg = fundamental_forms(chart, ChartPoint(*grid.mesh(chart))).sqrt_g
    return HamiltonianMatrix(H, sg, h1 * h2, grid)


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    hermiticity_deviation: float
    anti_hermitian_norm: float = 0.0
    symmetrized: bool = False
    method: str = "dense"
    diagnostics: dict = field(default_factory=dict)

    def clusters(self, tol: float = DEGENERACY_TOL) -> list[list[int]]:
        """Group indices of eigenvalues closer than ``tol`` into clusters."""
        groups: list[list[int]] = []
        for i, lam in enumerate(self.eigenvalues):
            if groups and abs(lam - self.eigenvalues[groups[-1][-1]]) <= tol:
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups


def _lower_bound(A) -> float:
    # Gershgorin bound on the real part of every eigenvalue
    A = sp.csr_matrix(A)
    diag = A.diagonal().real
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(A.diagonal())
    return float(np.min(diag - off))


def _maybe_real(A):
    if sp.issparse(A):
        if A.nnz == 0 or np.all(A.data.imag == 0):
            return A.real.tocsr()
        return A
    return A.real if np.all(A.imag == 0) else A


def lowest_eigenpairs(
    H: HamiltonianMatrix,
    k: int = 4,
    symmetrize: bool = False,
    dense_limit: int = DENSE_LIMIT,
    maxiter: int | None = None,
    seed: int = 0,
) -> Spectrum:
    """The ``k`` eigenpairs with smallest real part.

    With ``symmetrize`` the Hermitian part (in the measure) is diagonalized
    and the discarded anti-Hermitian Frobenius norm is reported.  Without it
    a Hermitian solver is used only when the operator is Hermitian to
    ``HERMITIAN_TOL``; otherwise a general (complex) solver runs.
    Eigenvectors are returned in the original representation, normalized in
    the ``sqrt(g)`` measure.
    """
    n = H.dimension
    if not (0 < k < n / 4):
        raise ValueError(f"need 0 < k < dimension/4 = {n / 4}")
    A = H.symmetric_form().tocsr()
    AH = A.conj().T.tocsr()
    norm = spla.norm(A)
    deviation = float(spla.norm(A - AH) / norm) if norm else 0.0
    anti_norm = float(spla.norm(A - AH) / 2.0)
    if symmetrize:
        A = ((A + AH) * 0.5).tocsr()
    hermitian = symmetrize or deviation <= HERMITIAN_TOL
    A = _maybe_real(A)

    if n <= dense_limit:
        method = "dense"
        dense = A.toarray()
        if hermitian:
            vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[0, k - 1])
        else:
            vals, vecs = scipy.linalg.eig(dense)
            order = np.lexsort((vals.imag, vals.real))[:k]
            vals, vecs = vals[order], vecs[:, order]
    else:
        method = "shift-invert"
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(n)
        if np.iscomplexobj(A.data):
            v0 = v0 + 1j * rng.standard_normal(n)
        sigma = _lower_bound(A)
        sigma -= 1e-6 * max(spla.norm(A, np.inf), 1.0)
        try:
            if hermitian:
                vals, vecs = spla.eigsh(A, k=k, sigma=sigma, which="LM", v0=v0, maxiter=maxiter)
            else:
                vals, vecs = spla.eigs(A, k=k, sigma=sigma, which="LM", v0=v0, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise ConvergenceFailure(
                "ARPACK did not converge",
                {"converged": len(exc.eigenvalues), "requested": k, "sigma": sigma},
            ) from exc
        order = np.lexsort((np.imag(vals), np.real(vals)))
        vals, vecs = vals[order], vecs[:, order]

    vecs = vecs / np.linalg.norm(vecs, axis=0)
    residuals = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    if hermitian:
        vals = np.real(vals)
    d = np.sqrt(H.sqrt_g)
    original = vecs / d[:, None] / math.sqrt(H.cell)
    log.debug("eigensolve %s n=%d k=%d max residual %.2e", method, n, k, residuals.max())
    return Spectrum(
        eigenvalues=np.asarray(vals),
        eigenvectors=original,
        residuals=residuals,
        hermiticity_deviation=deviation,
        anti_hermitian_norm=anti_norm if symmetrize else 0.0,
        symmetrized=symmetrize,
        method=method,
        diagnostics={"hermitian_solver": hermitian, "dimension": n},
    )


@dataclass
class ConvergenceTable:
    grids: list[GridSpec]
    eigenvalues: np.ndarray  # (n_grids, k)
    orders: np.ndarray  # per eigenvalue
    reference: np.ndarray | None = None

    def rows(self) -> list[dict]:
        return [
            {"n1": g.n1, "n2": g.n2, "eigenvalues": [float(x) for x in np.real(e)]}
            for g, e in zip(self.grids, self.eigenvalues)
        ]


def convergence_study(
    build: Callable[[GridSpec], HamiltonianMatrix],
    grids: Sequence[GridSpec],
    k: int = 1,
    reference: Sequence[float] | None = None,
    symmetrize: bool = False,
) -> ConvergenceTable:
    """Eigenvalues on successively refined grids and the observed order.

    With ``reference`` the order is fitted from errors against it on the two
    finest grids; without, from the three finest grids (self-convergence).
    Grids are assumed to refine by a constant factor.
    """
    grids = list(grids)
    if len(grids) < 2:
        raise ValueError("convergence study needs at least two grids")
    if reference is None and len(grids) < 3:
        raise ValueError("self-convergence needs at least three grids")
    vals = np.array(
        [np.real(lowest_eigenpairs(build(g), k, symmetrize=symmetrize).eigenvalues) for g in grids]
    )
    ratio = grids[-1].n1 / grids[-2].n1
    if reference is not None:
        ref = np.asarray(reference, float)[:k]
        err = np.abs(vals - ref)
        orders = np.log(err[-2] / err[-1]) / math.log(ratio)
    else:
        d1 = np.abs(vals[-2] - vals[-3])
        d2 = np.abs(vals[-1] - vals[-2])
        orders = np.log(d1 / d2) / math.log(ratio)
    return ConvergenceTable(grids, vals, orders, None if reference is None else np.asarray(reference))
