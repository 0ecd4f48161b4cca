"""Mixed Dirichlet-Neumann and pure-Neumann Laplace solvers.

Dirichlet data is imposed strongly at the vertices of the Dirichlet
edges (which includes the singular vertices adjacent to them); the
remaining symmetric positive (semi)definite system is solved by
conjugate gradients with diagonal preconditioning.  The pure-Neumann
problem is gauged to zero mean after a compatibility check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .geometry import BoundaryPartition, PartitionError


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested residual."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class CompatibilityError(ValueError):
    """Pure-Neumann data violates the compatibility condition."""

    def __init__(self, message, defect):
        super().__init__(message)
        self.defect = defect


def conjugate_gradient(A, b, x0=None, rtol=1e-12, maxiter=None, project=None):
    """Preconditioned conjugate gradients for a sparse SPD system.

    Diagonal (Jacobi) preconditioning; terminates when the true
    residual satisfies ||b - A x|| <= rtol * ||b||.  `project`, when
    given, is applied to the initial iterate and to every residual to
    keep the iteration inside the range of a semidefinite A.  Returns
    (x, iterations); raises SolverError past the iteration cap.
    """
    n = A.shape[0]
    if maxiter is None:
        maxiter = max(20 * n, 50)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if project is not None:
        x = project(x)
    diag = A.diagonal()
    dinv = np.where(diag > 0.0, 1.0 / np.where(diag > 0.0, diag, 1.0), 1.0)

    r = b - A @ x
    if project is not None:
        r = project(r)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        bnorm = 1.0
    if np.linalg.norm(r) <= rtol * bnorm:
        return x, 0
    z = dinv * r
    d = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        q = A @ d
        alpha = rz / float(d @ q)
        x += alpha * d
        r -= alpha * q
        if project is not None:
            r = project(r)
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it
        z = dinv * r
        rz_new = float(r @ z)
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise SolverError(
        f"conjugate gradients stalled after {maxiter} iterations "
        f"(relative residual {float(np.linalg.norm(r)) / bnorm:.3e}, target {rtol:.1e})",
        iterations=maxiter,
        residual=float(np.linalg.norm(r)) / bnorm,
    )


@dataclass(eq=False)
class MixedProblem:
    """Laplace problem with strong Dirichlet and natural Neumann data.

    partition : boundary split; the Dirichlet region must be non-empty
    g : ScalarField, the load (the equation reads div grad u = g)
    f : ScalarField, Dirichlet values (read at Dirichlet vertices)
    theta : edge cotrace of conormal flux on the Neumann region, or None
    """

    partition: BoundaryPartition
    g: fem.ScalarField
    f: fem.ScalarField
    theta: fem.BoundaryTrace | None = None

    def __post_init__(self):
        if len(self.partition.region_edges("dirichlet")) == 0:
            raise PartitionError("mixed problem requires a non-empty Dirichlet region")
        for fld in (self.g, self.f):
            if fld.mesh is not self.partition.mesh:
                raise fem.FieldError("problem data lives on a different mesh")
        if self.theta is not None and self.theta.partition is not self.partition:
            raise fem.FieldError("theta must be a cotrace on the same partition")


@dataclass(eq=False)
class NeumannProblem:
    """Pure-Neumann Laplace problem.

    theta : edge cotrace over the full boundary
    tol : compatibility tolerance; None selects
          1e-8 * (||g||_L2 + ||theta||_L2(boundary) + 1)
    """

    partition: BoundaryPartition
    g: fem.ScalarField
    theta: fem.BoundaryTrace
    tol: float | None = None

    def __post_init__(self):
        if self.g.mesh is not self.partition.mesh:
            raise fem.FieldError("problem data lives on a different mesh")
        if self.theta.partition is not self.partition:
            raise fem.FieldError("theta must be a cotrace on the same partition")


def _theta_vector(partition, theta):
    if theta is None:
        return np.zeros(partition.mesh.num_vertices)
    return fem.boundary_functional(partition, theta)


def _boundary_l2(partition, theta):
    lens = partition.mesh.boundary_lengths[theta.indices]
    return float(np.sqrt(np.sum(lens * theta.values**2)))


def compatibility_defect(g, theta):
    """Defect <g, 1> - <theta, trace 1> of the pure-Neumann data."""
    partition = theta.partition
    ones = fem.ScalarField.constant(partition.mesh, 1.0)
    pairing = fem.boundary_pairing(fem.trace(partition, ones, theta.region), theta)
    return fem.scalar_inner(g, ones) - pairing


def weak_residual(partition, u, g, theta=None):
    """Normalized strong-form residual of the discrete weak equation.

    max over hat functions vanishing on the Dirichlet region of
    |<grad u, grad hat> - <theta, trace hat> + <g, hat>|, divided by
    ||u||_{W^{1,2}} + ||g||_{L^2} + 1.
    """
    mesh = partition.mesh
    K = fem.stiffness_matrix(mesh)
    M = fem.mass_matrix(mesh)
    r = K @ u.values + M @ g.values - _theta_vector(partition, theta)
    fixed = partition.region_vertices("dirichlet")
    mask = np.ones(mesh.num_vertices, dtype=bool)
    mask[fixed] = False
    num = float(np.max(np.abs(r[mask]))) if mask.any() else 0.0
    den = fem.w1p_norm(u, 2) + fem.lp_norm(g, 2) + 1.0
    return num / den


_DEFAULT_RESIDUAL_TOL = 1e-10


def solve_mixed(problem, x0=None, rtol=1e-12, residual_tol=_DEFAULT_RESIDUAL_TOL):
    """Solve the mixed problem; returns (ScalarField, info dict).

    info carries the CG iteration count and the final weak residual.
    x0 optionally seeds the CG iteration (the solution is independent
    of it up to the solver tolerance).
    """
    partition = problem.partition
    mesh = partition.mesh
    fixed = partition.region_vertices("dirichlet")
    mask = np.ones(mesh.num_vertices, dtype=bool)
    mask[fixed] = False
    free = np.nonzero(mask)[0]

    K = fem.stiffness_matrix(mesh)
    M = fem.mass_matrix(mesh)
    b = _theta_vector(partition, problem.theta) - M @ problem.g.values

    u = np.zeros(mesh.num_vertices)
    u[fixed] = problem.f.values[fixed]
    iterations = 0
    if len(free):
        Kc = K.tocsc()
        K_ff = Kc[free][:, free].tocsr()
        rhs = b[free] - Kc[free][:, fixed] @ u[fixed]
        start = None if x0 is None else x0.values[free]
        sol, iterations = conjugate_gradient(
            K_ff, rhs, x0=start, rtol=rtol, maxiter=20 * len(free)
        )
        u[free] = sol

    field = fem.ScalarField(mesh, u)
    res = weak_residual(partition, field, problem.g, problem.theta)
    if res > residual_tol:
        raise SolverError(
            f"mixed solve left weak residual {res:.3e} > {residual_tol:.1e}",
            iterations=iterations,
            residual=res,
        )
    return field, {"iterations": iterations, "residual": res, "defect": None}


def solve_neumann(problem, gauge="mean", x0=None, rtol=1e-12,
                  residual_tol=_DEFAULT_RESIDUAL_TOL):
    """Solve the pure-Neumann problem; returns (ScalarField, info dict).

    Incompatible data is rejected with CompatibilityError carrying the
    defect.  gauge "mean" (default) returns the zero-mean solution
    (mean against the domain measure); gauge "vertex" pins vertex 0 to
    zero instead, which differs from the default by a constant.
    """
    partition = problem.partition
    mesh = partition.mesh
    defect = compatibility_defect(problem.g, problem.theta)
    tol = problem.tol
    if tol is None:
        tol = 1e-8 * (
            fem.lp_norm(problem.g, 2) + _boundary_l2(partition, problem.theta) + 1.0
        )
    if abs(defect) > tol:
        raise CompatibilityError(
            f"incompatible Neumann data: <g,1> - <theta, trace 1> = {defect!r} "
            f"exceeds tolerance {tol:.3e}; the load and flux must balance",
            defect=defect,
        )

    K = fem.stiffness_matrix(mesh)
    M = fem.mass_matrix(mesh)
    b = _theta_vector(partition, problem.theta) - M @ problem.g.values
    nv = mesh.num_vertices

    if gauge == "vertex":
        free = np.arange(1, nv)
        Kc = K.tocsc()
        K_ff = Kc[free][:, free].tocsr()
        start = None if x0 is None else x0.values[free]
        sol, iterations = conjugate_gradient(
            K_ff, b[free], x0=start, rtol=rtol, maxiter=20 * len(free)
        )
        u = np.concatenate(([0.0], sol))
    elif gauge == "mean":
        def project(v):
            return v - v.mean()

        start = None if x0 is None else x0.values
        u, iterations = conjugate_gradient(
            K, b - b.mean(), x0=start, rtol=rtol, maxiter=20 * nv, project=project
        )
        ones = fem.ScalarField.constant(mesh, 1.0)
        area = fem.scalar_inner(ones, ones)
        weighted_mean = fem.scalar_inner(fem.ScalarField(mesh, u), ones) / area
        u = u - weighted_mean
    else:
        raise ValueError(f"unknown gauge {gauge!r}")

    field = fem.ScalarField(mesh, u)
    res = weak_residual(partition, field, problem.g, problem.theta)
    # The consistency defect spreads over all hat functions; admit it
    # on top of the solver tolerance.
    if res > residual_tol + abs(defect):
        raise SolverError(
            f"neumann solve left weak residual {res:.3e}",
            iterations=iterations,
            residual=res,
        )
    return field, {"iterations": iterations, "residual": res, "defect": defect}
