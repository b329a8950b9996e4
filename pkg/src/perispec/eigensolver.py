"""Eigenpairs of the discrete truncated fractional p-Laplacian.

For p=2 the problem is a dense symmetric-definite generalized eigenproblem
(stiffness from the same quadrature tableau the energy uses, exact P1 mass
matrix). For general p the first eigenpair is computed by a nonlinear inverse
power method: each outer step minimizes the convex functional
E(v)/p - <|u|^(p-2) u, v> and renormalizes in L^p.  A shooting method for the
1-D p-Laplacian ODE provides an independent reference for the local limit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh
from scipy.optimize import minimize

from . import energy as en
from .kernelmath import KernelParams, local_p_laplacian_lambda1
from .mesh import DiscreteFunction, Mesh, interpolate


class WrongExponentError(ValueError):
    """Matrix path requested with p != 2."""


class AssemblyCorruptionError(RuntimeError):
    """Mass matrix failed its positive-definiteness check."""


class OracleFailureError(RuntimeError):
    """Shooting oracle could not bracket the eigenvalue."""


@dataclass(frozen=True)
class EigenPair:
    lam: float
    eigenfunction: DiscreteFunction
    index_k: int
    residual: float
    iterations: int
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "k": self.index_k,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "values": self.eigenfunction.values.tolist(),
        }


@dataclass(frozen=True)
class SolverOptions:
    tol_lambda: float = 1e-10
    tol_u: float = 1e-8
    max_outer: int = 200
    max_inner: int = 20000
    inner_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self):
        if min(self.tol_lambda, self.tol_u, self.inner_tol) <= 0:
            raise ValueError("all tolerances must be positive")
        if min(self.max_outer, self.max_inner) < 1:
            raise ValueError("iteration caps must be at least 1")


def assemble_p2_matrices(mesh: Mesh, params: KernelParams):
    """(stiffness, mass) over interior nodes; stiffness is the polarization of the energy."""
    if abs(params.p - 2.0) > 1e-12:
        raise WrongExponentError(f"matrix assembly requires p=2, got p={params.p}")
    tab = en._tableau(mesh, params)
    nn = tab.nn
    A = np.zeros(nn * nn)
    if len(tab.w):
        idx = (tab.xe, tab.xe + 1, tab.ye, tab.ye + 1)
        coef = (1.0 - tab.xt, tab.xt, -(1.0 - tab.yt), -tab.yt)
        for ia, ca in zip(idx, coef):
            for ib, cb in zip(idx, coef):
                A += np.bincount(ia * nn + ib, tab.w * ca * cb, minlength=nn * nn)
    if len(tab.same_elems):
        e = tab.same_elems
        c = tab.same_coef
        for ia, ca in ((e, 1.0), (e + 1, -1.0)):
            for ib, cb in ((e, 1.0), (e + 1, -1.0)):
                A += np.bincount(ia * nn + ib, np.full(len(e), c * ca * cb), minlength=nn * nn)
    if len(tab.zw):
        idx = (tab.ze, tab.ze + 1)
        coef = (1.0 - tab.zt, tab.zt)
        for ia, ca in zip(idx, coef):
            for ib, cb in zip(idx, coef):
                A += np.bincount(ia * nn + ib, tab.zw * ca * cb, minlength=nn * nn)
    A = A.reshape(nn, nn)
    A = 0.5 * (A + A.T)

    # exact piecewise-linear L^2 Gram matrix over Omega
    M = np.zeros((nn, nn))
    lo = mesh.collar_cells
    hi = lo + mesh.n_interior_elements
    h = mesh.h
    for e in range(lo, hi):
        M[e, e] += h / 3.0
        M[e + 1, e + 1] += h / 3.0
        M[e, e + 1] += h / 6.0
        M[e + 1, e] += h / 6.0

    ii = mesh.interior_indices()
    return A[np.ix_(ii, ii)], M[np.ix_(ii, ii)]


def _embed(mesh: Mesh, x: np.ndarray) -> DiscreteFunction:
    vals = np.zeros(len(mesh.nodes))
    vals[mesh.interior_indices()] = x
    return DiscreteFunction(vals, mesh)


def solve_p2_spectrum(mesh: Mesh, params: KernelParams, k_max: int):
    """The k_max smallest eigenpairs at p=2, eigenfunctions normalized in L^2(Omega)."""
    A, M = assemble_p2_matrices(mesh, params)
    n = A.shape[0]
    if k_max > n:
        raise ValueError(f"k_max={k_max} exceeds interior node count {n}")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise AssemblyCorruptionError("mass matrix is not positive definite") from exc
    vals, vecs = eigh(A, M, subset_by_index=[0, k_max - 1])
    pairs = []
    for k in range(k_max):
        x = vecs[:, k]
        u = _embed(mesh, x)
        nrm = en.lp_mass(u, 2.0) ** 0.5
        x = x / nrm
        # deterministic sign: first eigenfunction positive, others positive at
        # the first interior node
        interior = x
        if k == 0:
            if np.sum(interior) < 0:
                x = -x
        elif interior[0] < 0:
            x = -x
        u = _embed(mesh, x)
        res = A @ x - vals[k] * (M @ x)
        residual = float(np.linalg.norm(res) / max(np.linalg.norm(M @ x), 1e-300))
        pairs.append(EigenPair(
            lam=float(vals[k]),
            eigenfunction=u,
            index_k=k + 1,
            residual=residual,
            iterations=0,
        ))
    return pairs


def _minimize_inner(obj, grad, x0, gtol, max_iter):
    """Gradient-only quasi-Newton descent (L-BFGS with line search).

    Builds descent directions from gradient differences only — no Hessian
    evaluations, which matters for 1 < p < 2 where the gradient is merely
    Hölder at vanishing differences.  The solve stops at the gradient target
    or when the line search can make no further double-precision progress;
    the outer inverse-power loop absorbs the residual inexactness.
    """
    n = len(x0)
    res = minimize(
        obj, x0, jac=grad, method="L-BFGS-B",
        options={
            "maxiter": max_iter,
            # L-BFGS-B tests max|g|; our target is the 2-norm.
            "gtol": gtol / math.sqrt(n),
            "ftol": 1e-18,
            "maxls": 40,
        },
    )
    return res.x, int(res.nit), float(np.linalg.norm(res.jac))


def solve_first_eigenpair(mesh: Mesh, params: KernelParams,
                          opts: SolverOptions = SolverOptions(),
                          initial: DiscreteFunction | None = None) -> EigenPair:
    """First eigenpair for general p by the inverse power scheme."""
    p = params.p
    ii = mesh.interior_indices()
    a, b = mesh.domain.a, mesh.domain.b

    def unpack(x):
        return _embed(mesh, x)

    def E(x):
        return en.energy_total(unpack(x), params)

    def gradE(x):
        return en.energy_gradient(unpack(x), params)[ii]

    if initial is not None:
        u = initial.values[ii].copy()
    else:
        u = interpolate(lambda x: math.sin(math.pi * (x - a) / (b - a)), mesh).values[ii]
    u = u / en.lp_mass(unpack(u), p) ** (1.0 / p)
    lam = E(u)
    history = [lam]
    total_inner = 0
    recoveries = 0
    converged = False
    outer = 0
    for outer in range(1, opts.max_outer + 1):
        bvec = en.lp_mass_gradient(unpack(u), p)[ii] / p

        def obj(x):
            return E(x) / p - float(bvec @ x)

        def grad(x):
            return gradE(x) / p - bvec

        warm = u / lam ** (1.0 / (p - 1.0))
        gtol = opts.inner_tol * (1.0 + abs(lam))
        v, inner_its, _ = _minimize_inner(obj, grad, warm, gtol, opts.max_inner)
        total_inner += inner_its
        nrm = en.lp_mass(unpack(v), p) ** (1.0 / p)
        if nrm <= 0:
            break
        u_new = v / nrm
        if np.sum(u_new) < 0:
            u_new = -u_new
        if np.min(u_new) < -1e-10 * np.max(np.abs(u_new)):
            # sign-changing iterate: taking |u| cannot increase the energy
            u_new = np.abs(u_new)
            u_new = u_new / en.lp_mass(unpack(u_new), p) ** (1.0 / p)
            recoveries += 1
        lam_new = E(u_new)
        step_p = en.lp_mass(unpack(u_new - u), p) ** (1.0 / p)
        dl = abs(lam_new - lam)
        history.append(lam_new)
        u, lam = u_new, lam_new
        if dl <= opts.tol_lambda * max(1.0, abs(lam)) and step_p <= opts.tol_u:
            converged = True
            break

    uf = unpack(u)
    resvec = gradE(u) - lam * en.lp_mass_gradient(uf, p)[ii]
    residual = float(np.linalg.norm(resvec))
    return EigenPair(
        lam=float(lam),
        eigenfunction=uf,
        index_k=1,
        residual=residual,
        iterations=outer,
        converged=converged,
        diagnostics={
            "inner_iterations": total_inner,
            "recoveries": recoveries,
            "rayleigh_history": history,
        },
    )


def _first_zero(p: float, lam: float, t_max: float):
    """Location of the first zero of the p-Laplacian shooting solution, or None."""
    pm1 = p - 1.0

    def rhs(_t, z):
        u, w = z
        du = np.sign(w) * np.abs(w) ** (1.0 / pm1)
        dw = -lam * np.sign(u) * np.abs(u) ** pm1
        return (du, dw)

    def hit_zero(t, z):
        return z[0] if t > 1e-12 else 1.0

    hit_zero.terminal = True
    hit_zero.direction = -1
    sol = solve_ivp(rhs, (0.0, t_max), (0.0, 1.0), method="DOP853",
                    rtol=1e-12, atol=1e-14, events=hit_zero, dense_output=False)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0])
    return None


def shooting_oracle_lambda1(p: float, length: float) -> float:
    """First local p-Laplacian eigenvalue by shooting + bisection on lambda."""
    if not p > 1.0:
        raise ValueError(f"exponent p must exceed 1, got {p}")
    t_max = 8.0 * length

    def zero_pos(lam):
        z = _first_zero(p, lam, t_max)
        return z if z is not None else math.inf

    lo, hi = 1.0, 1.0
    for _ in range(80):
        if zero_pos(lo) > length:
            break
        lo /= 2.0
    else:
        raise OracleFailureError("could not bracket the eigenvalue from below")
    for _ in range(80):
        if zero_pos(hi) < length:
            break
        hi *= 2.0
    else:
        raise OracleFailureError("could not bracket the eigenvalue from above")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        z = zero_pos(mid)
        if abs(z - length) <= 1e-10:
            return mid
        if z > length:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * hi:
            break
    return 0.5 * (lo + hi)


_MATRIX_MAGIC = b"PSPD\x01\x00"


def save_matrix(path, A: np.ndarray):
    """Dense row-major float64 dump with a small header carrying n."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    n, m = A.shape
    with open(path, "wb") as fh:
        fh.write(_MATRIX_MAGIC)
        fh.write(struct.pack("<QQ", n, m))
        fh.write(A.tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MATRIX_MAGIC))
        if magic != _MATRIX_MAGIC:
            raise ValueError("not a perispec matrix file")
        n, m = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(8 * n * m), dtype="<f8")
    return data.reshape(n, m).copy()


def local_reference_lambda(p: float, length: float, k: int = 1) -> float:
    """Reference local eigenvalue: exact for p=2, shooting oracle for k=1 otherwise."""
    if abs(p - 2.0) < 1e-12:
        return (k * math.pi / length) ** 2
    if k != 1:
        raise ValueError("local reference beyond k=1 is only available at p=2")
    return local_p_laplacian_lambda1(p, length)
