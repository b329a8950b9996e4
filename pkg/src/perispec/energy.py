"""Discrete nonlocal p-energies on piecewise-linear functions.

The seminorm is assembled element-pair by element-pair:

* same-element pairs have a closed form (the integrand reduces to
  |slope|^p |x-y|^(p(1-s)-1));
* vertex-sharing pairs are reduced to a 1-D integral in the direction
  transverse to the diagonal (the radial integral is elementary because the
  integrand is homogeneous there), leaving a smooth profile integrated by
  composite Gauss panels;
* separated pairs use tensor Gauss quadrature, with the cutoff-truncated pair
  at distance exactly delta handled on its triangular subregion.

For meshes without a collar (horizon at least the domain length, or infinite)
the collar/complement interaction is integrated analytically in the y
variable, leaving a weighted L^p term with kernel
k(x) = (1/(ps)) ((x-a)^-ps + (b-x)^-ps [- 2 delta^-ps]).

All quadrature tableaux are cached per (mesh, s, p, delta); energies, exact
gradients and the p=2 quadratic-form assembly all evaluate the same tableau,
so the polarization identity holds to rounding error.
"""

from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .kernelmath import KernelParams, scaling_factor
from .mesh import DiscreteFunction, Mesh


class InconsistentHorizonError(ValueError):
    """Kernel horizon does not match the horizon the mesh represents."""


class ConstraintViolationError(ValueError):
    """Function is nonzero on the collar / outside the domain."""


# quadrature controls
_PAIR_ORDER_SMOOTH = 6      # tensor order when |.|^p is polynomial (even integer p)
_PAIR_ORDER_KINK = 10       # tensor order for p >= 2 (|.|^p ridge is C^(p-1)-smooth)
_PAIR_ORDER_HOLDER = 20     # tensor order for 1 < p < 2 (|.|^p ridge is barely C^1)
_ADJ_PANELS = 4             # composite panels per half for the vertex-pair profile
_ADJ_ORDER = 10
_TAIL_ORDER = 16            # per-element order for the analytic-tail weight
_TAIL_ORDER_HOLDER = 32
_TAIL_LEVELS = 6            # graded levels toward the domain endpoints
_TAIL_RATIO = 0.15


def _gauss01(order: int):
    x, w = leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@dataclass(frozen=True)
class EnergyBreakdown:
    """Nonlocal energy split into the domain-domain part and the collar cross terms."""

    principal: float
    interaction: float
    total: float
    quadrature_order: int
    delta_effective: float

    def to_json_dict(self) -> dict:
        return {
            "principal": self.principal,
            "interaction": self.interaction,
            "total": self.total,
            "quadrature_order": self.quadrature_order,
            "delta_effective": "INF" if math.isinf(self.delta_effective) else self.delta_effective,
        }


class _Tableau:
    """Flattened quadrature rule for one (mesh, s, p, delta) combination."""

    def __init__(self, mesh: Mesh, params: KernelParams):
        self.nn = len(mesh.nodes)
        self.h = mesh.h
        self.p = params.p
        self.delta = params.delta
        p, s, h = params.p, params.s, mesh.h
        ps = p * s
        alpha = p * (1.0 - s)
        near_even = abs(p - round(p)) < 1e-12 and int(round(p)) % 2 == 0
        if near_even:
            self.quadrature_order = _PAIR_ORDER_SMOOTH
        elif p >= 2.0:
            self.quadrature_order = _PAIR_ORDER_KINK
        else:
            self.quadrature_order = _PAIR_ORDER_HOLDER
        q = self.quadrature_order
        tail_order = _TAIL_ORDER if p >= 2.0 else _TAIL_ORDER_HOLDER

        ne = mesh.element_count
        collar = mesh.collar_cells
        nin = mesh.n_interior_elements
        omega_lo, omega_hi = collar, collar + nin  # Omega elements are [omega_lo, omega_hi)

        if mesh.has_collar and not params.is_infinite:
            # truncated regime on the collar mesh
            if not math.isclose(params.delta, mesh.delta_effective,
                                rel_tol=1e-9, abs_tol=1e-12):
                raise InconsistentHorizonError(
                    f"kernel horizon {params.delta} does not match mesh "
                    f"delta_effective {mesh.delta_effective}"
                )
            r = collar_r = int(round(params.delta / h))
            gaps = range(1, r + 1)
            truncated_gap = r
            tail_kernel = None
            elem_range = range(ne)
        else:
            # collarless mesh (or collar mesh at infinite horizon): full pair set
            # over Omega elements plus the analytic complement/collar tail.
            length = mesh.domain.length
            if not params.is_infinite and params.delta < length * (1.0 - 1e-12):
                raise InconsistentHorizonError(
                    f"collarless assembly needs delta >= |Omega|={length}, got {params.delta}"
                )
            r = None
            gaps = range(1, nin)
            truncated_gap = -1
            a, b = mesh.domain.a, mesh.domain.b
            if params.is_infinite:
                shift = 0.0
            else:
                shift = 2.0 / (ps * params.delta ** ps)

            def tail_kernel(x, _a=a, _b=b, _ps=ps, _shift=shift):
                return (np.power(x - _a, -_ps) + np.power(_b - x, -_ps)) / _ps - _shift

            elem_range = range(omega_lo, omega_hi)

        def is_omega(e):
            return omega_lo <= e < omega_hi

        # same-element closed form over Omega elements
        self.same_elems = np.array([e for e in elem_range if is_omega(e)], dtype=np.int64)
        self.same_coef = 2.0 * h ** (1.0 - ps) / (alpha * (alpha + 1.0))

        gx, gw = _gauss01(q)
        xe_blocks, xt_blocks, ye_blocks, yt_blocks, w_blocks, cross_blocks = \
            [], [], [], [], [], []
        self.block_slices = []
        pos = 0

        # adjacent (vertex-sharing) template: 1-D profile in tau
        tn, tw = [], []
        ax, aw = _gauss01(_ADJ_ORDER)
        for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
            width = (hi - lo) / _ADJ_PANELS
            for k in range(_ADJ_PANELS):
                tn.append(lo + width * (k + ax))
                tw.append(width * aw)
        tau = np.concatenate(tn)
        wtau = np.concatenate(tw)

        for g in gaps:
            lo_e = elem_range.start
            hi_e = elem_range.stop - g
            elems = np.array(
                [e for e in range(lo_e, hi_e)
                 if is_omega(e) or is_omega(e + g)],
                dtype=np.int64,
            )
            if len(elems) == 0:
                continue
            cross = np.array([not (is_omega(e) and is_omega(e + g)) for e in elems])
            if g == 1:
                that = np.ones_like(tau) if truncated_gap == 1 \
                    else 1.0 / np.maximum(tau, 1.0 - tau)
                xt = 1.0 - that * (1.0 - tau)
                yt = that * tau
                wq = 2.0 * wtau * (h * that) ** (1.0 - ps) / (alpha + 1.0)
                xloc, yloc = xt, yt
                xoff = np.zeros_like(xt, dtype=np.int64)
            elif g == truncated_gap:
                # triangular subregion eta < xi of the cutoff pair; the rule
                # is symmetrized with its mirror image so reflecting the
                # function reproduces the energy to rounding error
                xi = np.repeat(gx, q)
                eta = xi * np.tile(gx, q)
                half = (np.repeat(gw, q) * np.tile(gw, q) * xi
                        * h ** (1.0 - ps) * (g + eta - xi) ** (-(1.0 + ps)))
                wq = np.concatenate([half, half])
                xloc = np.concatenate([xi, 1.0 - eta])
                yloc = np.concatenate([eta, 1.0 - xi])
                xoff = np.zeros_like(xloc, dtype=np.int64)
            else:
                xi = np.repeat(gx, q)
                eta = np.tile(gx, q)
                wq = (2.0 * np.repeat(gw, q) * np.tile(gw, q)
                      * h ** (1.0 - ps) * (g + eta - xi) ** (-(1.0 + ps)))
                xloc, yloc = xi, eta
                xoff = np.zeros_like(xi, dtype=np.int64)
            t = len(xloc)
            m = len(elems)
            xe_blocks.append(np.repeat(elems, t) + np.tile(xoff, m))
            xt_blocks.append(np.tile(xloc, m))
            ye_blocks.append(np.repeat(elems + g, t))
            yt_blocks.append(np.tile(yloc, m))
            w_blocks.append(np.tile(wq, m))
            cross_blocks.append(np.repeat(cross, t))
            self.block_slices.append(slice(pos, pos + t * m))
            pos += t * m

        if pos:
            self.xe = np.concatenate(xe_blocks)
            self.xt = np.concatenate(xt_blocks)
            self.ye = np.concatenate(ye_blocks)
            self.yt = np.concatenate(yt_blocks)
            self.w = np.concatenate(w_blocks)
            self.cross = np.concatenate(cross_blocks)
        else:
            self.xe = np.zeros(0, dtype=np.int64)
            self.xt = self.yt = self.w = np.zeros(0)
            self.ye = np.zeros(0, dtype=np.int64)
            self.cross = np.zeros(0, dtype=bool)

        # analytic tail: weighted L^p term over Omega, graded toward the endpoints
        if tail_kernel is not None:
            tx, twt = _gauss01(tail_order)
            ze, zt, zw = [], [], []
            nodes = mesh.nodes
            for e in range(omega_lo, omega_hi):
                if e == omega_lo:
                    bps = np.concatenate(
                        ([0.0], _TAIL_RATIO ** np.arange(_TAIL_LEVELS, -1, -1.0)))
                elif e == omega_hi - 1:
                    bps = 1.0 - np.concatenate(
                        ([0.0], _TAIL_RATIO ** np.arange(_TAIL_LEVELS, -1, -1.0)))[::-1]
                else:
                    bps = np.array([0.0, 1.0])
                for lo, hi in zip(bps[:-1], bps[1:]):
                    loc = lo + (hi - lo) * tx
                    x = nodes[e] + h * loc
                    ze.append(np.full(len(loc), e, dtype=np.int64))
                    zt.append(loc)
                    zw.append(2.0 * (hi - lo) * h * twt * tail_kernel(x))
            self.ze = np.concatenate(ze)
            self.zt = np.concatenate(zt)
            self.zw = np.concatenate(zw)
        else:
            self.ze = np.zeros(0, dtype=np.int64)
            self.zt = self.zw = np.zeros(0)


_CACHE: "OrderedDict[tuple, _Tableau]" = OrderedDict()
_CACHE_CAP = 24
_CACHE_LOCK = threading.Lock()


def _tableau(mesh: Mesh, params: KernelParams) -> _Tableau:
    key = (mesh.fingerprint, params.s, params.p, params.delta)
    with _CACHE_LOCK:
        tab = _CACHE.get(key)
        if tab is not None:
            _CACHE.move_to_end(key)
            return tab
    tab = _Tableau(mesh, params)
    with _CACHE_LOCK:
        existing = _CACHE.get(key)
        if existing is not None:
            return existing
        _CACHE[key] = tab
        while len(_CACHE) > _CACHE_CAP:
            _CACHE.popitem(last=False)
    return tab


def _check_constrained(u: DiscreteFunction):
    if not u.collar_is_zero():
        raise ConstraintViolationError("function is nonzero on the collar / boundary nodes")


def _pair_diffs(tab: _Tableau, vals: np.ndarray) -> np.ndarray:
    ux = vals[tab.xe] * (1.0 - tab.xt) + vals[tab.xe + 1] * tab.xt
    uy = vals[tab.ye] * (1.0 - tab.yt) + vals[tab.ye + 1] * tab.yt
    return ux - uy


def _energy_total(tab: _Tableau, vals: np.ndarray) -> float:
    p = tab.p
    acc = 0.0
    if len(tab.w):
        d = _pair_diffs(tab, vals)
        acc += float(np.dot(tab.w, np.abs(d) ** p))
    if len(tab.same_elems):
        dm = vals[tab.same_elems + 1] - vals[tab.same_elems]
        acc += tab.same_coef * float(np.sum(np.abs(dm) ** p))
    if len(tab.zw):
        uz = vals[tab.ze] * (1.0 - tab.zt) + vals[tab.ze + 1] * tab.zt
        acc += float(np.dot(tab.zw, np.abs(uz) ** p))
    return acc


def _energy_parts(tab: _Tableau, vals: np.ndarray):
    """(principal, interaction) with per-block compensated merging."""
    p = tab.p
    principal_terms, interaction_terms = [], []
    if len(tab.w):
        contrib = tab.w * np.abs(_pair_diffs(tab, vals)) ** p
        for sl in tab.block_slices:
            c = contrib[sl]
            x = tab.cross[sl]
            principal_terms.append(float(np.sum(c[~x])))
            interaction_terms.append(float(np.sum(c[x])))
    if len(tab.same_elems):
        dm = vals[tab.same_elems + 1] - vals[tab.same_elems]
        principal_terms.append(tab.same_coef * float(np.sum(np.abs(dm) ** p)))
    if len(tab.zw):
        uz = vals[tab.ze] * (1.0 - tab.zt) + vals[tab.ze + 1] * tab.zt
        interaction_terms.append(float(np.dot(tab.zw, np.abs(uz) ** p)))
    return math.fsum(principal_terms), math.fsum(interaction_terms)


def _energy_gradient(tab: _Tableau, vals: np.ndarray) -> np.ndarray:
    p = tab.p
    nn = tab.nn
    grad = np.zeros(nn)
    if len(tab.w):
        d = _pair_diffs(tab, vals)
        g = p * tab.w * np.abs(d) ** (p - 1.0) * np.sign(d)
        grad += np.bincount(tab.xe, g * (1.0 - tab.xt), minlength=nn)
        grad += np.bincount(tab.xe + 1, g * tab.xt, minlength=nn)
        grad -= np.bincount(tab.ye, g * (1.0 - tab.yt), minlength=nn)
        grad -= np.bincount(tab.ye + 1, g * tab.yt, minlength=nn)
    if len(tab.same_elems):
        dm = vals[tab.same_elems + 1] - vals[tab.same_elems]
        gm = p * tab.same_coef * np.abs(dm) ** (p - 1.0) * np.sign(dm)
        grad += np.bincount(tab.same_elems + 1, gm, minlength=nn)
        grad -= np.bincount(tab.same_elems, gm, minlength=nn)
    if len(tab.zw):
        uz = vals[tab.ze] * (1.0 - tab.zt) + vals[tab.ze + 1] * tab.zt
        gz = p * tab.zw * np.abs(uz) ** (p - 1.0) * np.sign(uz)
        grad += np.bincount(tab.ze, gz * (1.0 - tab.zt), minlength=nn)
        grad += np.bincount(tab.ze + 1, gz * tab.zt, minlength=nn)
    return grad


def nonlocal_energy(u: DiscreteFunction, params: KernelParams) -> EnergyBreakdown:
    """Truncated seminorm of u to the p-th power, split principal/interaction."""
    if params.is_infinite:
        raise InconsistentHorizonError("use fractional_energy for the infinite horizon")
    _check_constrained(u)
    tab = _tableau(u.mesh, params)
    principal, interaction = _energy_parts(tab, u.values)
    return EnergyBreakdown(
        principal=principal,
        interaction=interaction,
        total=principal + interaction,
        quadrature_order=tab.quadrature_order,
        delta_effective=params.delta,
    )


def nonlocal_energy_gradient(u: DiscreteFunction, params: KernelParams) -> np.ndarray:
    """Exact nodal gradient of the discrete truncated energy (collar entries included)."""
    if params.is_infinite:
        raise InconsistentHorizonError("use fractional_energy_gradient for the infinite horizon")
    _check_constrained(u)
    return _energy_gradient(_tableau(u.mesh, params), u.values)


def fractional_energy(u: DiscreteFunction, params: KernelParams) -> float:
    """Untruncated seminorm^p with the complement tail integrated analytically."""
    if not params.is_infinite:
        raise ValueError("fractional_energy requires delta=INFINITE kernel parameters")
    _check_constrained(u)
    return _energy_total(_tableau(u.mesh, params), u.values)


def fractional_energy_gradient(u: DiscreteFunction, params: KernelParams) -> np.ndarray:
    if not params.is_infinite:
        raise ValueError("fractional_energy_gradient requires delta=INFINITE")
    _check_constrained(u)
    return _energy_gradient(_tableau(u.mesh, params), u.values)


def scaled_energy(u: DiscreteFunction, params: KernelParams) -> float:
    """Small-horizon rescaling p(1-s)/delta^(p(1-s)) times the truncated energy."""
    return scaling_factor(params) * nonlocal_energy(u, params).total


def local_gradient_energy(u: DiscreteFunction, p: float) -> float:
    """Exact integral of |u'|^p over Omega for piecewise-linear u."""
    mesh = u.mesh
    lo = mesh.collar_cells
    hi = lo + mesh.n_interior_elements
    dm = np.diff(u.values[lo:hi + 1])
    return float(np.sum(np.abs(dm) ** p)) * mesh.h ** (1.0 - p)


def _omega_quad_points(mesh: Mesh):
    gx, gw = _gauss01(_TAIL_ORDER)
    lo = mesh.collar_cells
    hi = lo + mesh.n_interior_elements
    elems = np.arange(lo, hi, dtype=np.int64)
    ze = np.repeat(elems, len(gx))
    zt = np.tile(gx, len(elems))
    zw = np.tile(gw * mesh.h, len(elems))
    return ze, zt, zw


def lp_mass(u: DiscreteFunction, p: float) -> float:
    """Integral of |u|^p over Omega by per-element Gauss quadrature."""
    ze, zt, zw = _omega_quad_points(u.mesh)
    uz = u.values[ze] * (1.0 - zt) + u.values[ze + 1] * zt
    return float(np.dot(zw, np.abs(uz) ** p))


def lp_mass_gradient(u: DiscreteFunction, p: float) -> np.ndarray:
    """Exact nodal gradient of lp_mass under the same quadrature."""
    nn = len(u.mesh.nodes)
    ze, zt, zw = _omega_quad_points(u.mesh)
    uz = u.values[ze] * (1.0 - zt) + u.values[ze + 1] * zt
    g = p * zw * np.abs(uz) ** (p - 1.0) * np.sign(uz)
    grad = np.bincount(ze, g * (1.0 - zt), minlength=nn)
    grad += np.bincount(ze + 1, g * zt, minlength=nn)
    return grad


def energy_total(u: DiscreteFunction, params: KernelParams) -> float:
    """Total seminorm^p for any horizon (finite truncated or infinite)."""
    if params.is_infinite:
        return fractional_energy(u, params)
    return nonlocal_energy(u, params).total


def energy_gradient(u: DiscreteFunction, params: KernelParams) -> np.ndarray:
    if params.is_infinite:
        return fractional_energy_gradient(u, params)
    return nonlocal_energy_gradient(u, params)
