import math

import numpy as np
import pytest

from perispec.kernelmath import (
    INFINITE,
    KernelParams,
    local_p_laplacian_lambda1,
    p_pi,
)
from perispec.mesh import DiscreteFunction, DomainSpec, build_mesh, interpolate
from perispec.energy import energy_total, lp_mass
from perispec.eigensolver import (
    SolverOptions,
    WrongExponentError,
    assemble_p2_matrices,
    load_matrix,
    local_reference_lambda,
    save_matrix,
    shooting_oracle_lambda1,
    solve_first_eigenpair,
    solve_p2_spectrum,
)


def embed(mesh, x):
    vals = np.zeros(len(mesh.nodes))
    vals[mesh.interior_indices()] = x
    return DiscreteFunction(vals, mesh)


class TestP2Assembly:
    @pytest.mark.parametrize("delta", [0.25, INFINITE])
    def test_quadratic_form_matches_energy(self, delta):
        mesh = build_mesh(DomainSpec(0.0, 1.0, delta), 12)
        params = KernelParams(0.5, 2.0, delta if math.isinf(delta) else mesh.delta_effective)
        A, _ = assemble_p2_matrices(mesh, params)
        rng = np.random.default_rng(11)
        for _ in range(20):
            x = rng.standard_normal(A.shape[0])
            quad_form = float(x @ A @ x)
            via_energy = energy_total(embed(mesh, x), params)
            assert abs(quad_form - via_energy) <= 1e-10 * abs(via_energy)

    def test_stiffness_symmetric(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 12)
        A, _ = assemble_p2_matrices(mesh, KernelParams(0.5, 2.0, mesh.delta_effective))
        assert np.max(np.abs(A - A.T)) == 0.0

    def test_mass_row_sums(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 12)
        _, M = assemble_p2_matrices(mesh, KernelParams(0.5, 2.0, mesh.delta_effective))
        sums = M.sum(axis=1)
        # interior rows see the full hat: h*(1/6 + 4/6 + 1/6) = h
        assert np.allclose(sums[1:-1], mesh.h, rtol=1e-14)
        assert M.T is not M and np.max(np.abs(M - M.T)) == 0.0

    def test_wrong_exponent(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 12)
        with pytest.raises(WrongExponentError):
            assemble_p2_matrices(mesh, KernelParams(0.5, 3.0, mesh.delta_effective))


class TestP2Spectrum:
    def test_ordering_and_first_gap(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        pairs = solve_p2_spectrum(mesh, KernelParams(0.5, 2.0, 0.25), 4)
        lams = [ep.lam for ep in pairs]
        assert lams[0] < lams[1] - 1e-8  # simplicity of the first eigenvalue
        assert all(a <= b + 1e-12 for a, b in zip(lams, lams[1:]))
        assert all(ep.residual <= 1e-8 for ep in pairs)

    def test_eigenfunctions_normalized(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        pairs = solve_p2_spectrum(mesh, KernelParams(0.5, 2.0, 0.25), 3)
        for ep in pairs:
            assert lp_mass(ep.eigenfunction, 2.0) == pytest.approx(1.0, rel=1e-10)

    def test_first_eigenfunction_sign_constant_second_changes_once(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 32)
        pairs = solve_p2_spectrum(mesh, KernelParams(0.5, 2.0, 0.25), 2)
        first = pairs[0].eigenfunction.values[mesh.interior_mask]
        if first.sum() < 0:
            first = -first
        assert np.all(first > -1e-12 * np.max(np.abs(first)))
        second = pairs[1].eigenfunction.values[mesh.interior_mask]
        signs = np.sign(second[np.abs(second) > 1e-10 * np.max(np.abs(second))])
        changes = int(np.sum(signs[:-1] != signs[1:]))
        assert changes == 1

    def test_eigenvalues_monotone_in_horizon(self):
        params_small = KernelParams(0.5, 2.0, 0.25)
        params_large = KernelParams(0.5, 2.0, 0.5)
        mesh_small = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        mesh_large = build_mesh(DomainSpec(0.0, 1.0, 0.5), 16)
        small = [ep.lam for ep in solve_p2_spectrum(mesh_small, params_small, 5)]
        large = [ep.lam for ep in solve_p2_spectrum(mesh_large, params_large, 5)]
        assert all(a <= b + 1e-12 for a, b in zip(small, large))

    def test_h_refinement_extrapolation_self_consistent(self):
        params = KernelParams(0.5, 2.0, INFINITE)
        lams = []
        for n in (32, 64, 128):
            mesh = build_mesh(DomainSpec(0.0, 1.0, INFINITE), n)
            lams.append(solve_p2_spectrum(mesh, params, 1)[0].lam)
        v1, v2, v3 = lams
        r = (v3 - v2) / (v2 - v1)
        assert 0.0 < r < 1.0
        l23 = v3 + (v3 - v2) * r / (1.0 - r)
        l12 = v2 + (v2 - v1) * r / (1.0 - r)
        assert abs(l23 - l12) / abs(l23) <= 0.005


class TestInversePower:
    def test_p2_agrees_with_matrix_path(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        params = KernelParams(0.5, 2.0, mesh.delta_effective)
        lam_matrix = solve_p2_spectrum(mesh, params, 1)[0].lam
        ep = solve_first_eigenpair(mesh, params)
        assert ep.converged
        assert abs(ep.lam - lam_matrix) / lam_matrix <= 1e-8

    def test_initializer_scale_invariance(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        params = KernelParams(0.5, 2.5, mesh.delta_effective)
        base = solve_first_eigenpair(mesh, params)
        doubled = interpolate(lambda x: 2.0 * math.sin(math.pi * x), mesh)
        again = solve_first_eigenpair(mesh, params, initial=doubled)
        assert abs(base.lam - again.lam) <= 1e-10 * base.lam

    def test_rayleigh_quotient_nonincreasing(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        params = KernelParams(0.5, 3.0, mesh.delta_effective)
        ep = solve_first_eigenpair(mesh, params)
        history = ep.diagnostics["rayleigh_history"]
        for before, after in zip(history, history[1:]):
            assert after <= before * (1.0 + 1e-10)

    def test_rayleigh_probe_lower_bound(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        params = KernelParams(0.5, 3.0, mesh.delta_effective)
        ep = solve_first_eigenpair(mesh, params)
        assert ep.converged
        # lambda equals the quotient of its own eigenfunction
        quotient = energy_total(ep.eigenfunction, params) / lp_mass(ep.eigenfunction, 3.0)
        assert quotient == pytest.approx(ep.lam, rel=1e-10)
        rng = np.random.default_rng(SolverOptions().seed)
        n = int(mesh.interior_mask.sum())
        for _ in range(100):
            v = embed(mesh, rng.standard_normal(n))
            probe = energy_total(v, params) / lp_mass(v, 3.0)
            assert probe >= ep.lam * (1.0 - 1e-8)

    def test_first_eigenfunction_nonnegative_general_p(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 16)
        params = KernelParams(0.5, 3.0, mesh.delta_effective)
        ep = solve_first_eigenpair(mesh, params)
        vals = ep.eigenfunction.values
        assert np.all(vals >= -1e-10 * np.max(np.abs(vals)))

    def test_serialization(self):
        mesh = build_mesh(DomainSpec(0.0, 1.0, 0.25), 8)
        params = KernelParams(0.5, 2.0, mesh.delta_effective)
        d = solve_first_eigenpair(mesh, params).to_json_dict()
        assert {"lambda", "k", "residual", "iterations", "converged"} <= set(d)


class TestShootingOracle:
    def test_p2_recovers_pi_squared(self):
        assert abs(shooting_oracle_lambda1(2.0, 1.0) - math.pi ** 2) <= 1e-8 * math.pi ** 2

    def test_p3_matches_closed_form(self):
        closed = 2.0 * p_pi(3.0) ** 3
        assert abs(shooting_oracle_lambda1(3.0, 1.0) - closed) / closed <= 1e-6

    @pytest.mark.parametrize("p", [1.5, 2.5])
    def test_length_two_scaling(self, p):
        v1 = shooting_oracle_lambda1(p, 1.0)
        v2 = shooting_oracle_lambda1(p, 2.0)
        assert v2 == pytest.approx(v1 / 2.0 ** p, rel=1e-7)

    def test_local_reference_dispatch(self):
        assert local_reference_lambda(2.0, 1.0, 3) == pytest.approx(9 * math.pi ** 2,
                                                                    rel=1e-14)
        assert local_reference_lambda(3.0, 1.0, 1) == pytest.approx(
            local_p_laplacian_lambda1(3.0, 1.0), rel=1e-8)


class TestMatrixIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((7, 7))
        path = tmp_path / "matrix.bin"
        save_matrix(path, A)
        assert np.array_equal(load_matrix(path), A)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a matrix at all")
        with pytest.raises(ValueError):
            load_matrix(path)
