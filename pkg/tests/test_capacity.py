import math

import numpy as np
import pytest

from slitlab import capacity, eigensolve, fem
from slitlab.asymptotics import TaylorTable, kappa1, taylor_truncate
from slitlab.errors import EmptySlit, MeshMismatch, NotOrthonormal, ZeroCapacity
from slitlab.geometry import MeshParams, Rectangle, SlitSpec, generate_mesh

PI = math.pi


@pytest.fixture(scope="module")
def workspace():
    mesh = generate_mesh(
        Rectangle(PI, PI),
        SlitSpec((PI / 2, PI / 2), 0.15, 0.0),
        MeshParams(h_max=0.1, tip_levels=8),
    )
    return capacity.CapacityWorkspace(mesh)


class TestPotential:
    def test_zero_data(self, workspace):
        res = workspace.potential(0.0)
        assert res.cap_value == 0.0
        assert np.all(res.potential == 0.0)

    def test_boundary_values_exactly_zero(self, workspace):
        res = workspace.potential(1.0)
        assert np.all(res.potential[workspace.mesh.boundary_nodes] == 0.0)

    def test_prescribed_slit_values(self, workspace):
        data = np.linspace(-1, 1, len(workspace.mesh.slit_nodes))
        res = workspace.potential(data)
        assert np.array_equal(res.potential[workspace.mesh.slit_nodes], data)

    def test_cap_equals_energy(self, workspace):
        res = workspace.potential(1.0)
        e = fem.energy(workspace.k_full, res.potential, res.potential)
        assert abs(res.cap_value - e) <= 1e-12 * abs(e)

    def test_quadratic_scaling_exact(self, workspace):
        r1 = workspace.potential(1.0)
        r3 = workspace.potential(3.0)
        assert r3.cap_value == pytest.approx(9.0 * r1.cap_value, rel=1e-13)

    def test_minimality(self, workspace):
        # random admissible perturbations never decrease the energy
        res = workspace.potential(1.0)
        base = res.cap_value
        k = workspace.k_full
        rng = np.random.default_rng(5)
        frozen = np.concatenate(
            [workspace.mesh.boundary_nodes, workspace.mesh.slit_nodes]
        )
        for _ in range(10):
            d = rng.standard_normal(len(res.potential)) * 0.05
            d[frozen] = 0.0
            v = res.potential + d
            assert fem.energy(k, v, v) >= base - 1e-10 * max(base, 1.0)

    def test_empty_slit(self):
        mesh = generate_mesh(Rectangle(PI, PI), None, MeshParams(h_max=0.2))
        with pytest.raises(EmptySlit):
            capacity.CapacityWorkspace(mesh)

    def test_discrete_harmonicity(self, workspace):
        # stiffness residual vanishes on all free nodes
        res = workspace.potential(1.0)
        r = workspace.k_full @ res.potential
        frozen = np.concatenate(
            [workspace.mesh.boundary_nodes, workspace.mesh.slit_nodes]
        )
        mask = np.ones(len(r), dtype=bool)
        mask[frozen] = False
        assert np.max(np.abs(r[mask])) <= 1e-9 * np.max(np.abs(r))


class TestMutual:
    def test_self_mutual_is_cap(self, workspace):
        r = workspace.potential(1.0)
        assert workspace.mutual(r, r) == pytest.approx(r.cap_value, rel=1e-13)

    def test_zero_data_gives_zero(self, workspace):
        a = workspace.potential(1.0)
        b = workspace.potential(0.0)
        assert workspace.mutual(a, b) == 0.0

    def test_polarization(self, workspace):
        rng = np.random.default_rng(7)
        n = len(workspace.mesh.slit_nodes)
        u, v = rng.standard_normal(n), rng.standard_normal(n)
        ru, rv = workspace.potential(u), workspace.potential(v)
        rp, rm = workspace.potential(u + v), workspace.potential(u - v)
        mutual = workspace.mutual(ru, rv)
        polar = 0.25 * (rp.cap_value - rm.cap_value)
        assert mutual == pytest.approx(polar, rel=1e-10)

    def test_cauchy_schwarz(self, workspace):
        rng = np.random.default_rng(9)
        n = len(workspace.mesh.slit_nodes)
        ru = workspace.potential(rng.standard_normal(n))
        rv = workspace.potential(rng.standard_normal(n))
        bound = math.sqrt(ru.cap_value * rv.cap_value)
        assert abs(workspace.mutual(ru, rv)) <= bound * (1 + 1e-12)

    def test_mesh_mismatch(self, workspace):
        other = generate_mesh(
            Rectangle(PI, PI),
            SlitSpec((PI / 2, PI / 2), 0.1, 0.0),
            MeshParams(h_max=0.15),
        )
        ws2 = capacity.CapacityWorkspace(other)
        a = workspace.potential(1.0)
        b = ws2.potential(1.0)
        with pytest.raises(MeshMismatch):
            capacity.mutual_capacity(workspace.k_full, a, b)


class TestTruncationInvariance:
    def test_capacity_depends_only_on_slit_trace(self, workspace):
        # subtracting the Taylor truncation below kappa1 leaves the slit
        # data unchanged, hence the capacity
        table = TaylorTable.from_entries(
            6, {(2, 0): 1.3, (0, 1): 0.7, (1, 1): -0.4, (0, 2): 2.0}
        )
        assert kappa1(table) == 2
        trunc = taylor_truncate(table, 1)
        mesh = workspace.mesh
        pts = mesh.vertices[mesh.slit_nodes]
        x1 = pts[:, 0] - PI / 2
        x2 = pts[:, 1] - PI / 2
        poly = taylor_truncate(table, 6)
        data_full = poly(x1, x2)
        data_reduced = data_full - trunc(x1, x2)
        a = workspace.potential(data_full)
        b = workspace.potential(data_reduced)
        assert abs(a.cap_value - b.cap_value) <= 1e-12 * max(a.cap_value, 1e-30)


@pytest.fixture(scope="module")
def lambda5():
    mesh = generate_mesh(
        Rectangle(PI, PI),
        SlitSpec((PI / 2, PI / 2), 0.1, 0.0),
        MeshParams(h_max=0.07, tip_levels=10),
    )
    stiffness, mass = fem.assemble(mesh)
    kr, mr, _, dof = fem.constrain(stiffness, mass, mesh.boundary_nodes)
    res = eigensolve.solve_lowest(kr, mr, 3)
    basis = np.column_stack(
        [dof.extend(res.eigenvectors[:, i]) for i in (1, 2)]
    )
    ws = capacity.CapacityWorkspace(mesh, stiffness, mass)
    lam = float(np.mean(res.eigenvalues[1:3]))
    return ws, basis, lam


class TestPerturbationForm:

    def test_matrix_symmetric(self, lambda5):
        ws, basis, lam = lambda5
        form = ws.perturbation_form(basis, lam)
        assert np.max(np.abs(form.matrix - form.matrix.T)) <= 1e-12

    def test_chi_sq_is_top_gram_eigenvalue(self, lambda5):
        ws, basis, lam = lambda5
        form = ws.perturbation_form(basis, lam)
        top = float(np.max(np.linalg.eigvalsh(form.gram)))
        assert form.chi_sq == pytest.approx(top, rel=1e-12)

    def test_mu_ascending_and_bounded_by_cap(self, lambda5):
        ws, basis, lam = lambda5
        form = ws.perturbation_form(basis, lam)
        assert np.all(np.diff(form.mu) >= 0)
        # r_eps <= Cap on each basis vector (second term nonnegative)
        assert np.all(np.diag(form.matrix) <= np.diag(form.gram) + 1e-15)

    def test_split_structure(self, lambda5):
        # one branch nearly invisible to the slit, the other at ~16/pi eps^2
        ws, basis, lam = lambda5
        form = ws.perturbation_form(basis, lam)
        eps = 0.1
        predicted = 16.0 / PI * eps ** 2
        assert form.mu[0] == pytest.approx(0.0, abs=0.05 * predicted)
        assert form.mu[1] == pytest.approx(predicted, rel=0.25)

    def test_not_orthonormal(self, lambda5):
        ws, basis, lam = lambda5
        with pytest.raises(NotOrthonormal):
            ws.perturbation_form(2.0 * basis, lam)

    def test_one_dim_basis_vanishing_on_slit_gives_zero_matrix(self, lambda5):
        # a normalized field with zero slit trace produces the 1x1 zero form
        ws, basis, lam = lambda5
        v = np.ones(ws.mesh.n_vertices)
        v[ws.mesh.slit_nodes] = 0.0
        v[ws.mesh.boundary_nodes] = 0.0
        v /= math.sqrt(float(v @ (ws.m_full @ v)))
        form = ws.perturbation_form(v[:, None], lam)
        assert form.dimension == 1
        assert form.matrix[0, 0] == 0.0
        assert form.chi_sq == 0.0

    def test_single_mode_vanishing_on_slit(self, lambda5):
        # the combination closest to sin(x)sin(2y) vanishes on the slit line
        ws, basis, lam = lambda5
        data = basis[ws.mesh.slit_nodes, :]
        weights = np.linalg.svd(data)[2][-1]  # direction with least slit trace
        combo = basis @ weights
        res = ws.potential(combo[ws.mesh.slit_nodes])
        full_scale = ws.perturbation_form(basis, lam).chi_sq
        assert res.cap_value <= 1e-4 * full_scale


def test_one_shot_potential_function():
    mesh = generate_mesh(
        Rectangle(PI, PI),
        SlitSpec((PI / 2, PI / 2), 0.1, 0.0),
        MeshParams(h_max=0.15),
    )
    res = capacity.potential(mesh, 1.0)
    assert res.cap_value > 0
    assert np.all(res.potential[mesh.boundary_nodes] == 0.0)


class TestL2Ratio:
    def test_nonnegative(self, workspace):
        res = workspace.potential(1.0)
        assert capacity.potential_l2_ratio(res) >= 0.0

    def test_zero_capacity_raises(self, workspace):
        res = workspace.potential(0.0)
        with pytest.raises(ZeroCapacity):
            capacity.potential_l2_ratio(res)

    def test_decreasing_along_eps(self):
        ratios = []
        for eps in (0.2, 0.1, 0.05):
            mesh = generate_mesh(
                Rectangle(PI, PI),
                SlitSpec((PI / 2, PI / 2), eps, 0.0),
                MeshParams(h_max=0.12, tip_levels=8),
            )
            ws = capacity.CapacityWorkspace(mesh)
            ratios.append(capacity.potential_l2_ratio(ws.potential(1.0)))
        assert ratios[0] > ratios[1] > ratios[2]
