import numpy as np
import pytest
import scipy.sparse as sp

from hdgcontrol.discretization import Space
from hdgcontrol.hdg import (ConfigurationError, HdgField, HdgOperator, HdgOperatorConfig,
                            SolverError, TraceSystem, assemble_local, bilinear_form, condense,
                            local_operator, numerical_flux, recover_local, solve_trace,
                            stabilization, transmission_residual)
from hdgcontrol.mesh import make_mesh, refine_nvb
from hdgcontrol.problems import lshape_mesh, square_mesh

MESHES = {
    "square4": lambda: square_mesh(4),
    "lshape_graded": lambda: refine_nvb(refine_nvb(lshape_mesh(), [0, 1, 5])[0], [0, 2, 3])[0],
    "skewed": lambda: make_mesh([(0, 0), (2, 0.1), (0.4, 1.3), (2.2, 1.7), (1.1, -0.9)],
                                [(0, 1, 2), (1, 3, 2), (0, 4, 1)]),
}


def random_triple(space, rng):
    nt, nb, nf = space.mesh.n_elements, space.nb, space.nf
    return (rng.standard_normal((nt, 2, nb)), rng.standard_normal((nt, nb)),
            rng.standard_normal((space.mesh.n_faces, nf)))


def energy_norms(space, tau, v):
    """||r||^2 + ||w||^2 + <tau (w - mu), w - mu> evaluated pointwise by quadrature."""
    r, w, mu = v
    mesh = space.mesh
    rq = np.einsum("eqi,edi->eqd", space.phi, r)
    wq = space.eval_element(w)
    jump = space.eval_element_boundary(w) - np.einsum("elqm,elm->elq", space.psi_b, mu[mesh.elem_faces])
    return (np.sum(space.W[..., None] * rq ** 2) + np.sum(space.W * wq ** 2)
            + np.sum(tau[:, None, None] * space.WB * jump ** 2))


def local_vector(space, v):
    r, w, mu = v
    lam = mu[space.mesh.elem_faces].reshape(space.mesh.n_elements, -1)
    return np.concatenate([r[:, 0], r[:, 1], w, lam], axis=1)


@pytest.mark.parametrize("name", sorted(MESHES))
@pytest.mark.parametrize("k", [1, 2])
def test_energy_identity(name, k):
    space = Space(MESHES[name](), k)
    tau = stabilization(space.mesh, 1.0)
    L = assemble_local(space, tau)
    rng = np.random.default_rng(hash((name, k)) % 2**32)
    for _ in range(34):
        v = random_triple(space, rng)
        rhs = energy_norms(space, tau, v)
        lhs = bilinear_form(space, tau, v, v)
        assert abs(lhs - rhs) <= 1e-10 * abs(rhs)
        x = local_vector(space, v)
        via_matrix = np.einsum("ei,eij,ej->", x, L, x)
        assert abs(via_matrix - lhs) <= 1e-10 * abs(rhs)


@pytest.mark.parametrize("k", [1, 2])
def test_antisymmetric_pairing_cancels(k):
    space = Space(MESHES["lshape_graded"](), k)
    tau = stabilization(space.mesh, 1.0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        p, y, yh = random_triple(space, rng)
        q, z, zh = random_triple(space, rng)
        a = bilinear_form(space, tau, (p, y, yh), (q, -z, -zh))
        b = bilinear_form(space, tau, (q, z, zh), (-p, y, yh))
        scale = abs(bilinear_form(space, tau, (p, y, yh), (p, y, yh))) + abs(
            bilinear_form(space, tau, (q, z, zh), (q, z, zh)))
        assert abs(a + b) <= 1e-12 * scale


def test_zero_arguments_give_zero():
    space = Space(square_mesh(2), 1)
    L = local_operator(space, 0, stabilization(space.mesh))
    assert np.all(L @ np.zeros(L.shape[0]) == 0)
    zero = (np.zeros((8, 2, 3)), np.zeros((8, 3)), np.zeros((space.mesh.n_faces, 2)))
    assert bilinear_form(space, 1.0, zero, zero) == 0.0


def test_single_element_zero_data():
    mesh = make_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    system = condense(Space(mesh, 1), 0.0)
    assert np.all(system.rhs == 0)
    assert np.all(solve_trace(system) == 0)


def test_symmetric_positive_definite():
    space = Space(square_mesh(4), 2)
    A = HdgOperator(space).matrix
    assert space.mesh.n_elements == 32
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.standard_normal(A.shape[0])
        assert x @ (A @ x) > 0
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


def polynomial(k):
    """A polynomial of degree k with its gradient and -lap + identity."""
    if k == 1:
        return (lambda x: 1 + 2 * x[..., 0] - x[..., 1],
                lambda x: np.stack([2 + 0 * x[..., 0], -1 + 0 * x[..., 0]], -1),
                lambda x: 1 + 2 * x[..., 0] - x[..., 1])
    if k == 2:
        def y(x):
            return x[..., 0] ** 2 - 3 * x[..., 0] * x[..., 1] + x[..., 1]
        return (y,
                lambda x: np.stack([2 * x[..., 0] - 3 * x[..., 1], -3 * x[..., 0] + 1], -1),
                lambda x: -2 + y(x))
    def y(x):
        return x[..., 0] ** 3 - x[..., 0] * x[..., 1] ** 2 + 0.5
    return (y,
            lambda x: np.stack([3 * x[..., 0] ** 2 - x[..., 1] ** 2, -2 * x[..., 0] * x[..., 1]], -1),
            lambda x: -(6 * x[..., 0] - 2 * x[..., 0]) + y(x))


@pytest.mark.parametrize("solver", ["cg", "direct"])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_patch_test(k, solver):
    y, gy, f = polynomial(k)
    space = Space(MESHES["lshape_graded"](), k)
    op = HdgOperator(space, HdgOperatorConfig(k=k, solver=solver))
    field = op.solve(op.source_load(f), op.neumann_load(lambda x, n: np.sum(gy(x) * n, -1)))
    assert np.abs(field.scalar_at_qp() - y(space.X)).max() < 1e-8
    assert np.abs(field.flux_at_qp() + gy(space.X)).max() < 1e-8
    assert np.abs(space.eval_trace(field.trace) - y(space.XF)).max() < 1e-8


def test_patch_test_linear_on_unit_square():
    space = Space(square_mesh(4), 1)
    op = HdgOperator(space)
    field = op.solve(op.source_load(lambda x: x[..., 0]), op.neumann_load(lambda x, n: n[..., 0]))
    assert np.abs(field.scalar_at_qp() - space.X[..., 0]).max() < 1e-8
    assert np.abs(field.flux_at_qp() - [-1.0, 0.0]).max() < 1e-8


def solved_field(k=2):
    space = Space(MESHES["lshape_graded"](), k)
    op = HdgOperator(space)

    def f(x):
        return np.cos(x[..., 0]) * np.exp(x[..., 1])

    load = op.source_load(f)
    return op, op.solve(load, op.neumann_load(lambda x, n: n[..., 0] - 0.3 * n[..., 1])), load, f


def test_local_equations_hold_after_recovery():
    op, field, load, _ = solved_field()
    space = op.space
    L = assemble_local(space, op.tau)
    nb = space.nb
    for e in range(space.mesh.n_elements):
        flux, scalar = recover_local(op, e, field.trace[space.mesh.elem_faces[e]], load[e])
        np.testing.assert_allclose(flux, field.flux[e], atol=1e-12)
        x = np.concatenate([flux[0], flux[1], scalar, field.trace[space.mesh.elem_faces[e]].ravel()])
        res = L[e, :3 * nb] @ x - np.concatenate([np.zeros(2 * nb), load[e]])
        assert np.abs(res).max() <= 1e-9


def test_zero_trace_zero_source_recovers_zero():
    op, _, _, _ = solved_field(1)
    flux, scalar = recover_local(op, 0, np.zeros((3, 2)), np.zeros(3))
    assert not flux.any() and not scalar.any()


def test_transmission_and_local_conservation():
    op, field, load, f = solved_field()
    mesh = op.space.mesh
    res = transmission_residual(field)
    interior = mesh.face_elems[:, 1] >= 0
    assert np.abs(res[interior]).max() <= 1e-8
    s = op.space
    flux_out = np.sum(s.WB * field.normal_flux_on_boundary(), axis=(1, 2))
    cons = np.sum(s.W * f(s.X), 1) - np.sum(s.W * field.scalar_at_qp(), 1) - flux_out
    assert np.abs(cons).max() <= 1e-9


def test_numerical_flux_examples():
    mesh = make_mesh([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    space = Space(mesh, 1)
    nb, nf = space.nb, space.nf
    tau = np.array([4.0])
    # p_h = 0, y_h = 1, yhat = 0: flux is the constant 4 on each edge
    scalar = np.zeros((1, nb))
    scalar[0, 0] = 1.0 / space.basis.values(np.array([[[0.2, 0.2]]]))[0, 0, 0]
    field = HdgField(space, np.zeros((1, 2, nb)), scalar, np.zeros((3, nf)), tau)
    for e in range(3):
        c = numerical_flux(field, 0, e)
        length = mesh.local_edge_lengths[0, e]
        np.testing.assert_allclose(c, [4.0 * np.sqrt(length), 0.0], atol=1e-12)
    # y_h = yhat_h: flux equals the normal component of p_h
    flux = np.zeros((1, 2, nb))
    flux[0, 0] = scalar[0]  # p_h = (1, 0)
    trace = np.array([[np.sqrt(L), 0.0] for L in mesh.face_lengths])
    field = HdgField(space, flux, scalar, trace, tau)
    for e in range(3):
        length = mesh.local_edge_lengths[0, e]
        n = mesh.normals[0, e]
        np.testing.assert_allclose(numerical_flux(field, 0, e), [n[0] * np.sqrt(length), 0], atol=1e-12)


def test_solve_trace_small_systems():
    sysm = TraceSystem(sp.csr_matrix([[4.0]]), np.array([2.0]), None)
    assert solve_trace(sysm)[0] == pytest.approx(0.5)
    rng = np.random.default_rng(1)
    M = rng.standard_normal((50, 50))
    A = M @ M.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = solve_trace(TraceSystem(sp.csr_matrix(A), b, None))
    np.testing.assert_allclose(x, np.linalg.solve(A, b), rtol=0, atol=1e-9)


def test_solve_trace_failures():
    A = sp.csr_matrix(np.diag([1.0, -1.0]))
    with pytest.raises(SolverError):
        solve_trace(TraceSystem(A, np.array([1.0, 1.0]), None))
    rng = np.random.default_rng(0)
    M = rng.standard_normal((40, 40))
    A = sp.csr_matrix(M @ M.T + 1e-8 * np.eye(40))
    with pytest.raises(SolverError) as info:
        solve_trace(TraceSystem(A, rng.standard_normal(40), None), maxiter=3)
    assert info.value.iterations == 3


def test_cg_matches_direct():
    space = Space(square_mesh(4), 2)
    cg = HdgOperator(space, HdgOperatorConfig(k=2, solver="cg"))
    lu = HdgOperator(space, HdgOperatorConfig(k=2, solver="direct"))
    load = cg.source_load(lambda x: np.sin(5 * x[..., 0]))
    np.testing.assert_allclose(cg.solve(load).trace, lu.solve(load).trace, atol=1e-10)


def test_configuration_errors():
    with pytest.raises(ConfigurationError):
        HdgOperatorConfig(tau_scale=0.0)
    with pytest.raises(ConfigurationError):
        HdgOperatorConfig(solver="gmres")
    space = Space(square_mesh(1), 1)
    with pytest.raises(ConfigurationError):
        assemble_local(space, -1.0)
