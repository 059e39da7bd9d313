import itertools

import numpy as np
import pytest

from comrom.fem import h1_norm
from comrom.thermal_fin import build_catalog

ARCHETYPES = ("rod", "bracket", "cross")


@pytest.fixture(scope="module")
def catalog_mod():
    return build_catalog()


def test_port_counts_and_line_port(catalog_mod):
    assert catalog_mod.port("line").n_dofs == 17
    assert catalog_mod.component("rod").n_ports == 2
    assert catalog_mod.component("bracket").n_ports == 2
    assert catalog_mod.component("cross").n_ports == 4


def test_bubble_dof_counts_near_reference_scale(catalog_mod):
    targets = {"rod": 691, "bracket": 703, "cross": 1165}
    for cid, target in targets.items():
        n = catalog_mod.component(cid).n_bubble_dofs
        assert abs(n - target) / target < 0.15, (cid, n)


def test_port_chains_have_unit_length_and_17_nodes(catalog_mod):
    for cid in ARCHETYPES:
        comp = catalog_mod.component(cid)
        for pm in comp.ports:
            assert len(pm.nodes) == 17
            pts = comp.mesh.nodes[pm.nodes]
            length = np.linalg.norm(pts[-1] - pts[0])
            assert length == pytest.approx(1.0, abs=1e-12)


def test_reference_parameters_give_identity_map(catalog_mod):
    for cid in ARCHETYPES:
        comp = catalog_mod.component(cid)
        geo = comp.geometric_map(comp.mu_ref)
        np.testing.assert_allclose(geo.det, 1.0, atol=1e-13)
        np.testing.assert_allclose(
            geo.jac, np.broadcast_to(np.eye(2), geo.jac.shape), atol=1e-13
        )
        np.testing.assert_allclose(geo.nodes, comp.mesh.nodes, atol=1e-13)


def test_rod_length_scaling_scales_area(catalog_mod):
    rod = catalog_mod.component("rod")
    geo = rod.geometric_map([6.0, 1.0, 0.0])
    mapped_area = float((rod.space.quad.weights * geo.det[:, None]).sum())
    assert mapped_area == pytest.approx(1.5 * rod.mesh.area(), rel=1e-12)


def test_port_shape_invariant_under_parameters(catalog_mod):
    # ports translate rigidly: 1 cm long for every admissible parameter value
    for cid in ARCHETYPES:
        comp = catalog_mod.component(cid)
        for corner in itertools.product(*[(lo, hi) for lo, hi in comp.param_box]):
            nodes = comp.map_nodes(np.array(corner))
            for pm in comp.ports:
                pts = nodes[pm.nodes]
                assert np.linalg.norm(pts[-1] - pts[0]) == pytest.approx(1.0, abs=1e-12)
                steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
                np.testing.assert_allclose(steps, 1.0 / 16.0, atol=1e-12)


def test_det_positive_at_parameter_box_corners(catalog_mod):
    for cid in ARCHETYPES:
        comp = catalog_mod.component(cid)
        for corner in itertools.product(*[(lo, hi) for lo, hi in comp.param_box]):
            geo = comp.geometric_map(np.array(corner))
            assert geo.det.min() > 0.0


def test_parameters_outside_box_rejected(catalog_mod):
    rod = catalog_mod.component("rod")
    with pytest.raises(ValueError, match="outside the box"):
        rod.geometric_map([2.0, 1.0, 0.0])


def test_bubble_port_split_reconstructs(catalog_mod, rng):
    for cid in ARCHETYPES:
        comp = catalog_mod.component(cid)
        u = rng.normal(size=comp.space.n_dofs)
        u_b, traces = comp.bubble_port_split(u)
        assert np.abs(u_b[comp.port_dofs]).max() < 1e-12
        recon = u_b + comp.lift_traces(traces)
        assert h1_norm(comp.space, recon - u) < 1e-10 * h1_norm(comp.space, u)


def test_split_of_zero_trace_function_is_identity(catalog_mod, rng):
    comp = catalog_mod.component("rod")
    u = rng.normal(size=comp.space.n_dofs)
    u[comp.port_dofs] = 0.0
    u_b, traces = comp.bubble_port_split(u)
    np.testing.assert_allclose(u_b, u, atol=1e-11)
    for t in traces.values():
        assert np.abs(t).max() == 0.0


def test_lift_idempotence(catalog_mod, rng):
    comp = catalog_mod.component("bracket")
    data = rng.normal(size=17)
    lifted = comp.elliptic_lift(0, data)
    u_b, traces = comp.bubble_port_split(lifted)
    assert h1_norm(comp.space, u_b) < 1e-10
    np.testing.assert_allclose(traces[0], data, atol=1e-12)
    assert np.abs(traces[1]).max() < 1e-12


def test_lift_zero_data_is_zero(catalog_mod):
    comp = catalog_mod.component("cross")
    lifted = comp.elliptic_lift(2, np.zeros(17))
    assert np.abs(lifted).max() == 0.0


def test_lift_weak_form_vanishes_on_bubble_space(catalog_mod, rng):
    for cid in ARCHETYPES:
        comp = catalog_mod.component(cid)
        data = rng.normal(size=17)
        lifted = comp.elliptic_lift(0, data)
        K = comp.space.stiffness()
        interior_residual = (K @ lifted)[comp.bubble_dofs]
        assert np.abs(interior_residual).max() < 1e-10


def test_constant_lift_on_rod_is_linear_ramp(catalog_mod):
    # 1 on the left port, 0 on the right: harmonic extension of a 1D two-point
    # problem, so the midline profile is the linear ramp 1 - x/4
    rod = catalog_mod.component("rod")
    lifted = rod.elliptic_lift(0, np.ones(17))
    nodes = rod.mesh.nodes
    expected = 1.0 - nodes[:, 0] / 4.0
    assert np.abs(lifted - expected).max() < 1e-9


def test_rb_lift_variant_orthogonal_to_requested_level(catalog_mod, rng):
    comp = catalog_mod.component("rod")
    if comp.bubble_modes is None:
        modes = rng.normal(size=(comp.space.n_dofs, 3))
        modes[comp.port_dofs] = 0.0
        comp.set_bubble_modes(modes, [1, 3])
    data = rng.normal(size=17)
    lifted = comp.elliptic_lift(0, data, test_space=("rb", 2))
    K = comp.space.stiffness()
    for j in range(3):
        assert abs(comp.bubble_modes[:, j] @ (K @ lifted)) < 1e-9
    np.testing.assert_allclose(lifted[comp.ports[0].nodes], data, atol=1e-12)
