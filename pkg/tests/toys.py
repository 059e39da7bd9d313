"""Hand-sized fixtures used by the quadrature-training and library tests."""

import numpy as np

from comrom.components import ArchetypeComponent, PortMap
from comrom.library import ComponentLibrary
from comrom.meshing import (
    Mesh2D,
    chain_nodes,
    edges_on_segment,
    interval_mesh,
    rect_mesh,
)
from comrom.ports import ArchetypePort
from comrom.snapshots import Snapshot


def identity_node_map(xy, mu):
    return xy.copy()


def one_triangle_component():
    """Single P2 triangle, no ports: 6 truth points, identity geometry."""
    nodes = np.array(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0], [0.5, 0.5], [0.0, 0.5]]
    )
    mesh = Mesh2D(nodes=nodes, elements=np.array([[0, 1, 2, 3, 4, 5]]))
    comp = ArchetypeComponent(
        id="tri", mesh=mesh, ports=[], param_box=[[0.0, 1.0]], mu_ref=[0.0],
        node_map=identity_node_map, kind="tri",
    )
    lib = ComponentLibrary(node_map_registry={"tri": identity_node_map})
    lib.components["tri"] = comp
    return comp, lib


def toy_trained_component(n_elements=2, two_ports=True):
    """Tiny trained square component with line ports on its left/right edges."""
    mesh = rect_mesh(n_elements, 8, 0.0, 1.0, 0.0, 1.0)
    groups = {}
    ports = []
    segs = [((0.0, 0.0), (0.0, 1.0))]
    if two_ports:
        segs.append(((1.0, 0.0), (1.0, 1.0)))
    for p, (a, b) in enumerate(segs):
        edges = edges_on_segment(mesh, a, b)
        groups[f"port_{p}"] = edges
        ports.append(PortMap(archetype_port="line", nodes=chain_nodes(mesh, edges, a)))
    mesh.boundary_groups = groups
    comp = ArchetypeComponent(
        id="sq", mesh=mesh, ports=ports, param_box=[[0.0, 1.0]], mu_ref=[0.0],
        node_map=identity_node_map, kind="sq",
    )
    lib = ComponentLibrary(node_map_registry={"sq": identity_node_map})
    lib.components["sq"] = comp
    lib.ports["line"] = ArchetypePort(id="line", mesh=interval_mesh(8, 0.0, 1.0))
    return comp, lib


def plant_training_data(comp, lib, rng, n_bubble=2, port_sizes=(1, 2)):
    """Install synthetic nested bases so reduced spaces exist without training."""
    port = lib.ports["line"]
    raw = rng.normal(size=(17, port_sizes[-1]))
    gram = port.space.h1_gram().toarray()
    modes = np.linalg.qr(np.linalg.cholesky(gram).T @ raw)[0]
    modes = np.linalg.solve(np.linalg.cholesky(gram).T, modes)
    port.set_modes(modes, list(port_sizes))

    bub = rng.normal(size=(comp.space.n_dofs, n_bubble))
    bub[comp.port_dofs] = 0.0
    comp.set_bubble_modes(bub, list(range(1, n_bubble + 1)))
    for p in range(comp.n_ports):
        lifted = np.column_stack(
            [comp.lift_traces({p: modes[:, j]}) for j in range(modes.shape[1])]
        )
        flipped = np.column_stack(
            [comp.lift_traces({p: modes[::-1, j]}) for j in range(modes.shape[1])]
        )
        comp.set_lifted_modes(p, lifted, flipped)
    return lib


def toy_snapshots(comp, rng, n=3):
    out = []
    for _ in range(n):
        mu = comp.param_box[:, 0] + rng.random(len(comp.param_box)) * (
            comp.param_box[:, 1] - comp.param_box[:, 0]
        )
        out.append(Snapshot(values=rng.normal(size=comp.space.n_dofs), mu=mu, source=0.0))
    return out
