"""Port-reduced RB and hyperreduced solves of assembled systems.

Unknowns are per-component bubble coefficients plus one shared coefficient
block per internal global port; Dirichlet boundary ports enter as fixed
harmonic lifts of their constant nodal data and contribute no unknowns.
"""

import numpy as np

from .components import FidelityIndex
from .newton import newton_solve
from .system import System, SystemSolution


class ReducedSolveError(RuntimeError):
    pass


class ComponentReducedOperator:
    """Residual/Jacobian of one component against reduced coefficients.

    Basis values and physical gradients are tabulated once at the rule's
    points, so each evaluation costs O(n_points * n_basis^2) regardless of
    the truth dimension.
    """

    def __init__(self, component, basis, point_indices, point_weights, mu,
                 material, source, fixed=None):
        space = component.space
        geo = component.geometric_map(mu)
        nq = space.nq
        e = point_indices // nq
        q = point_indices % nq
        elems = space.elements[e]

        B_loc = basis[elems]  # (P, 6, n)
        self.values = np.einsum("pi,pin->pn", space.shape_values[q], B_loc)
        grad_ref = np.einsum("pid,pin->pnd", space.shape_grads[e, q], B_loc)
        self.grads = np.einsum("pkd,pnk->pnd", geo.inv[e], grad_ref)

        if fixed is None:
            fixed = np.zeros(space.n_dofs)
        f_loc = fixed[elems]
        self.fixed_values = np.einsum("pi,pi->p", space.shape_values[q], f_loc)
        fixed_ref = np.einsum("pid,pi->pd", space.shape_grads[e, q], f_loc)
        self.fixed_grads = np.einsum("pkd,pk->pd", geo.inv[e], fixed_ref)

        self.wdet = point_weights * geo.det[e]
        self.material = material
        self.source = float(source)
        self.n = basis.shape[1]
        self.fixed = fixed
        self.basis = basis

    def field(self, x):
        u = self.values @ x + self.fixed_values
        g = np.einsum("pnd,n->pd", self.grads, x) + self.fixed_grads
        return u, g

    def residual(self, x) -> np.ndarray:
        u, g = self.field(x)
        k, _, _ = self.material.clamped(u)
        r = np.einsum("p,pd,pnd->n", self.wdet * k, g, self.grads)
        r -= self.source * (self.wdet @ self.values)
        return r

    def jacobian(self, x) -> np.ndarray:
        u, g = self.field(x)
        k, dk, _ = self.material.clamped(u)
        J = np.einsum("p,pd,pnd,pm->nm", self.wdet * dk, g, self.grads, self.values)
        J += np.einsum("p,pnd,pmd->nm", self.wdet * k, self.grads, self.grads)
        return J

    def nodal(self, x) -> np.ndarray:
        return self.basis @ x + self.fixed


def _truth_points(space):
    return np.arange(space.quad.n_points), space.quad.flat_weights


def effective_fidelities(system: System, f_assignment):
    """Per-component multi-indices with port entries raised to interface level.

    When the two sides of a shared port hold different port fidelities the
    interface uses the larger one, so the lower-fidelity side works with an
    extended lifted basis (and the RQ rule of its raised multi-index).
    """
    fis = [
        system.components[i].archetype.coerce_fidelity(f_assignment[i])
        for i in range(system.n_components)
    ]
    port_levels = []
    for gp in system.global_ports:
        level = max(fis[c].ports[p] for (c, p) in gp.members)
        port_levels.append(level)
    effective = []
    for ci, fi in enumerate(fis):
        ports = list(fi.ports)
        for gi, gp in enumerate(system.global_ports):
            for (c, p) in gp.members:
                if c == ci:
                    ports[p] = port_levels[gi]
        effective.append(FidelityIndex(fi.bubble, tuple(ports)))
    return effective, port_levels


def solve_reduced(
    system: System,
    f_assignment,
    material,
    use_truth_quadrature: bool = False,
    warm_start: SystemSolution | None = None,
    abs_tol: float = 1e-9,
    max_iter: int = 40,
) -> SystemSolution:
    """Solve the port-reduced problem at a fidelity assignment.

    With ``use_truth_quadrature`` the component integrals use the full truth
    rule (the RB problem); otherwise each component uses the trained
    reduced-quadrature rule of its effective multi-index (the hyperreduced
    problem).
    """
    library = system.library
    effective, port_levels = effective_fidelities(system, f_assignment)

    # global unknown layout: bubble blocks, then internal port blocks
    block_of = {}
    n_rb = 0
    for ci, comp in enumerate(system.components):
        nb = comp.archetype.bubble_sizes[effective[ci].bubble - 1]
        block_of[("bubble", ci)] = slice(n_rb, n_rb + nb)
        n_rb += nb
    for gi, gp in enumerate(system.global_ports):
        if gp.dirichlet is None:
            port_id = _port_archetype(system, gp)
            npm = library.port(port_id).fidelity_sizes[port_levels[gi] - 1]
            block_of[("port", gi)] = slice(n_rb, n_rb + npm)
            n_rb += npm

    ops = []
    col_maps = []
    total_points = 0
    for ci, comp in enumerate(system.components):
        arch = comp.archetype
        fi = effective[ci]
        flips = [False] * arch.n_ports
        dirichlet_traces = {}
        for gi, gp in enumerate(system.global_ports):
            for mi, (c, p) in enumerate(gp.members):
                if c != ci:
                    continue
                if gp.dirichlet is None:
                    flips[p] = gp.flips[mi]
                else:
                    n_nodes = len(arch.ports[p].nodes)
                    dirichlet_traces[p] = np.full(n_nodes, gp.dirichlet)
        basis, slices = arch.rb_space(fi, library, flips=tuple(flips))
        cols = np.empty(basis.shape[1], dtype=np.int64)
        cols[slices["bubble"]] = np.arange(n_rb)[block_of[("bubble", ci)]]
        keep = np.ones(basis.shape[1], dtype=bool)
        for gi, gp in enumerate(system.global_ports):
            for (c, p) in gp.members:
                if c != ci:
                    continue
                if gp.dirichlet is None:
                    cols[slices[p]] = np.arange(n_rb)[block_of[("port", gi)]]
                else:
                    keep[slices[p]] = False
        basis = basis[:, keep]
        cols = cols[keep]

        fixed = arch.lift_traces(dirichlet_traces) if dirichlet_traces else None
        if use_truth_quadrature:
            pts, wts = _truth_points(arch.space)
        else:
            rule = library.rq_rule(arch.id, fi)
            pts, wts = rule.indices, rule.weights
        total_points += len(pts)
        ops.append(
            ComponentReducedOperator(
                arch, basis, pts, wts, comp.mu, material, comp.source, fixed
            )
        )
        col_maps.append(cols)

    def residual(x):
        r = np.zeros(n_rb)
        for op, cols in zip(ops, col_maps):
            np.add.at(r, cols, op.residual(x[cols]))
        return r

    def jacobian(x):
        J = np.zeros((n_rb, n_rb))
        for op, cols in zip(ops, col_maps):
            J[np.ix_(cols, cols)] += op.jacobian(x[cols])
        return J

    x0 = np.zeros(n_rb)
    if warm_start is not None and warm_start.data.get("block_of") is not None:
        _copy_blocks(x0, block_of, warm_start)
    else:
        x0 = _mean_state_guess(system, ops, col_maps, n_rb)

    try:
        x, hist = newton_solve(residual, jacobian, x0, abs_tol=abs_tol, max_iter=max_iter)
    except Exception as exc:
        raise ReducedSolveError(f"reduced solve failed: {exc}") from exc

    values = [op.nodal(x[cols]) for op, cols in zip(ops, col_maps)]
    return SystemSolution(
        system=system,
        kind="rb" if use_truth_quadrature else "hrbe",
        component_values=values,
        fidelity=[fi for fi in effective],
        newton_iterations=hist.n_iterations,
        data={
            "x": x,
            "block_of": block_of,
            "n_rb": n_rb,
            "q_rb": total_points,
            "assigned": [
                system.components[i].archetype.coerce_fidelity(f_assignment[i])
                for i in range(system.n_components)
            ],
            "history": hist,
        },
    )


def _mean_state_guess(system: System, ops, col_maps, n_rb) -> np.ndarray:
    """Least-squares fit of the mean Dirichlet temperature as the Newton start.

    Starting from zero coefficients would place the field near zero kelvin,
    far outside the regime the bases were trained on.
    """
    if not len(system.constrained_values):
        return np.zeros(n_rb)
    mean = float(np.mean(system.constrained_values))
    AtA = np.zeros((n_rb, n_rb))
    Atb = np.zeros(n_rb)
    for op, cols in zip(ops, col_maps):
        target = mean - op.fixed
        AtA[np.ix_(cols, cols)] += op.basis.T @ op.basis
        Atb[cols] += op.basis.T @ target
    try:
        return np.linalg.solve(AtA + 1e-12 * np.eye(n_rb), Atb)
    except np.linalg.LinAlgError:
        return np.zeros(n_rb)


def _port_archetype(system: System, gp) -> str:
    c, p = gp.members[0]
    return system.components[c].archetype.ports[p].archetype_port


def _copy_blocks(x0, block_of, warm: SystemSolution) -> None:
    old_blocks = warm.data["block_of"]
    old_x = warm.data["x"]
    for key, sl in block_of.items():
        if key in old_blocks:
            osl = old_blocks[key]
            n = min(sl.stop - sl.start, osl.stop - osl.start)
            x0[sl.start : sl.start + n] = old_x[osl.start : osl.start + n]


def solve_component_reduced(
    component,
    f,
    port_coefficients: dict,
    mu,
    material,
    library,
    use_truth_quadrature: bool = False,
    abs_tol: float = 1e-10,
    max_iter: int = 40,
):
    """Single-component reduced solve with all ports held at modal Dirichlet data.

    ``port_coefficients`` maps local port index to coefficients in that port's
    reduced mode basis (at the level implied by ``f``); the unknowns are the
    bubble coefficients only. Returns the component nodal reconstruction.
    """
    fi = component.coerce_fidelity(f)
    fixed = np.zeros(component.space.n_dofs)
    for p, coef in port_coefficients.items():
        theta = component.lifted_basis(p, fi.ports[p], False, library)
        fixed += theta[:, : len(coef)] @ coef
    basis = component.bubble_basis(fi.bubble)
    if use_truth_quadrature:
        pts, wts = _truth_points(component.space)
    else:
        rule = library.rq_rule(component.id, fi)
        pts, wts = rule.indices, rule.weights
    mu = np.asarray(mu, dtype=float)
    source = mu[component.source_param] if component.source_param is not None else 0.0
    op = ComponentReducedOperator(
        component, basis, pts, wts, mu, material, source, fixed
    )
    x, hist = newton_solve(op.residual, op.jacobian, np.zeros(op.n),
                           abs_tol=abs_tol, max_iter=max_iter)
    return op.nodal(x), hist
