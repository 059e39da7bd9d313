"""Trained-library container with versioned single-file persistence.

The on-disk format is an uncompressed ``.npz`` holding named float64/int64
arrays plus a JSON header array carrying the format version, training
provenance, and a content checksum over all numeric payloads.
"""

import hashlib
import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .components import ArchetypeComponent, PortMap
from .eqp import RqRule
from .meshing import Mesh1D, Mesh2D
from .ports import ArchetypePort

FORMAT_VERSION = 1


class LibraryFormatError(RuntimeError):
    pass


@dataclass
class ComponentLibrary:
    """Archetype ports and components, plus training provenance."""

    ports: dict = field(default_factory=dict)
    components: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    node_map_registry: dict = field(default_factory=dict)

    def port(self, port_id: str) -> ArchetypePort:
        return self.ports[port_id]

    def component(self, comp_id: str) -> ArchetypeComponent:
        return self.components[comp_id]

    @property
    def component_ids(self) -> list:
        return list(self.components)

    def is_trained(self) -> bool:
        return all(p.n_fidelities > 0 for p in self.ports.values()) and all(
            c.n_fidelities > 0 for c in self.components.values()
        )

    def rq_rule(self, comp_id: str, f) -> RqRule:
        """RQ rule for a multi-index, inheriting from the closest trained superset.

        A rule trained for a component-wise larger multi-index satisfies a
        subset of its constraints, so it remains valid for the smaller space.
        Preference goes to the trained superset with the fewest points.
        """
        comp = self.component(comp_id)
        fi = comp.coerce_fidelity(f)
        key = fi.as_tuple()
        if key in comp.rq_rules:
            return comp.rq_rules[key]
        candidates = [
            rule
            for ftup, rule in comp.rq_rules.items()
            if all(a <= b for a, b in zip(key, ftup))
        ]
        if not candidates:
            raise KeyError(
                f"no RQ rule trained for {comp_id!r} at fidelity {key} and no "
                f"higher-fidelity rule to inherit from"
            )
        return min(candidates, key=lambda r: (r.n_points, r.fidelity))

    def eta_value(self, comp_id: str, f) -> float:
        comp = self.component(comp_id)
        key = comp.coerce_fidelity(f).as_tuple()
        if key not in comp.eta:
            raise KeyError(f"no contraction factor trained for {comp_id!r} at {key}")
        return comp.eta[key]


# ---------------------------------------------------------------------------
# Memory accounting
# ---------------------------------------------------------------------------


def library_stats(library: ComponentLibrary, d: int = 2) -> dict:
    """Count the scalars an online solver loads per component.

    Per component: its stored contraction entries, plus, for every trained RQ
    rule, the rule's weights and the values and gradients (hence a factor
    ``d + 1``) of the active bubble and lifted port basis functions at the
    rule's points.
    """
    per_component = {}
    total = 0
    for cid, comp in library.components.items():
        n_eta = len(comp.eta)
        comp_total = n_eta
        for ftup, rule in comp.rq_rules.items():
            n_b = comp.bubble_sizes[ftup[0] - 1] if comp.bubble_sizes else 0
            n_p = 0
            for p, level in enumerate(ftup[1:]):
                port = library.port(comp.ports[p].archetype_port)
                n_p += port.fidelity_sizes[level - 1]
            comp_total += rule.n_points * (1 + (n_b + n_p) * (d + 1))
        per_component[cid] = comp_total
        total += comp_total
    return {"total_scalars": total, "per_component": per_component}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _content_checksum(arrays: dict) -> str:
    digest = hashlib.sha256()
    for key in sorted(arrays):
        digest.update(key.encode())
        arr = np.ascontiguousarray(arrays[key])
        digest.update(str(arr.dtype).encode())
        digest.update(str(arr.shape).encode())
        digest.update(arr.tobytes())
    return digest.hexdigest()


def library_checksum(library: ComponentLibrary) -> str:
    """Checksum of all numeric content; equal checksums mean bitwise-equal data."""
    arrays, _ = _collect_arrays(library)
    return _content_checksum(arrays)


def _collect_arrays(library: ComponentLibrary):
    arrays = {}
    meta = {"ports": {}, "components": {}}
    for pid, port in library.ports.items():
        base = f"port/{pid}/"
        arrays[base + "mesh_nodes"] = port.mesh.nodes
        arrays[base + "mesh_elements"] = port.mesh.elements
        arrays[base + "eigenvalues"] = port.eigenvalues
        arrays[base + "eigenbasis"] = port.eigenbasis
        if port.pod_modes is not None:
            arrays[base + "pod_modes"] = port.pod_modes
            arrays[base + "fidelity_sizes"] = np.asarray(port.fidelity_sizes, dtype=np.int64)
        meta["ports"][pid] = {"trained": port.pod_modes is not None}
    for cid, comp in library.components.items():
        base = f"comp/{cid}/"
        arrays[base + "mesh_nodes"] = comp.mesh.nodes
        arrays[base + "mesh_elements"] = comp.mesh.elements
        arrays[base + "param_box"] = comp.param_box
        arrays[base + "mu_ref"] = comp.mu_ref
        for p, pm in enumerate(comp.ports):
            arrays[base + f"portmap/{p}/nodes"] = pm.nodes
        if comp.bubble_modes is not None:
            arrays[base + "bubble_modes"] = comp.bubble_modes
            arrays[base + "bubble_sizes"] = np.asarray(comp.bubble_sizes, dtype=np.int64)
        for (p, flipped), modes in comp.lifted.items():
            arrays[base + f"lifted/{p}/{int(flipped)}"] = modes
        for ftup, rule in comp.rq_rules.items():
            tag = base + "rq/" + "-".join(map(str, ftup)) + "/"
            arrays[tag + "indices"] = rule.indices
            arrays[tag + "weights"] = rule.weights
            arrays[tag + "tol"] = np.array([rule.tolerance])
        eps_keys = sorted(comp.eps_rb)
        if eps_keys:
            arrays[base + "eps_keys"] = np.asarray(eps_keys, dtype=np.int64)
            arrays[base + "eps_values"] = np.asarray(
                [comp.eps_rb[k] for k in eps_keys], dtype=float
            )
        eta_keys = sorted(comp.eta)
        if eta_keys:
            arrays[base + "eta_keys"] = np.asarray(eta_keys, dtype=np.int64)
            arrays[base + "eta_values"] = np.asarray(
                [comp.eta[k] for k in eta_keys], dtype=float
            )
            arrays[base + "eta_skipped"] = np.asarray(
                [comp.eta_skipped.get(k, 0) for k in eta_keys], dtype=np.int64
            )
        meta["components"][cid] = {
            "kind": comp.kind,
            "port_archetypes": [pm.archetype_port for pm in comp.ports],
            "trained": comp.bubble_modes is not None,
            "source_param": comp.source_param,
        }
    return arrays, meta


def save_library(library: ComponentLibrary, path) -> None:
    arrays, meta = _collect_arrays(library)
    header = {
        "format_version": FORMAT_VERSION,
        "provenance": library.provenance,
        "meta": meta,
        "checksum": _content_checksum(arrays),
    }
    payload = dict(arrays)
    payload["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_library(path, node_map_registry: dict) -> ComponentLibrary:
    """Load a library file, verifying format version and content checksum.

    ``node_map_registry`` maps component ``kind`` to its vertex map rule;
    geometry rules are code and are re-attached by kind on load.
    """
    try:
        with np.load(path, allow_pickle=False) as data:
            payload = {key: data[key] for key in data.files}
    except (zipfile.BadZipFile, OSError, ValueError, KeyError) as exc:
        raise LibraryFormatError(f"unreadable or truncated library file {path}: {exc}") from exc
    if "__header__" not in payload:
        raise LibraryFormatError(f"{path} is missing the library header")
    header = json.loads(bytes(payload.pop("__header__").tobytes()).decode())
    if header.get("format_version") != FORMAT_VERSION:
        raise LibraryFormatError(
            f"library format version {header.get('format_version')} is not "
            f"supported (expected {FORMAT_VERSION})"
        )
    if _content_checksum(payload) != header.get("checksum"):
        raise LibraryFormatError(f"checksum mismatch in {path}: file is corrupt")

    lib = ComponentLibrary(
        provenance=header.get("provenance", {}), node_map_registry=dict(node_map_registry)
    )
    meta = header["meta"]
    for pid, pmeta in meta["ports"].items():
        base = f"port/{pid}/"
        mesh = Mesh1D(
            nodes=payload[base + "mesh_nodes"],
            elements=payload[base + "mesh_elements"].astype(np.int64),
        )
        port = ArchetypePort(
            id=pid,
            mesh=mesh,
            eigenvalues=payload[base + "eigenvalues"],
            eigenbasis=payload[base + "eigenbasis"],
        )
        if pmeta["trained"]:
            port.set_modes(
                payload[base + "pod_modes"],
                payload[base + "fidelity_sizes"].astype(int).tolist(),
            )
        lib.ports[pid] = port
    for cid, cmeta in meta["components"].items():
        base = f"comp/{cid}/"
        kind = cmeta["kind"]
        if kind not in node_map_registry:
            raise LibraryFormatError(f"no geometry rule registered for kind {kind!r}")
        mesh = Mesh2D(
            nodes=payload[base + "mesh_nodes"],
            elements=payload[base + "mesh_elements"].astype(np.int64),
        )
        ports = [
            PortMap(
                archetype_port=pa,
                nodes=payload[base + f"portmap/{p}/nodes"].astype(np.int64),
            )
            for p, pa in enumerate(cmeta["port_archetypes"])
        ]
        comp = ArchetypeComponent(
            id=cid,
            mesh=mesh,
            ports=ports,
            param_box=payload[base + "param_box"],
            mu_ref=payload[base + "mu_ref"],
            node_map=node_map_registry[kind],
            kind=kind,
            source_param=cmeta.get("source_param"),
        )
        if cmeta["trained"]:
            comp.set_bubble_modes(
                payload[base + "bubble_modes"],
                payload[base + "bubble_sizes"].astype(int).tolist(),
            )
            for p in range(comp.n_ports):
                comp.set_lifted_modes(
                    p,
                    payload[base + f"lifted/{p}/0"],
                    payload[base + f"lifted/{p}/1"],
                )
        prefix = base + "rq/"
        for key in payload:
            if key.startswith(prefix) and key.endswith("/indices"):
                ftup = tuple(int(t) for t in key[len(prefix) : -len("/indices")].split("-"))
                tag = prefix + "-".join(map(str, ftup)) + "/"
                comp.rq_rules[ftup] = RqRule(
                    fidelity=ftup,
                    indices=payload[tag + "indices"].astype(np.int64),
                    weights=payload[tag + "weights"],
                    tolerance=float(payload[tag + "tol"][0]),
                )
        if base + "eps_keys" in payload:
            for row, val in zip(payload[base + "eps_keys"], payload[base + "eps_values"]):
                comp.eps_rb[tuple(int(x) for x in row)] = float(val)
        if base + "eta_keys" in payload:
            skipped = payload.get(base + "eta_skipped")
            for i, (row, val) in enumerate(
                zip(payload[base + "eta_keys"], payload[base + "eta_values"])
            ):
                key = tuple(int(x) for x in row)
                comp.eta[key] = float(val)
                if skipped is not None:
                    comp.eta_skipped[key] = int(skipped[i])
        lib.components[cid] = comp
    return lib
