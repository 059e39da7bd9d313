"""Declarative text descriptions of systems and run outputs (JSON and CSV)."""

import csv
import json

from .system import ComponentSpec, assemble_system
from .thermal_fin import BOUNDARY_VALUES, FinSystemSpec, fin_system


class DescriptionError(ValueError):
    pass


def system_description_to_dict(specs, connectivity, dirichlet) -> dict:
    return {
        "type": "generic",
        "components": [
            {
                "archetype": s.archetype,
                "mu": list(s.mu),
                "rotation": s.rotation,
                "shift": list(s.shift),
                "label": s.label,
            }
            for s in specs
        ],
        "connectivity": [[list(a), list(b)] for a, b in connectivity],
        "dirichlet": [[list(cp), value] for cp, value in dirichlet],
    }


def fin_description(spec: FinSystemSpec, boundary=BOUNDARY_VALUES) -> dict:
    return {"type": "fin", "spec": spec.to_dict(), "boundary": list(boundary)}


def load_system_description(path, library):
    """Assemble a system from a JSON description file (fin or generic form)."""
    with open(path) as fh:
        data = json.load(fh)
    return build_system_from_dict(data, library)


def build_system_from_dict(data: dict, library):
    kind = data.get("type")
    if kind == "fin":
        spec = FinSystemSpec.from_dict(data["spec"])
        boundary = tuple(data.get("boundary", BOUNDARY_VALUES))
        return fin_system(library, spec, boundary)
    if kind == "generic":
        specs = [
            ComponentSpec(
                archetype=c["archetype"],
                mu=tuple(c["mu"]),
                rotation=int(c.get("rotation", 0)),
                shift=tuple(c.get("shift", (0.0, 0.0))),
                label=c.get("label", ""),
            )
            for c in data["components"]
        ]
        connectivity = [
            (tuple(pair[0]), tuple(pair[1])) for pair in data["connectivity"]
        ]
        dirichlet = [(tuple(cp), float(v)) for cp, v in data["dirichlet"]]
        return assemble_system(library, specs, connectivity, dirichlet)
    raise DescriptionError(f"unknown system description type {kind!r}")


# ---------------------------------------------------------------------------
# CSV output (schema version 1; numbers at 17 significant digits)
# ---------------------------------------------------------------------------

CSV_SCHEMA_VERSION = 1

ITERATION_COLUMNS = [
    "iteration",
    "n_rb",
    "q_rb",
    "estimate",
    "relative_estimate",
    "true_error",
    "true_relative_error",
    "effectivity",
    "refined_components",
]


def format_number(x) -> str:
    if x is None:
        return ""
    return f"{float(x):.17g}"


def write_iteration_csv(path, records, header_comment: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"# schema=iterations.v{CSV_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(ITERATION_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    rec.iteration,
                    rec.n_rb,
                    rec.q_rb,
                    format_number(rec.estimate),
                    format_number(rec.relative_estimate),
                    format_number(rec.true_error),
                    format_number(rec.true_relative_error),
                    format_number(rec.effectivity),
                    ";".join(map(str, rec.refined)),
                ]
            )


def write_fidelity_map_csv(path, system, assignment) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema=fidelity-map.v{CSV_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(["component", "label", "archetype", "bubble_level", "port_levels"])
        for ci, fi in enumerate(assignment):
            comp = system.components[ci]
            writer.writerow(
                [
                    ci,
                    comp.label,
                    comp.archetype.id,
                    fi.bubble,
                    ";".join(map(str, fi.ports)),
                ]
            )


def write_rows_csv(path, columns, rows, header_comment: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write(f"# schema=table.v{CSV_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [format_number(v) if isinstance(v, float) else v for v in row]
            )
