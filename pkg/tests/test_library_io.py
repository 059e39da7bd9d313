import json

import numpy as np
import pytest

from comrom.eqp import RqRule
from comrom.library import (
    LibraryFormatError,
    library_checksum,
    library_stats,
    load_library,
    save_library,
)

from toys import plant_training_data, toy_trained_component


@pytest.fixture()
def trained_toy(rng):
    comp, lib = toy_trained_component()
    plant_training_data(comp, lib, rng)
    comp.rq_rules[(1, 1, 1)] = RqRule(
        fidelity=(1, 1, 1),
        indices=np.array([0, 3, 11], dtype=np.int64),
        weights=np.array([0.1, 0.2, 0.3]),
        tolerance=1e-3,
    )
    comp.eps_rb[(1, 1, 1)] = 0.05
    comp.eta[(1, 1, 1)] = 0.4
    comp.eta_skipped[(1, 1, 1)] = 1
    lib.provenance = {"seed": 7}
    return lib


def test_roundtrip_is_bitwise(trained_toy, tmp_path):
    path = tmp_path / "lib.npz"
    save_library(trained_toy, path)
    back = load_library(path, trained_toy.node_map_registry)
    assert library_checksum(back) == library_checksum(trained_toy)
    comp0 = trained_toy.component("sq")
    comp1 = back.component("sq")
    np.testing.assert_array_equal(comp0.bubble_modes, comp1.bubble_modes)
    np.testing.assert_array_equal(comp0.lifted[(0, True)], comp1.lifted[(0, True)])
    np.testing.assert_array_equal(
        comp0.rq_rules[(1, 1, 1)].weights, comp1.rq_rules[(1, 1, 1)].weights
    )
    assert comp1.eps_rb == comp0.eps_rb
    assert comp1.eta == comp0.eta
    assert comp1.eta_skipped[(1, 1, 1)] == 1
    assert back.provenance == {"seed": 7}
    np.testing.assert_array_equal(
        back.port("line").pod_modes, trained_toy.port("line").pod_modes
    )


def test_truncated_file_detected(trained_toy, tmp_path):
    path = tmp_path / "lib.npz"
    save_library(trained_toy, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(LibraryFormatError):
        load_library(path, trained_toy.node_map_registry)


def test_corrupted_payload_fails_checksum(trained_toy, tmp_path):
    path = tmp_path / "lib.npz"
    save_library(trained_toy, path)
    with np.load(path, allow_pickle=False) as data:
        payload = {k: data[k] for k in data.files}
    key = "comp/sq/bubble_modes"
    payload[key] = payload[key] + 1e-9
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    with pytest.raises(LibraryFormatError, match="checksum"):
        load_library(path, trained_toy.node_map_registry)


def test_version_mismatch_detected(trained_toy, tmp_path):
    path = tmp_path / "lib.npz"
    save_library(trained_toy, path)
    with np.load(path, allow_pickle=False) as data:
        payload = {k: data[k] for k in data.files}
    header = json.loads(bytes(payload["__header__"].tobytes()).decode())
    header["format_version"] = 99
    payload["__header__"] = np.frombuffer(
        json.dumps(header, sort_keys=True).encode(), dtype=np.uint8
    )
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    with pytest.raises(LibraryFormatError, match="version"):
        load_library(path, trained_toy.node_map_registry)


def test_stats_formula_single_component_example(trained_toy):
    # one trained fidelity with 7 points, 2 bubble modes, two 1-mode ports:
    # no contraction entries and 7 * (1 + (2 + 2) * 3) = 91 scalars
    comp = trained_toy.component("sq")
    comp.rq_rules = {
        (2, 1, 1): RqRule((2, 1, 1), np.arange(7), np.ones(7) / 7.0, 1e-3)
    }
    comp.eta = {}
    stats = library_stats(trained_toy)
    assert stats["per_component"]["sq"] == 91
    assert stats["total_scalars"] == 91


def test_stats_empty_library():
    from comrom.library import ComponentLibrary

    assert library_stats(ComponentLibrary())["total_scalars"] == 0


def test_stats_counts_eta_entries(trained_toy):
    stats = library_stats(trained_toy)
    comp = trained_toy.component("sq")
    rule = comp.rq_rules[(1, 1, 1)]
    expected = 1 + rule.n_points * (1 + (1 + 1 + 1) * 3)
    assert stats["per_component"]["sq"] == expected


def test_loaded_library_stats_match(trained_toy, tmp_path):
    path = tmp_path / "lib.npz"
    save_library(trained_toy, path)
    back = load_library(path, trained_toy.node_map_registry)
    assert library_stats(back) == library_stats(trained_toy)
