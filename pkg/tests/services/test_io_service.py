import json

import numpy as np
import pandas as pd
import pytest

from multitax.src.exceptions import BundleError, RecordFormatError
from multitax.src.models.run_config import SolverSpec
from multitax.src.services.io_service import (
    grid_frame,
    latest_checkpoint,
    load_bundle,
    load_checkpoint,
    read_density,
    read_json,
    read_records,
    save_checkpoint,
    write_bundle,
    write_csv,
    write_json,
    write_lp_dump,
)
from multitax.src.services.planner_service import (
    assemble_planner_lp,
    benchmark_closed_form,
    enumerate_irreducible,
    initial_state,
    node_tangents,
)


def _records(tmp_path, rows, header="wage,rel_intensity"):
    path = tmp_path / "records.csv"
    path.write_text("\n".join([header, *rows]) + "\n")
    return str(path)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: worker records
# ─────────────────────────────────────────────────────────────
def test_read_records_defaults_weight(tmp_path):
    frame, bad = read_records(_records(tmp_path, ["1.5,0.8", "2.0,1.2"]))
    assert bad == []
    assert frame["wage"].tolist() == [1.5, 2.0]
    assert frame["weight"].tolist() == [1.0, 1.0]


def test_read_records_with_weights_and_delimiter(tmp_path):
    path = _records(tmp_path, ["1.5;0.8;2", "2.0;1.2;"], header="wage;rel_intensity;weight")
    frame, _ = read_records(path, delimiter=";")
    assert frame["weight"].tolist() == [2.0, 1.0]


def test_read_records_skips_a_few_bad_rows(tmp_path):
    rows = [f"{1 + i / 100},1.0" for i in range(300)]
    rows[10] = "abc,1.0"
    rows[20] = "-1.0,1.0"
    rows[30] = "inf,1.0"
    frame, bad = read_records(_records(tmp_path, rows))
    # header is line 1
    assert bad == [12, 22, 32]
    assert len(frame) == 297


def test_read_records_aborts_on_many_bad_rows(tmp_path):
    rows = ["1.0,1.0"] * 50 + ["x,y"] * 2
    with pytest.raises(RecordFormatError) as excinfo:
        read_records(_records(tmp_path, rows))
    assert excinfo.value.bad_lines == [52, 53]
    assert excinfo.value.exit_code == 4


@pytest.mark.parametrize("content", ["", "wage,rel_intensity\n", "wage,other\n1.0,2.0\n"])
def test_read_records_rejects_unusable_files(tmp_path, content):
    path = tmp_path / "records.csv"
    path.write_text(content)
    with pytest.raises(RecordFormatError):
        read_records(str(path))


def test_read_records_missing_file(tmp_path):
    with pytest.raises(RecordFormatError):
        read_records(str(tmp_path / "absent.csv"))


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: writers
# ─────────────────────────────────────────────────────────────
def test_write_csv_keeps_full_precision(tmp_path):
    path = write_csv(pd.DataFrame({"v": [1 / 3]}), str(tmp_path / "nested" / "v.csv"))
    assert pd.read_csv(path)["v"].iloc[0] == 1 / 3


def test_write_json_converts_numpy_and_non_finite(tmp_path):
    path = write_json({"a": np.float64(1.5), "b": np.array([1, 2]), "c": np.inf, "d": np.bool_(True),
                       3: (np.int64(4), np.nan)}, str(tmp_path / "out.json"))
    assert read_json(path) == {"a": 1.5, "b": [1, 2], "c": None, "d": True, "3": [4, None]}


def test_read_json_errors(tmp_path):
    with pytest.raises(BundleError):
        read_json(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(BundleError):
        read_json(str(broken))


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: density grids and bundles
# ─────────────────────────────────────────────────────────────
def test_density_round_trip(tmp_path, grid_3x3, params):
    path = write_csv(grid_frame(grid_3x3), str(tmp_path / "density.csv"))
    grid = read_density(path, params)
    assert grid.shape == (3, 3)
    assert np.allclose(grid.alpha_c, grid_3x3.alpha_c, rtol=0, atol=1e-15)
    assert np.allclose(grid.density, grid_3x3.density)


def test_read_density_needs_a_full_grid(tmp_path, grid_3x3, params):
    path = write_csv(grid_frame(grid_3x3).iloc[:-1], str(tmp_path / "density.csv"))
    with pytest.raises(BundleError):
        read_density(path, params)


def test_bundle_round_trip(tmp_path, grid_3x3, welfare_params):
    bench, lam = benchmark_closed_form(grid_3x3, 1.0, welfare_params)
    write_bundle(str(tmp_path), grid_3x3, bench, {"lam": lam, "spacing": grid_3x3.spacing})
    grid, alloc, summary = load_bundle(str(tmp_path), welfare_params)
    assert summary["lam"] == pytest.approx(lam)
    assert np.array_equal(alloc.x_c, bench.x_c)
    assert np.array_equal(alloc.c, bench.c)
    assert grid.spacing == "uniform-p"
    frame = pd.read_csv(tmp_path / "allocation.csv")
    expected_u = bench.c - grid_3x3.node_p_c * bench.x_c - grid_3x3.node_p_m * bench.x_m
    assert frame["u"].to_numpy() == pytest.approx(expected_u)


def test_bundle_missing_pieces(tmp_path, grid_3x3, welfare_params):
    bench, _ = benchmark_closed_form(grid_3x3, 1.0, welfare_params)
    write_bundle(str(tmp_path), grid_3x3, bench, {"spacing": "uniform-p"})
    with pytest.raises(BundleError):
        load_bundle(str(tmp_path), welfare_params)
    (tmp_path / "allocation.csv").unlink()
    with pytest.raises(BundleError):
        load_bundle(str(tmp_path), welfare_params)


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: checkpoints and LP dumps
# ─────────────────────────────────────────────────────────────
def test_checkpoint_round_trip(tmp_path):
    directory = str(tmp_path / "ckpt")
    assert latest_checkpoint(directory) is None
    for it in (0, 1, 12):
        save_checkpoint(directory, it, {"z": np.full(2, it), "z_next": np.full(2, it + 1)}, {"objectives": [0.5] * it})
    assert latest_checkpoint(directory) == 12
    arrays, meta = load_checkpoint(directory, 12)
    assert arrays["z_next"].tolist() == [13.0, 13.0]
    assert meta["iteration"] == 12 and len(meta["objectives"]) == 12


def test_checkpoint_format_checks(tmp_path):
    directory = tmp_path / "ckpt"
    save_checkpoint(str(directory), 0, {"z": np.ones(2)}, {})
    with pytest.raises(BundleError):
        load_checkpoint(str(directory), 0)
    save_checkpoint(str(directory), 1, {"z": np.ones(2), "z_next": np.ones(2)}, {})
    meta_path = directory / "checkpoint_0001.json"
    meta_path.write_text(json.dumps({"format_version": 99}))
    with pytest.raises(BundleError):
        load_checkpoint(str(directory), 1)


def test_write_lp_dump(tmp_path, grid_3x3, welfare_params):
    spec = SolverSpec()
    z = np.ones(grid_3x3.n_nodes)
    state = initial_state(grid_3x3, z, welfare_params, spec)
    tangents = node_tangents(state, welfare_params, spec.max_tangents)
    lp = assemble_planner_lp(grid_3x3, z, tangents, enumerate_irreducible(grid_3x3), welfare_params, state=state)
    path = write_lp_dump(lp, str(tmp_path), 3)
    assert path.endswith("planner_0003.mps")
    assert (tmp_path / "planner_0003.mps").read_text().startswith("NAME")
    assert write_lp_dump(lp, str(tmp_path), 3, fmt="lp").endswith("planner_0003.lp")
