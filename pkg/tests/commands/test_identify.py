import numpy as np
import pandas as pd
import pytest

from multitax.src.commands import identify, solve
from multitax.src.exceptions import MultitaxError, RecordFormatError
from multitax.src.services.positive_service import identify_batch


@pytest.fixture
def records_file(tmp_path, rng):
    """150 synthetic workers plus one malformed line (line 152)."""
    frame = pd.DataFrame({
        "wage": rng.uniform(0.5, 3.0, 150),
        "rel_intensity": rng.uniform(0.5, 2.0, 150),
        "weight": rng.uniform(0.5, 1.5, 150),
    })
    path = tmp_path / "records.csv"
    frame.to_csv(path, index=False)
    with open(path, "a") as file:
        file.write("n/a,1.0,1.0\n")
    return path


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: identification pipeline
# ─────────────────────────────────────────────────────────────
def test_identify_writes_tables(tmp_path, small_config, records_file):
    out = tmp_path / "identified"
    response = identify.run(small_config(grid={"n_c": 4, "n_m": 4}), str(out), records=str(records_file))

    assert response["status"] == "success"
    assert response["skipped_lines"] == [152]

    table = pd.read_csv(out / "identified.csv")
    assert len(table) == 150
    assert np.allclose(table["alpha_c_rho"], table["alpha_c"] ** 2.8)
    assert np.allclose(table["ell_c"] * table["alpha_c"], table["x_c"])
    assert np.allclose(table["x_m"] / table["x_c"], table["rel_intensity"])

    density = pd.read_csv(out / "density.csv")
    assert len(density) == 16
    assert density["mass"].sum() == pytest.approx(1.0)
    assert (density["mass"] >= 0).all()


def test_identify_winsorizes_skills_after_inversion(tmp_path, small_config, records_file):
    clipped = small_config(grid={"n_c": 4, "n_m": 4})
    identify.run(clipped, str(tmp_path / "clipped"), records=str(records_file))
    identify.run(small_config(grid={"n_c": 4, "n_m": 4}, identification={"winsorize": [0.0, 100.0]}),
                 str(tmp_path / "raw"), records=str(records_file))

    table = pd.read_csv(tmp_path / "clipped" / "identified.csv")
    expected = identify_batch(table["wage"].to_numpy(), table["rel_intensity"].to_numpy(), clipped.params)
    assert np.allclose(table["alpha_c"], expected["alpha_c"], rtol=1e-12)
    assert table["alpha_c"].max() > np.percentile(table["alpha_c"], 95.0)

    mass_clipped = pd.read_csv(tmp_path / "clipped" / "density.csv")["mass"]
    mass_raw = pd.read_csv(tmp_path / "raw" / "density.csv")["mass"]
    assert not np.allclose(mass_clipped, mass_raw)


def test_identified_density_feeds_solve(tmp_path, small_config, records_file):
    identify.run(small_config(), str(tmp_path / "identified"), records=str(records_file))
    config = small_config(density={"source": "file", "path": str(tmp_path / "identified" / "density.csv")})
    response = solve.run(config, str(tmp_path / "solved"))
    assert response["status"] == "success"
    assert len(pd.read_csv(tmp_path / "solved" / "allocation.csv")) == 9


def test_identify_uses_config_records(tmp_path, small_config, records_file):
    response = identify.run(small_config(io={"records": str(records_file)}), str(tmp_path))
    assert response["identified"].endswith("identified.csv")


def test_identify_without_records(tmp_path, small_config):
    with pytest.raises(MultitaxError):
        identify.run(small_config(), str(tmp_path))


def test_identify_rejects_mostly_broken_file(tmp_path, small_config):
    path = tmp_path / "bad.csv"
    path.write_text("wage,rel_intensity\n1.0,1.0\nx,1.0\n")
    with pytest.raises(RecordFormatError):
        identify.run(small_config(), str(tmp_path / "out"), records=str(path))
