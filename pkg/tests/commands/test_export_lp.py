from multitax.src.commands import export_lp
from multitax.src.services.lp_export import lp_import


# ─────────────────────────────────────────────────────────────
# 🧪 TEST: planner LP export
# ─────────────────────────────────────────────────────────────
def test_export_mps(tmp_path, small_config):
    response = export_lp.run(small_config(), str(tmp_path))

    assert response["path"].endswith("planner.mps")
    assert response["n_vars"] == 6 * 9
    data = (tmp_path / "planner.mps").read_bytes()
    assert data.startswith(b"NAME")
    lp = lp_import(data, "mps")
    assert lp.n_vars == response["n_vars"]
    assert lp.n_rows == response["n_rows"]


def test_export_lp_text(tmp_path, small_config):
    response = export_lp.run(small_config(io={"lp_format": "lp-text"}), str(tmp_path))
    assert response["path"].endswith("planner.lp")
    assert lp_import((tmp_path / "planner.lp").read_bytes(), "lp-text").n_rows == response["n_rows"]


def test_incentive_rows_counted(tmp_path, small_config):
    with_ic = export_lp.run(small_config(), str(tmp_path / "ic"))
    without = export_lp.run(small_config(solver={"ic": False}), str(tmp_path / "no_ic"))
    # 56 irreducible pairs plus one outside-option row per node
    assert with_ic["n_rows"] - without["n_rows"] == 56 + 9
