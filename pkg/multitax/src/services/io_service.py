"""Record input, solution bundles, reports and checkpoints on disk."""
import json
import logging
import os
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from multitax.src.exceptions import BundleError, RecordFormatError
from multitax.src.models.fields import AllocationField, SkillGrid
from multitax.src.models.lp import LinearProgram
from multitax.src.models.params import ModelParams
from multitax.src.models.records import WorkerRecord
from multitax.src.services.grid_service import make_grid
from multitax.src.services.lp_export import lp_export

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
CHECKPOINT_VERSION = 1
MAX_BAD_FRACTION = 0.01
RECORD_COLUMNS = ("wage", "rel_intensity")
BUNDLE_COLUMNS = ("node", "i_c", "i_m", "alpha_c", "alpha_m", "p_c", "p_m", "mass", "c", "x_c", "x_m", "z", "u")
_CHECKPOINT = re.compile(r"^checkpoint_(\d{4,})\.npz$")


# ─────────────────────────────────────────────────────────────
# 📂 WORKER RECORDS
# ─────────────────────────────────────────────────────────────
def read_records(path: str, delimiter: str = ",") -> Tuple[pd.DataFrame, List[int]]:
    """
    Reads worker records (``wage``, ``rel_intensity``, optional ``weight``).

    Rows failing validation are dropped and reported by file line number
    (header is line 1). More than 1 % malformed rows, a missing column or an
    empty file abort with :class:`RecordFormatError`.

    Returns:
        Tuple[pd.DataFrame, List[int]]: Valid records and the skipped line numbers.
    """
    try:
        raw = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False, skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise RecordFormatError(f"❌ Record file {path} is empty") from e
    except (OSError, pd.errors.ParserError) as e:
        raise RecordFormatError(f"❌ Could not read records from {path}: {e}") from e

    raw.columns = [c.strip() for c in raw.columns]
    missing = [c for c in RECORD_COLUMNS if c not in raw.columns]
    if missing:
        raise RecordFormatError(f"❌ Record file {path} lacks column(s) {missing}")
    if raw.empty:
        raise RecordFormatError(f"❌ Record file {path} has no data rows")

    good: List[Dict[str, float]] = []
    bad: List[int] = []
    has_weight = "weight" in raw.columns
    for pos, row in enumerate(raw.itertuples(index=False)):
        fields = row._asdict()
        payload = {"wage": fields["wage"].strip(), "rel_intensity": fields["rel_intensity"].strip()}
        if has_weight and fields["weight"].strip():
            payload["weight"] = fields["weight"].strip()
        try:
            record = WorkerRecord.model_validate(payload)
        except ValidationError:
            bad.append(pos + 2)
            continue
        if not (np.isfinite(record.wage) and np.isfinite(record.rel_intensity)):
            bad.append(pos + 2)
            continue
        good.append(record.model_dump())

    if len(bad) > MAX_BAD_FRACTION * len(raw):
        raise RecordFormatError(
            f"❌ {len(bad)} of {len(raw)} rows in {path} are malformed (lines {bad[:20]})", bad_lines=bad)
    if not good:
        raise RecordFormatError(f"❌ No valid records in {path}", bad_lines=bad)
    if bad:
        logger.warning(f"⚠️ Skipped {len(bad)} malformed record(s) at lines {bad[:20]}")
    logger.info(f"📂 Read {len(good)} worker records from {path}")
    return pd.DataFrame(good, columns=["wage", "rel_intensity", "weight"]), bad


# ─────────────────────────────────────────────────────────────
# 📝 GENERIC WRITERS
# ─────────────────────────────────────────────────────────────
def write_csv(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def write_json(payload: Dict[str, Any], path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as file:
        json.dump(_jsonable(payload), file, indent=2, sort_keys=True)
        file.write("\n")
    return path


def read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as file:
            return json.load(file)
    except FileNotFoundError as e:
        raise BundleError(f"❌ Missing file {path}") from e
    except json.JSONDecodeError as e:
        raise BundleError(f"❌ {path} is not valid JSON: {e}") from e


# ─────────────────────────────────────────────────────────────
# 🗺️ DENSITY GRIDS
# ─────────────────────────────────────────────────────────────
def grid_frame(grid: SkillGrid) -> pd.DataFrame:
    return pd.DataFrame({
        "node": np.arange(grid.n_nodes),
        "i_c": grid.node_ic,
        "i_m": grid.node_im,
        "alpha_c": grid.node_alpha_c,
        "alpha_m": grid.node_alpha_m,
        "p_c": grid.node_p_c,
        "p_m": grid.node_p_m,
        "mass": grid.density,
    })


def read_density(path: str, params: ModelParams) -> SkillGrid:
    """Rebuilds a lattice from a density CSV written by ``identify``."""
    frame = _read_frame(path, ("i_c", "i_m", "alpha_c", "alpha_m", "mass"))
    frame = frame.sort_values(["i_c", "i_m"], kind="stable")
    alpha_c = frame.groupby("i_c", sort=True)["alpha_c"].first().to_numpy()
    alpha_m = frame.groupby("i_m", sort=True)["alpha_m"].first().to_numpy()
    if len(frame) != alpha_c.size * alpha_m.size:
        raise BundleError(f"❌ {path} does not hold a full rectangular grid")
    return make_grid(alpha_c, alpha_m, params, frame["mass"].to_numpy(), spacing="file")


def _read_frame(path: str, required: Sequence[str]) -> pd.DataFrame:
    if not os.path.exists(path):
        raise BundleError(f"❌ Missing file {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise BundleError(f"❌ Could not parse {path}: {e}") from e
    for column in required:
        if column not in frame.columns:
            raise BundleError(f"❌ {path} is missing column '{column}'")
    return frame


# ─────────────────────────────────────────────────────────────
# 📦 SOLUTION BUNDLES
# ─────────────────────────────────────────────────────────────
def allocation_frame(grid: SkillGrid, alloc: AllocationField) -> pd.DataFrame:
    frame = grid_frame(grid)
    frame["c"] = alloc.c
    frame["x_c"] = alloc.x_c
    frame["x_m"] = alloc.x_m
    frame["z"] = alloc.z
    frame["u"] = alloc.c - grid.node_p_c * alloc.x_c - grid.node_p_m * alloc.x_m
    return frame


def write_bundle(directory: str, grid: SkillGrid, alloc: AllocationField, summary: Dict[str, Any]) -> str:
    """Writes ``allocation.csv`` and ``solution.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    write_csv(allocation_frame(grid, alloc), os.path.join(directory, "allocation.csv"))
    write_json(summary, os.path.join(directory, "solution.json"))
    logger.info(f"📂 Solution bundle written to {directory}")
    return directory


def load_bundle(directory: str, params: ModelParams) -> Tuple[SkillGrid, AllocationField, Dict[str, Any]]:
    """
    Reads a bundle back into a lattice, an allocation and the solution summary.

    Raises:
        BundleError: When a file or a column is missing.
    """
    frame = _read_frame(os.path.join(directory, "allocation.csv"), BUNDLE_COLUMNS)
    summary = read_json(os.path.join(directory, "solution.json"))
    if "lam" not in summary:
        raise BundleError(f"❌ {directory}/solution.json is missing 'lam'")
    frame = frame.sort_values("node", kind="stable")
    alpha_c = frame.groupby("i_c", sort=True)["alpha_c"].first().to_numpy()
    alpha_m = frame.groupby("i_m", sort=True)["alpha_m"].first().to_numpy()
    if len(frame) != alpha_c.size * alpha_m.size:
        raise BundleError(f"❌ {directory}/allocation.csv does not hold a full rectangular grid")
    grid = make_grid(alpha_c, alpha_m, params, frame["mass"].to_numpy(), spacing=summary.get("spacing", "file"))
    alloc = AllocationField(
        c=frame["c"].to_numpy(), x_c=frame["x_c"].to_numpy(), x_m=frame["x_m"].to_numpy(), z=frame["z"].to_numpy())
    return grid, alloc, summary


# ─────────────────────────────────────────────────────────────
# 💾 CHECKPOINTS
# ─────────────────────────────────────────────────────────────
def _checkpoint_paths(directory: str, iteration: int) -> Tuple[str, str]:
    stem = os.path.join(directory, f"checkpoint_{iteration:04d}")
    return stem + ".npz", stem + ".json"


def save_checkpoint(directory: str, iteration: int, arrays: Dict[str, np.ndarray], meta: Dict[str, Any]) -> str:
    os.makedirs(directory, exist_ok=True)
    npz_path, json_path = _checkpoint_paths(directory, iteration)
    with open(npz_path, "wb") as file:
        np.savez(file, **{k: np.asarray(v, dtype=float) for k, v in arrays.items()})
    write_json({**meta, "format_version": CHECKPOINT_VERSION, "iteration": iteration}, json_path)
    logger.debug(f"💾 checkpoint {iteration} saved to {npz_path}")
    return npz_path


def latest_checkpoint(directory: str) -> Optional[int]:
    if not os.path.isdir(directory):
        return None
    found = [int(m.group(1)) for m in map(_CHECKPOINT.match, sorted(os.listdir(directory))) if m]
    return max(found) if found else None


def load_checkpoint(directory: str, iteration: int) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    npz_path, json_path = _checkpoint_paths(directory, iteration)
    meta = read_json(json_path)
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise BundleError(f"❌ checkpoint {json_path} has unsupported format {meta.get('format_version')}")
    try:
        with np.load(npz_path) as data:
            arrays = {k: data[k].copy() for k in data.files}
    except (OSError, ValueError) as e:
        raise BundleError(f"❌ Could not read checkpoint {npz_path}: {e}") from e
    if "z_next" not in arrays:
        raise BundleError(f"❌ checkpoint {npz_path} is missing 'z_next'")
    return arrays, meta


def write_lp_dump(lp: LinearProgram, directory: str, iteration: int, fmt: str = "mps") -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"planner_{iteration:04d}.{'mps' if fmt == 'mps' else 'lp'}")
    with open(path, "wb") as file:
        file.write(lp_export(lp, fmt))
    return path
