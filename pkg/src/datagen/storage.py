"""
Dataset persistence: checksummed binary files and a delimited text export.
"""
import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from ..utils.integrity import read_frame, write_frame
from .generator import Dataset

logger = logging.getLogger(__name__)

DATASET_MAGIC = b"DNMPCDS\x00"
DATASET_VERSION = 1
SUPPORTED_VERSIONS = (1,)

_F8 = np.dtype("<f8")
_I8 = np.dtype("<i8")


class DatasetFormatError(ValueError):
    """Raised when a dataset file is well-framed but its content is inconsistent."""
    pass


def write_dataset(ds: Dataset, path: Union[str, Path]) -> None:
    """
    Write a dataset as one checksummed frame.

    The payload holds, in order: states, sequences, costs, convergence flags (as 0/1
    floats) and provenance indices, all little-endian 64-bit.
    """
    count, n_x = ds.states.shape
    _, horizon, n_u = ds.sequences.shape
    header = dict(ds.header)
    header["layout"] = {"count": count, "n_x": n_x, "horizon": horizon, "n_u": n_u}
    header["record_count"] = count
    write_frame(
        path,
        DATASET_MAGIC,
        DATASET_VERSION,
        header,
        [
            ds.states.astype(_F8).tobytes(),
            ds.sequences.astype(_F8).tobytes(),
            ds.costs.astype(_F8).tobytes(),
            ds.converged.astype(_F8).tobytes(),
            ds.indices.astype(_I8).tobytes(),
        ],
    )
    logger.info("Wrote %d records to %s", count, path)


def read_dataset(path: Union[str, Path]) -> Dataset:
    """
    Read and verify a dataset file.

    Raises:
        FormatVersionError: Unknown magic or version
        TruncatedFileError: File shorter than declared
        IntegrityError: Checksum mismatch
        DatasetFormatError: Payload size does not match the declared layout
    """
    _, header, payload = read_frame(path, DATASET_MAGIC, SUPPORTED_VERSIONS)
    try:
        layout = header["layout"]
        count, n_x = int(layout["count"]), int(layout["n_x"])
        horizon, n_u = int(layout["horizon"]), int(layout["n_u"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: missing or invalid layout header") from exc

    sizes = [count * n_x, count * horizon * n_u, count, count, count * 3]
    expected = 8 * sum(sizes)
    if len(payload) != expected:
        raise DatasetFormatError(f"{path}: payload has {len(payload)} bytes, layout needs {expected}")

    arrays = []
    offset = 0
    for size, dtype in zip(sizes, [_F8, _F8, _F8, _F8, _I8]):
        arrays.append(np.frombuffer(payload, dtype=dtype, count=size, offset=offset).copy())
        offset += 8 * size

    header.pop("layout")
    return Dataset(
        header=header,
        states=arrays[0].reshape(count, n_x).astype(float),
        sequences=arrays[1].reshape(count, horizon, n_u).astype(float),
        costs=arrays[2].astype(float),
        converged=arrays[3] != 0.0,
        indices=arrays[4].reshape(count, 3).astype(np.int64),
    )


def dataset_frame(ds: Dataset) -> pd.DataFrame:
    """One row per record: provenance, flags, cost, state entries, sequence entries."""
    n_x = ds.states.shape[1]
    flat = ds.sequences.reshape(len(ds), -1)
    frame = pd.DataFrame({
        "trajectory_id": ds.indices[:, 0],
        "step_index": ds.indices[:, 1],
        "perturbation_index": ds.indices[:, 2],
        "converged": ds.converged.astype(int),
        "cost": ds.costs,
    })
    states = pd.DataFrame(ds.states, columns=[f"x{k}" for k in range(n_x)])
    inputs = pd.DataFrame(flat, columns=[f"u{k}" for k in range(flat.shape[1])])
    return pd.concat([frame, states, inputs], axis=1)


def export_text(ds: Dataset, path: Union[str, Path]) -> None:
    """Human-readable comma-separated export with full float precision."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    dataset_frame(ds).to_csv(path, index=False, float_format="%.17g")
