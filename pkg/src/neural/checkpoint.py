"""
Network checkpoints.

A checkpoint is one checksummed frame whose header stores the network layout, its
digest, caller metadata and the name/shape of every stored array; the payload is the
arrays in header order as little-endian float64.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ..utils.integrity import digests_match, read_frame, write_frame
from .mlp import MlpSpec, Parameters, ShapeMismatch, check_parameters

CHECKPOINT_MAGIC = b"DNMPCNN\x00"
CHECKPOINT_VERSION = 1

_F8 = np.dtype("<f8")


class CheckpointMismatch(ValueError):
    """Raised when a checkpoint belongs to a different network layout than expected."""
    pass


@dataclass
class Checkpoint:
    spec: MlpSpec
    params: Parameters
    meta: Dict[str, Any]
    extras: Dict[str, np.ndarray] = field(default_factory=dict)


def save_checkpoint(
    path: Union[str, Path],
    spec: MlpSpec,
    params: Parameters,
    meta: Optional[Dict[str, Any]] = None,
    extras: Optional[Dict[str, np.ndarray]] = None,
) -> None:
    """
    Persist network parameters plus named auxiliary arrays.

    Args:
        path: Destination
        spec: Layout the parameters belong to
        params: Weights and biases
        meta: JSON-serializable metadata (schedule, normalizer, training summary, ...)
        extras: Additional arrays stored alongside (embeddings, null token, ...)
    """
    check_parameters(spec, params)
    named: List[tuple] = []
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        named.append((f"W{layer}", w))
        named.append((f"b{layer}", b))
    for name, array in sorted((extras or {}).items()):
        named.append((f"extra:{name}", np.asarray(array, dtype=float)))

    header = {
        "spec": spec.model_dump(mode="json"),
        "spec_digest": spec.digest(),
        "meta": meta or {},
        "arrays": [{"name": name, "shape": list(array.shape)} for name, array in named],
    }
    write_frame(
        path,
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        header,
        [np.ascontiguousarray(array, dtype=_F8).tobytes() for _, array in named],
    )


def load_checkpoint(path: Union[str, Path], expected: Optional[MlpSpec] = None) -> Checkpoint:
    """
    Load and verify a checkpoint.

    Args:
        path: Checkpoint file
        expected: If given, the stored layout digest must match this spec

    Returns:
        Checkpoint with parameters, metadata and extras

    Raises:
        CheckpointMismatch: Stored digest disagrees with the stored or expected spec
        IntegrityError, FormatVersionError, TruncatedFileError: On file corruption
    """
    _, header, payload = read_frame(path, CHECKPOINT_MAGIC, (CHECKPOINT_VERSION,))
    spec = MlpSpec.model_validate(header["spec"])
    stored_digest = header["spec_digest"]
    if not digests_match(stored_digest, spec.digest()):
        raise CheckpointMismatch(f"{path}: layout digest does not match stored layout")
    if expected is not None and not digests_match(expected.digest(), stored_digest):
        raise CheckpointMismatch(
            f"{path}: checkpoint layout {spec.widths} does not match expected {expected.widths}"
        )

    arrays: Dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + 8 * count > len(payload):
            raise ShapeMismatch(f"{path}: payload too short for array {entry['name']}")
        arrays[entry["name"]] = (
            np.frombuffer(payload, dtype=_F8, count=count, offset=offset).reshape(shape).astype(float)
        )
        offset += 8 * count
    if offset != len(payload):
        raise ShapeMismatch(f"{path}: {len(payload) - offset} unexpected payload bytes")

    n_layers = len(spec.widths) - 1
    params = Parameters(
        weights=[arrays[f"W{layer}"] for layer in range(n_layers)],
        biases=[arrays[f"b{layer}"] for layer in range(n_layers)],
    )
    check_parameters(spec, params)
    extras = {name[len("extra:"):]: array for name, array in arrays.items() if name.startswith("extra:")}
    return Checkpoint(spec=spec, params=params, meta=header["meta"], extras=extras)
