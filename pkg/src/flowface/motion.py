"""Latent motion algebra: orthonormal motion dictionary and code composition.

A motion dictionary is an orthonormal basis of latent directions; a latent
path is a magnitude-weighted combination of those directions, and the code
driving the generator is the source code plus that path. All learned
quantities (the basis itself, magnitude vectors, codes) arrive as inputs;
this module is the deterministic algebra over them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KernelError
from .tensorio import read_tensor, write_tensor

ROLE_SOURCE_TO_REFERENCE = "source_to_reference"
ROLE_DRIVING_TO_REFERENCE = "driving_to_reference"
ROLE_PATH_REFERENCE_TO_DRIVING = "path_reference_to_driving"
ROLE_SOURCE_TO_DRIVING = "source_to_driving"

ROLES = (
    ROLE_SOURCE_TO_REFERENCE,
    ROLE_DRIVING_TO_REFERENCE,
    ROLE_PATH_REFERENCE_TO_DRIVING,
    ROLE_SOURCE_TO_DRIVING,
)

# Gram-matrix deviation thresholds: below ACCEPT the basis is taken as-is,
# below CORRECT it is re-orthonormalized, anything worse is rejected.
ORTHO_ACCEPT = 1e-6
ORTHO_CORRECT = 1e-3

# File-template defaults; pure configuration, not derived quantities.
DEFAULT_BASIS_SIZE = 20
DEFAULT_LATENT_DIM = 512


@dataclass
class LatentCode:
    vector: np.ndarray
    role: str

    def __post_init__(self) -> None:
        self.vector = np.asarray(self.vector, dtype=np.float64).reshape(-1)
        if not np.isfinite(self.vector).all():
            raise KernelError("latent code has non-finite components")
        if self.role not in ROLES:
            raise KernelError(f"unknown latent role {self.role!r}")

    @property
    def dim(self) -> int:
        return len(self.vector)


@dataclass
class MotionDictionary:
    """Orthonormal basis, one direction per row: shape (N, L) with N <= L."""

    basis: np.ndarray

    def __post_init__(self) -> None:
        self.basis = np.asarray(self.basis, dtype=np.float64)
        if self.basis.ndim != 2:
            raise KernelError(f"basis must be 2-D, got shape {self.basis.shape}")
        dev = gram_deviation(self.basis)
        if dev > ORTHO_ACCEPT:
            raise KernelError(
                f"basis is not orthonormal (Gram deviation {dev:.3g}); run orthonormalize first"
            )

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.basis.shape[1]


def gram_deviation(rows: np.ndarray) -> float:
    """Max absolute deviation of the row Gram matrix from identity."""
    rows = np.asarray(rows, dtype=np.float64)
    gram = rows @ rows.T
    return float(np.abs(gram - np.eye(len(rows))).max())


def modified_gram_schmidt(rows: np.ndarray, pivot_eps: float = 1e-10) -> np.ndarray:
    """Row-wise modified Gram-Schmidt; raises naming the offending row on rank loss."""
    rows = np.array(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise KernelError(f"expected a 2-D array of vectors, got shape {rows.shape}")
    n, dim = rows.shape
    if n > dim:
        raise KernelError(f"cannot orthonormalize {n} vectors in dimension {dim}")
    out = np.empty_like(rows)
    for i in range(n):
        v = rows[i].copy()
        for j in range(i):
            v -= (out[j] @ v) * out[j]
        norm = float(np.linalg.norm(v))
        if norm < pivot_eps:
            raise KernelError(f"vector {i} is linearly dependent on its predecessors")
        out[i] = v / norm
    return out


def orthonormalize(raw_basis: np.ndarray) -> MotionDictionary:
    """Orthonormal dictionary spanning the same space as ``raw_basis``."""
    return MotionDictionary(basis=modified_gram_schmidt(raw_basis))


def compose_path(magnitudes: np.ndarray, dictionary: MotionDictionary) -> LatentCode:
    """Latent path from reference to driving: sum of magnitude-scaled directions."""
    magnitudes = np.asarray(magnitudes, dtype=np.float64).reshape(-1)
    if len(magnitudes) != dictionary.size:
        raise KernelError(
            f"magnitude vector length {len(magnitudes)} != dictionary size {dictionary.size}"
        )
    return LatentCode(magnitudes @ dictionary.basis, role=ROLE_PATH_REFERENCE_TO_DRIVING)


def compose_code(source_code: LatentCode, path: LatentCode) -> LatentCode:
    """Target latent code: source-to-reference code plus reference-to-driving path."""
    if source_code.dim != path.dim:
        raise KernelError(
            f"latent dimensions differ: {source_code.dim} vs {path.dim}"
        )
    return LatentCode(source_code.vector + path.vector, role=ROLE_SOURCE_TO_DRIVING)


def normalize_basis(rows: np.ndarray, what: str = "dictionary") -> np.ndarray:
    """Accept, correct, or reject a stored basis by its Gram deviation."""
    dev = gram_deviation(rows)
    if dev <= ORTHO_ACCEPT:
        return np.asarray(rows, dtype=np.float64)
    if dev <= ORTHO_CORRECT:
        return modified_gram_schmidt(rows)
    raise KernelError(
        f"{what} is too far from orthonormal (Gram deviation {dev:.3g} > {ORTHO_CORRECT})"
    )


def load_motion_dictionary(path: str | Path) -> MotionDictionary:
    rows = read_tensor(path)
    if rows.ndim != 2:
        raise KernelError(f"motion dictionary file must hold a 2-D tensor, got {rows.shape}")
    return MotionDictionary(basis=normalize_basis(rows, "motion dictionary"))


def save_motion_dictionary(dictionary: MotionDictionary, path: str | Path) -> None:
    write_tensor(path, dictionary.basis, layout="NL", meta={"kind": "motion_dictionary"})


def load_code(path: str | Path, role: str) -> LatentCode:
    vec = read_tensor(path)
    return LatentCode(vec.reshape(-1), role=role)


def save_code(code: LatentCode, path: str | Path) -> None:
    write_tensor(path, code.vector, layout="C", meta={"role": code.role})
