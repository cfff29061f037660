"""Dense operator scaffolding for a two-mode fermion plus single field mode.

Operators are plain complex ``numpy`` arrays of shape ``(total_dim, total_dim)``.
The tensor ordering is fixed as fermion mode 1, fermion mode 2, field.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import DimensionError, NotHermitianError

FERMION_DIM = 4


@dataclass(frozen=True)
class HilbertDims:
    """Dimensions of the truncated Hilbert space.

    Parameters
    ----------
    n_max : int
        Fock truncation; photon numbers run over ``0..n_max``.
    """

    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {self.n_max}")

    @property
    def fermion_dim(self) -> int:
        return FERMION_DIM

    @property
    def field_dim(self) -> int:
        return self.n_max + 1

    @property
    def total_dim(self) -> int:
        return FERMION_DIM * self.field_dim

    def photon_numbers(self) -> np.ndarray:
        """Photon number of every basis index."""
        return np.tile(np.arange(self.field_dim), FERMION_DIM)

    @classmethod
    def from_total(cls, total_dim: int) -> "HilbertDims":
        if total_dim % FERMION_DIM or total_dim < 2 * FERMION_DIM:
            raise DimensionError(f"dimension {total_dim} is not 4*(n_max+1) with n_max >= 1")
        return cls(total_dim // FERMION_DIM - 1)


def _check_square(A: np.ndarray, name: str = "operator") -> None:
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")


def _check_same(A: np.ndarray, B: np.ndarray) -> None:
    _check_square(A, "first operator")
    _check_square(B, "second operator")
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch: {A.shape} vs {B.shape}")


def tensor_embed(factors: Sequence[np.ndarray], dims: HilbertDims | None = None) -> np.ndarray:
    """Kronecker product of ``factors`` in the given order.

    Parameters
    ----------
    factors : sequence of square arrays
        Usually ``[fermion1, fermion2, field]``.
    dims : HilbertDims, optional
        When given, the product dimension must equal ``dims.total_dim``.

    Raises
    ------
    DimensionError
        If a factor is not square or the dimensions do not multiply to the
        target size. The message names the offending factor index.
    """
    if not factors:
        raise DimensionError("at least one factor is required")
    mats = []
    for k, f in enumerate(factors):
        f = np.asarray(f, dtype=complex)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise DimensionError(f"factor {k} is not square: shape {f.shape}")
        mats.append(f)
    if dims is not None:
        expected = [2, 2, dims.field_dim] if len(mats) == 3 else None
        if expected is not None:
            for k, (f, e) in enumerate(zip(mats, expected)):
                if f.shape[0] != e:
                    raise DimensionError(f"factor {k} has dimension {f.shape[0]}, expected {e}")
        total = int(np.prod([f.shape[0] for f in mats]))
        if total != dims.total_dim:
            raise DimensionError(
                f"factor {len(mats) - 1}: product dimension {total} != total_dim {dims.total_dim}"
            )
    return reduce(np.kron, mats)


def embed_fermion1(op: np.ndarray, dims: HilbertDims) -> np.ndarray:
    return tensor_embed([op, np.eye(2), np.eye(dims.field_dim)], dims)


def embed_fermion2(op: np.ndarray, dims: HilbertDims, string: np.ndarray | None = None) -> np.ndarray:
    first = np.eye(2) if string is None else string
    return tensor_embed([first, op, np.eye(dims.field_dim)], dims)


def embed_field(op: np.ndarray, dims: HilbertDims) -> np.ndarray:
    return tensor_embed([np.eye(2), np.eye(2), op], dims)


def commutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Return ``AB - BA``."""
    _check_same(A, B)
    return A @ B - B @ A


def anticommutator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Return ``AB + BA``."""
    _check_same(A, B)
    return A @ B + B @ A


def hermiticity_defect(A: np.ndarray) -> float:
    """Largest entrywise ``|A - A^dagger|``."""
    _check_square(A)
    return float(np.max(np.abs(A - A.conj().T))) if A.size else 0.0


def is_hermitian(A: np.ndarray, tol: float = 1e-10, relative: bool = False) -> bool:
    """Check ``max |A - A^dagger| <= tol``.

    With ``relative=True`` the tolerance is scaled by ``max(1, max|A|)``, which
    suits the large-entry hierarchy operators.
    """
    scale = max(1.0, float(np.max(np.abs(A)))) if relative and A.size else 1.0
    return hermiticity_defect(A) <= tol * scale


def _eigh_checked(H: np.ndarray, tol: float):
    _check_square(H)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    if hermiticity_defect(H) > tol * scale:
        raise NotHermitianError(
            f"matrix is not Hermitian: max |H - H^dagger| = {hermiticity_defect(H):.3e}"
        )
    return np.linalg.eigh(0.5 * (H + H.conj().T))


def hermitian_expm(H: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """``exp(H)`` for Hermitian ``H`` via eigendecomposition."""
    w, V = _eigh_checked(np.asarray(H, dtype=complex), tol)
    return (V * np.exp(w)) @ V.conj().T


def propagator(H: np.ndarray, t: float, tol: float = 1e-10) -> np.ndarray:
    """Unitary ``exp(-i H t)`` for Hermitian ``H``."""
    w, V = _eigh_checked(np.asarray(H, dtype=complex), tol)
    return (V * np.exp(-1j * w * t)) @ V.conj().T


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure state vector or density matrix.

    Parameters
    ----------
    kind : {"pure", "density"}
    data : ndarray
        State vector of length ``dims.total_dim`` or a square density matrix.
    dims : HilbertDims
    """

    kind: str
    data: np.ndarray
    dims: HilbertDims

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        d = self.dims.total_dim
        if self.kind == "pure":
            if data.shape != (d,):
                raise DimensionError(f"state vector must have shape ({d},), got {data.shape}")
            norm = np.linalg.norm(data)
            if abs(norm - 1.0) > 1e-12:
                raise ValueError(f"pure state norm is {norm!r}, expected 1 within 1e-12")
        elif self.kind == "density":
            if data.shape != (d, d):
                raise DimensionError(f"density matrix must have shape ({d}, {d}), got {data.shape}")
            if hermiticity_defect(data) > 1e-12:
                raise NotHermitianError("density matrix is not Hermitian within 1e-12")
            tr = np.trace(data).real
            if abs(tr - 1.0) > 1e-12:
                raise ValueError(f"density matrix trace is {tr!r}, expected 1 within 1e-12")
            wmin = np.linalg.eigvalsh(data).min()
            if wmin < -1e-10:
                raise ValueError(f"density matrix has eigenvalue {wmin:.3e} < -1e-10")
        else:
            raise ValueError(f"kind must be 'pure' or 'density', got {self.kind!r}")

    @classmethod
    def pure(cls, vec, dims: HilbertDims) -> "QuantumState":
        return cls("pure", vec, dims)

    @classmethod
    def density(cls, rho, dims: HilbertDims) -> "QuantumState":
        return cls("density", rho, dims)

    @property
    def rho(self) -> np.ndarray:
        if self.kind == "density":
            return self.data
        return np.outer(self.data, self.data.conj())

    def to_density(self) -> "QuantumState":
        return self if self.kind == "density" else QuantumState.density(self.rho, self.dims)


def expectation(O: np.ndarray, s: QuantumState) -> complex:
    """``Tr[rho O]`` or ``<psi|O|psi>``."""
    _check_square(O)
    if O.shape[0] != s.dims.total_dim:
        raise DimensionError(f"operator dimension {O.shape[0]} != state dimension {s.dims.total_dim}")
    if s.kind == "pure":
        return complex(np.vdot(s.data, O @ s.data))
    return complex(np.einsum("ij,ji->", s.data, O))
