"""The m-photon two-level Hamiltonian, its relevant operators and initial states.

The Hamiltonian is

    H(t) = E1 N1 + E2 N2 + omega a^dag a + T(t) (gamma a^m b1 b2^dag + h.c.)

with the fermion modes represented through a Jordan-Wigner string.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .operators import (
    HilbertDims,
    QuantumState,
    embed_fermion1,
    embed_fermion2,
    embed_field,
)

SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]])
SIGMA_Z = np.diag([1.0, -1.0])
FUNDAMENTAL_NAMES = ("N1", "N2", "Delta", "I", "F", "N21")
VARIANTS = ("set1", "set2", "set3")
DRIVE_KINDS = ("constant", "sinusoid", "gaussian-pulse", "step", "custom")


@dataclass(frozen=True)
class DriveSpec:
    """Time profile ``T(t)`` multiplying the interaction.

    Conventions: ``constant`` gives ``A``; ``sinusoid`` gives ``A cos(nu t)``;
    ``gaussian-pulse`` gives ``A exp(-(t - t0)^2 / (2 sigma^2))``; ``step``
    gives ``A`` for ``t >= onset`` and 0 before. ``custom`` wraps any callable
    and is the extension point for other profiles.
    """

    kind: str = "constant"
    amplitude: float = 1.0
    frequency: float = 0.0
    center: float = 0.0
    width: float = 1.0
    onset: float = 0.0
    func: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in DRIVE_KINDS:
            raise ValueError(f"unknown drive kind {self.kind!r}; expected one of {DRIVE_KINDS}")
        if self.kind == "custom" and self.func is None:
            raise ValueError("custom drive needs a callable")
        if self.kind == "gaussian-pulse" and not self.width > 0:
            raise ValueError("gaussian-pulse width must be positive")
        for name in ("amplitude", "frequency", "center", "width", "onset"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"drive {name} must be finite")

    @classmethod
    def constant(cls, amplitude: float = 1.0) -> "DriveSpec":
        return cls("constant", amplitude=amplitude)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    def bound(self) -> float:
        """Upper bound on ``|T(t)|`` for the named kinds."""
        if self.kind == "custom":
            return 1.0
        return abs(self.amplitude)

    def __call__(self, t: float) -> float:
        return drive_value(self, t)


def drive_value(d: DriveSpec, t: float) -> float:
    """Evaluate ``T(t)``."""
    if not math.isfinite(t):
        raise ValueError(f"drive cannot be evaluated at t={t!r}")
    if d.kind == "constant":
        return float(d.amplitude)
    if d.kind == "sinusoid":
        return float(d.amplitude * math.cos(d.frequency * t))
    if d.kind == "gaussian-pulse":
        return float(d.amplitude * math.exp(-((t - d.center) ** 2) / (2.0 * d.width**2)))
    if d.kind == "step":
        return float(d.amplitude) if t >= d.onset else 0.0
    value = float(d.func(t))
    if not math.isfinite(value):
        raise ValueError(f"custom drive returned {value!r} at t={t!r}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Physical constants and truncation of the model.

    Parameters
    ----------
    e1, e2 : float
        Level energies.
    omega : float
        Field frequency.
    gamma : complex
        Coupling constant.
    m : int
        Photon multiplicity of the transition.
    dims : HilbertDims
    drive : DriveSpec
    allow_zero_coupling : bool
        Permit ``gamma == 0`` (free theory); otherwise rejected.
    """

    e1: float
    e2: float
    omega: float
    gamma: complex
    m: int
    dims: HilbertDims
    drive: DriveSpec = field(default_factory=DriveSpec)
    allow_zero_coupling: bool = False

    def __post_init__(self):
        object.__setattr__(self, "gamma", complex(self.gamma))
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be an integer >= 1, got {self.m}")
        if self.dims.n_max < self.m:
            raise ValueError(f"n_max={self.dims.n_max} must be >= m={self.m}")
        if self.gamma == 0 and not self.allow_zero_coupling:
            raise ValueError("gamma = 0 requires allow_zero_coupling=True")
        for name in ("e1", "e2", "omega"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def n_max(self) -> int:
        return self.dims.n_max

    @property
    def detuning(self) -> float:
        """``E2 - E1 - m omega``, the frequency in the I/F rotation."""
        return self.e2 - self.e1 - self.m * self.omega

    def to_dict(self) -> dict:
        return {
            "e1": self.e1,
            "e2": self.e2,
            "omega": self.omega,
            "gamma": [self.gamma.real, self.gamma.imag],
            "m": self.m,
            "n_max": self.n_max,
            "drive": {
                "kind": self.drive.kind,
                "amplitude": self.drive.amplitude,
                "frequency": self.drive.frequency,
                "center": self.drive.center,
                "width": self.drive.width,
                "onset": self.drive.onset,
            },
        }


def ladder_matrices(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncated single-mode ``a`` and ``a^dag`` of size ``n_max + 1``."""
    a = np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1).astype(complex)
    return a, a.conj().T.copy()


def build_field_ops(dims: HilbertDims) -> tuple[np.ndarray, np.ndarray]:
    """Ladder operators embedded in the full space."""
    a, ad = ladder_matrices(dims.n_max)
    return embed_field(a, dims), embed_field(ad, dims)


def build_fermion_ops(dims: HilbertDims) -> tuple[np.ndarray, np.ndarray]:
    """Annihilators ``b1 = s- x 1 x 1`` and ``b2 = sz x s- x 1``."""
    return embed_fermion1(SIGMA_MINUS, dims), embed_fermion2(SIGMA_MINUS, dims, string=SIGMA_Z)


def _fundamental_ops(p: ModelParams) -> dict[str, np.ndarray]:
    a, ad = build_field_ops(p.dims)
    b1, b2 = build_fermion_ops(p.dims)
    n1 = b1.conj().T @ b1
    n2 = b2.conj().T @ b2
    am = np.linalg.matrix_power(a, p.m)
    x = p.gamma * am @ b1 @ b2.conj().T
    xd = x.conj().T
    return {
        "N1": n1,
        "N2": n2,
        "Delta": ad @ a,
        "I": x + xd,
        "F": 1j * (x - xd),
        "N21": n2 @ n1,
    }


def hamiltonian_parts(p: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Static part ``H0`` and the interaction ``H_int`` so ``H = H0 + T(t) H_int``."""
    ops = _fundamental_ops(p)
    h0 = p.e1 * ops["N1"] + p.e2 * ops["N2"] + p.omega * ops["Delta"]
    return h0, ops["I"]


def build_hamiltonian(p: ModelParams, t: float = 0.0) -> np.ndarray:
    h0, hint = hamiltonian_parts(p)
    return h0 + drive_value(p.drive, t) * hint


def member_label(name: str, n: int) -> str:
    return f"{name}[{n}]"


def parse_label(label: str) -> tuple[str, int]:
    """Split ``"Delta[3]"`` into ``("Delta", 3)``."""
    name, _, rest = label.partition("[")
    if name not in FUNDAMENTAL_NAMES or not rest.endswith("]") or not rest[:-1].isdigit():
        raise ValueError(f"malformed operator label {label!r}")
    return name, int(rest[:-1])


@dataclass(frozen=True, eq=False)
class OperatorSet:
    """Ordered, labelled Hermitian operators of one hierarchy variant."""

    variant: str
    depth: int
    labels: tuple[str, ...]
    operators: tuple[np.ndarray, ...]
    dims: HilbertDims

    def __post_init__(self):
        if len(self.labels) != len(self.operators):
            raise ValueError("labels and operators differ in length")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("operator labels must be unique")

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(zip(self.labels, self.operators))

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def __getitem__(self, label: str) -> np.ndarray:
        return self.operators[self.index(label)]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in {self.variant} set of depth {self.depth}") from None

    def levels(self) -> np.ndarray:
        """Hierarchy level ``n`` of each member."""
        return np.array([parse_label(lab)[1] for lab in self.labels])

    def replace(self, label: str, op: np.ndarray) -> "OperatorSet":
        ops = list(self.operators)
        ops[self.index(label)] = op
        return OperatorSet(self.variant, self.depth, self.labels, tuple(ops), self.dims)

    def subset(self, labels) -> "OperatorSet":
        labels = tuple(labels)
        return OperatorSet(self.variant, self.depth, labels, tuple(self[lab] for lab in labels), self.dims)


def build_hierarchy_set(p: ModelParams, variant: str = "set1", depth: int | None = None) -> OperatorSet:
    """Relevant-operator hierarchy of one variant.

    Parameters
    ----------
    p : ModelParams
    variant : {"set1", "set2", "set3"}
        ``set1`` sandwiches as ``a^dag^n O a^n``; ``set2`` symmetrises ``O`` with
        ``a^dag^n a^n``; ``set3`` symmetrises ``O`` with ``(a^dag a)^n``.
    depth : int, optional
        Highest level ``N_h``; defaults to ``n_max``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    depth = p.n_max if depth is None else int(depth)
    if depth < 0 or depth > p.n_max:
        raise ValueError(f"depth {depth} must lie in 0..n_max={p.n_max}")
    base = _fundamental_ops(p)
    a, ad = build_field_ops(p.dims)
    num = ad @ a
    an = np.eye(p.dims.total_dim, dtype=complex)
    numn = an.copy()
    labels, ops = [], []
    for n in range(depth + 1):
        adn = an.conj().T
        for name in FUNDAMENTAL_NAMES:
            O = base[name]
            if variant == "set1":
                M = adn @ O @ an
            elif variant == "set2":
                D = adn @ an
                M = 0.5 * (O @ D + D @ O)
            else:
                M = 0.5 * (O @ numn + numn @ O)
            labels.append(member_label(name, n))
            ops.append(M)
        an = an @ a
        numn = numn @ num
    return OperatorSet(variant, depth, tuple(labels), tuple(ops), p.dims)


def build_fundamental_set(p: ModelParams) -> OperatorSet:
    """Depth-0 set ``N1, N2, Delta, I, F, N21``."""
    return build_hierarchy_set(p, "set1", 0)


def fermion_vector(level: int) -> np.ndarray:
    """Single-particle fermion state: level 1 or level 2 occupied."""
    occ, empty = np.array([0.0, 1.0]), np.array([1.0, 0.0])
    if level == 1:
        return np.kron(occ, empty)
    if level == 2:
        return np.kron(empty, occ)
    raise ValueError(f"level must be 1 or 2, got {level}")


def product_state(dims: HilbertDims, level: int, fock: int) -> QuantumState:
    """``|level> x |fock>``."""
    if not 0 <= fock <= dims.n_max:
        raise ValueError(f"fock {fock} outside 0..{dims.n_max}")
    field_vec = np.zeros(dims.field_dim)
    field_vec[fock] = 1.0
    return QuantumState.pure(np.kron(fermion_vector(level), field_vec), dims)


def coherent_amplitudes(n_max: int, alpha: complex) -> np.ndarray:
    """Truncated and renormalised coherent-state amplitudes."""
    n = np.arange(n_max + 1)
    logfact = np.array([math.lgamma(k + 1) for k in n])
    if alpha == 0:
        c = (n == 0).astype(complex)
    else:
        c = np.exp(n * np.log(complex(alpha)) - 0.5 * logfact)
    return c / np.linalg.norm(c)


def coherent_state(dims: HilbertDims, level: int, alpha: complex) -> QuantumState:
    """``|level> x |alpha>`` truncated at ``n_max``; needs ``|alpha|^2 <= n_max/4``."""
    if abs(alpha) ** 2 > dims.n_max / 4:
        raise ValueError(f"|alpha|^2 = {abs(alpha) ** 2:g} exceeds n_max/4 = {dims.n_max / 4:g}")
    return QuantumState.pure(np.kron(fermion_vector(level), coherent_amplitudes(dims.n_max, alpha)), dims)


def coherent_truncation_weight(n_max: int, alpha: complex) -> float:
    """Poisson weight beyond ``n_max`` discarded by truncation."""
    from scipy.stats import poisson

    return float(poisson.sf(n_max, abs(alpha) ** 2))


def means_of(op_set: OperatorSet | Mapping[str, np.ndarray], s: QuantumState) -> dict[str, float]:
    """Real expectation values of every member."""
    items = op_set if isinstance(op_set, OperatorSet) else op_set.items()
    rho = None if s.kind == "pure" else s.data
    out = {}
    for lab, O in items:
        if rho is None:
            val = np.vdot(s.data, O @ s.data)
        else:
            val = np.einsum("ij,ji->", rho, O)
        out[lab] = float(val.real)
    return out


__all__ = [
    "DriveSpec",
    "ModelParams",
    "OperatorSet",
    "build_field_ops",
    "build_fermion_ops",
    "build_hamiltonian",
    "hamiltonian_parts",
    "build_fundamental_set",
    "build_hierarchy_set",
    "drive_value",
    "product_state",
    "coherent_state",
    "means_of",
]
