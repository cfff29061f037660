"""Closure of relevant-operator sets under commutation with H.

Convention: ``[H, O_j] = i sum_i g[i, j] O_i``, so that
``d<O_j>/dt = -sum_i g[i, j] <O_i>``. The flow (rate) matrix acting on the
mean vector is therefore ``A = -g.T`` and its rows are the equations.
Time dependence factors as ``g(t) = g0 + T(t) g1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _exact
from .model import (
    ModelParams,
    OperatorSet,
    build_hierarchy_set,
    hamiltonian_parts,
    means_of,
    member_label,
    parse_label,
)
from .operators import HilbertDims, QuantumState


@dataclass
class StructureConstants:
    """Structure constants of an operator set.

    Attributes
    ----------
    labels : tuple of str
    g0, g1 : ndarray
        Static and drive-multiplied parts, ``g[i, j]`` couples ``O_i`` into
        the commutator of ``O_j``.
    residuals : ndarray
        Per member, relative norm of the unexplained remainder.
    n_safe : int or None
        Photon cutoff of the projected check; None means the full space.
    method : str
        ``"lstsq"``, ``"exact"`` or ``"printed"``.
    max_imag : float
        Largest imaginary part of the coefficients when solved over complex
        numbers (a reality diagnostic; the stored ``g`` are real).
    imag_effect : float
        Relative norm of the operator combination carried by those imaginary
        parts; large ``max_imag`` with tiny ``imag_effect`` means the
        imaginary parts lie along near-dependent directions.
    dependencies : list of dict
        Null directions of the set (linear dependencies), label -> weight.
    null_members : list of str
        Members that vanish on the checked subspace.
    """

    labels: tuple[str, ...]
    g0: np.ndarray
    g1: np.ndarray
    residuals: np.ndarray
    n_safe: int | None = None
    method: str = "lstsq"
    variant: str = "set1"
    max_imag: float = 0.0
    imag_effect: float = 0.0
    dependencies: list = field(default_factory=list)
    null_members: list = field(default_factory=list)

    def g(self, t_value: float = 1.0) -> np.ndarray:
        """``g0 + T g1`` for a drive value ``T``."""
        return self.g0 + t_value * self.g1

    def rates(self, t_value: float = 1.0) -> np.ndarray:
        """Flow matrix ``A`` with ``d<O>/dt = A <O>``."""
        return -self.g(t_value).T

    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if len(self.residuals) else 0.0

    def closes(self, tol: float = 1e-9) -> bool:
        return self.max_residual() < tol

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "method": self.method,
            "variant": self.variant,
            "n_safe": self.n_safe,
            "residuals": {lab: float(r) for lab, r in zip(self.labels, self.residuals)},
            "max_residual": self.max_residual(),
            "max_imag": self.max_imag,
            "imag_effect": self.imag_effect,
            "dependencies": self.dependencies,
            "null_members": self.null_members,
            "g0": self.g0.tolist(),
            "g1": self.g1.tolist(),
        }


def _safe_mask(dims: HilbertDims, n_safe: int | None) -> np.ndarray | None:
    if n_safe is None:
        return None
    return dims.photon_numbers() <= n_safe


def _project(O: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return O
    return O[np.ix_(mask, mask)]


def solve_structure_constants(
    H_parts: tuple[np.ndarray, np.ndarray],
    op_set: OperatorSet,
    n_safe: int | None = None,
    sv_cutoff: float = 1e-12,
    refine: int = 2,
) -> StructureConstants:
    """Least-squares structure constants on the photon-number safe block.

    Each commutator ``-i[H_part, O_j]`` and each member is projected onto
    photon sectors ``<= n_safe`` and expanded over the vectorised members.
    Columns are normalised and a pseudo-inverse with cutoff
    ``sv_cutoff * sigma_max`` handles dependent members. ``refine`` rounds of
    iterative refinement recover the accuracy lost to the Vandermonde-like
    conditioning of deep sets.

    Parameters
    ----------
    H_parts : (H0, H_int)
        Static Hamiltonian and the operator multiplied by ``T(t)``.
    op_set : OperatorSet
    n_safe : int, optional
        Photon cutoff; ``None`` solves on the full truncated space.
    sv_cutoff : float
    refine : int

    Returns
    -------
    StructureConstants
        Residuals are ``||defect|| / max(||P[H,O]P||, ||O||, 1)`` per member,
        the larger of the two Hamiltonian parts. The member norm in the
        denominator keeps rounding noise of commutators that cancel on the
        safe block from posing as a defect.
    """
    if len(op_set) == 0:
        raise ValueError("operator set is empty")
    dims = op_set.dims
    if n_safe is not None and not 0 <= n_safe <= dims.n_max:
        raise ValueError(f"n_safe={n_safe} must lie in 0..n_max={dims.n_max}")
    mask = _safe_mask(dims, n_safe)
    members = [_project(O, mask) for O in op_set.operators]
    M = np.stack([O.ravel() for O in members], axis=1)
    # real inner product Re Tr[A^dagger B]: stack real and imaginary parts
    Mr = np.vstack([M.real, M.imag])
    norms = np.linalg.norm(Mr, axis=0)
    full_norms = np.array([np.linalg.norm(O) for O in op_set.operators])
    null = norms <= 1e-12 * full_norms
    scale = np.where(null, 1.0, norms)
    Ms = Mr / scale
    U, S, Vh = np.linalg.svd(Ms, full_matrices=False)
    keep = S > sv_cutoff * S[0] if S.size and S[0] > 0 else np.zeros_like(S, dtype=bool)

    dependencies = []
    for k in np.nonzero(~keep)[0]:
        v = Vh[k] / scale
        v = v / np.max(np.abs(v))
        dep = {lab: float(c) for lab, c, z in zip(op_set.labels, v, null) if abs(c) > 1e-8 and not z}
        if dep:
            dependencies.append(dep)

    solve = (Vh[keep].T / S[keep]) @ U[:, keep].T
    # complex-coefficient solve, kept only as a reality diagnostic
    Mc = M / scale
    csolve = np.linalg.pinv(Mc, rcond=sv_cutoff)
    gs, res, imag, imag_effect = [], np.zeros(len(op_set)), 0.0, 0.0
    for H in H_parts:
        R = np.stack(
            [_project(-1j * (H @ O - O @ H), mask).ravel() for O in op_set.operators], axis=1
        )
        Rr = np.vstack([R.real, R.imag])
        Rnorm = np.maximum(np.maximum(np.linalg.norm(R, axis=0), full_norms), 1.0)
        g = solve @ Rr
        gc = csolve @ R
        for _ in range(refine):
            g = g + solve @ (Rr - Ms @ g)
            gc = gc + csolve @ (R - Mc @ gc)
        imag_effect = max(imag_effect, float(np.max(np.linalg.norm(Mc @ gc.imag, axis=0) / Rnorm)))
        g = g / scale[:, None]
        g[null, :] = 0.0
        imag = max(imag, float(np.max(np.abs(gc.imag / scale[:, None]))))
        defect = np.linalg.norm(M @ g - R, axis=0) / Rnorm
        res = np.maximum(res, defect)
        gs.append(g)
    return StructureConstants(
        labels=tuple(op_set.labels),
        g0=gs[0],
        g1=gs[1],
        residuals=res,
        n_safe=n_safe,
        method="lstsq",
        variant=op_set.variant,
        max_imag=imag,
        imag_effect=imag_effect,
        dependencies=dependencies,
        null_members=[lab for lab, z in zip(op_set.labels, null) if z],
    )


def _degree(label: str) -> int:
    return 1 if parse_label(label)[0] in ("I", "F") else 0


def exact_structure_constants(
    p: ModelParams, variant: str = "set1", depth: int | None = None, n_safe: int | None = None
) -> StructureConstants:
    """Structure constants from an exact rational elimination.

    Accurate to double rounding even where the members span many orders of
    magnitude, which the least-squares route cannot match at large depth.
    Residuals are the largest unexplained entry (0 when the set closes
    exactly). Members left undetermined get zero rows and are listed in
    ``null_members``.
    """
    depth = p.n_max if depth is None else int(depth)
    if depth > p.n_max:
        raise ValueError(f"depth {depth} must lie in 0..n_max={p.n_max}")
    labels, parts, free = _exact.unit_coupling_constants(p.n_max, p.m, variant, depth, n_safe)
    g0 = p.e1 * parts["N1"][0] + p.e2 * parts["N2"][0] + p.omega * parts["Delta"][0]
    deg = np.array([_degree(lab) for lab in labels])
    amp = abs(p.gamma)
    if amp == 0:
        g1 = np.zeros_like(g0)
    else:
        g1 = parts["I"][0] * amp ** (1 + deg[None, :] - deg[:, None])
    residuals = np.max([left for _, left in parts.values()], axis=0)
    return StructureConstants(
        labels=tuple(labels),
        g0=g0,
        g1=g1,
        residuals=residuals,
        n_safe=n_safe,
        method="exact",
        variant=variant,
        null_members=free,
    )


def derive_structure_constants(
    p: ModelParams,
    variant: str = "set1",
    depth: int | None = None,
    n_safe: int | None = None,
    method: str = "exact",
) -> StructureConstants:
    """Structure constants for a configured set by either solver."""
    if method == "exact":
        return exact_structure_constants(p, variant, depth, n_safe)
    if method == "lstsq":
        return solve_structure_constants(hamiltonian_parts(p), build_hierarchy_set(p, variant, depth), n_safe)
    raise ValueError(f"unknown method {method!r}")


def _falling(m: int, k: int) -> int:
    return math.perm(m, k)


def printed_coefficients(p: ModelParams, depth: int, literal_tail: bool = False) -> StructureConstants:
    """Closed-form hierarchy coefficients for the ``set1`` variant.

    The binomial and falling-factorial tails are summed in full. The I/F
    rotation uses the literal detuning ``E2 - E1 - omega`` for every ``m``.
    With ``literal_tail=True`` the second term of the F tail takes index
    ``n + m - 1`` (as typeset) instead of ``n + m - 2``. References to levels
    beyond ``depth`` are dropped.
    """
    m = p.m
    alpha = p.e2 - p.e1 - p.omega
    labels = [member_label(name, n) for n in range(depth + 1) for name in _exact.NAMES]
    pos = {lab: i for i, lab in enumerate(labels)}
    L = len(labels)
    A0, A1 = np.zeros((L, L)), np.zeros((L, L))

    def put(A, row, name, n, value):
        if 0 <= n <= depth:
            A[pos[row], pos[member_label(name, n)]] += value

    g2 = 2.0 * abs(p.gamma) ** 2
    for n in range(depth + 1):
        r = member_label("N1", n)
        for k in range(min(n, m) + 1):
            put(A1, r, "F", n - k, math.comb(n, k) * _falling(m, k))
        put(A1, member_label("N2", n), "F", n, -1.0)
        r = member_label("Delta", n)
        for k in range(1, min(m, n + 1) + 1):
            put(A1, r, "F", n + 1 - k, math.comb(n + 1, k) * _falling(m, k))
        put(A0, member_label("I", n), "F", n, alpha)
        r = member_label("F", n)
        put(A0, r, "I", n, -alpha)
        put(A1, r, "N1", n + m, -g2)
        put(A1, r, "N2", n + m, g2)
        for k in range(1, m + 1):
            c = g2 * math.comb(n + m, k) * _falling(m, k)
            level = n + m - 1 if (literal_tail and k == 2) else n + m - k
            put(A1, r, "N2", level, c)
            put(A1, r, "N21", level, -c)
    return StructureConstants(
        labels=tuple(labels),
        g0=-A0.T,
        g1=-A1.T,
        residuals=np.zeros(L),
        method="printed",
        variant="set1",
    )


@dataclass
class DiscrepancyReport:
    """Entrywise differences between two coefficient matrices in flow form."""

    entries: list[dict]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def is_empty(self) -> bool:
        return not self.entries

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.entries, **kwargs)


def compare_coefficients(
    derived: StructureConstants,
    printed: StructureConstants,
    max_row_depth: int | None = None,
    atol: float = 1e-8,
    rtol: float = 1e-8,
) -> DiscrepancyReport:
    """List flow-matrix entries where two coefficient sets disagree.

    Rows are equations ``d<O_row>/dt``; ``part`` is ``"static"`` or
    ``"drive"``. Only rows with level ``<= max_row_depth`` are compared when
    given.
    """
    if tuple(derived.labels) != tuple(printed.labels):
        raise ValueError("coefficient sets use different operator orderings")
    labels = derived.labels
    levels = [parse_label(lab)[1] for lab in labels]
    entries = []
    for part, gd, gp in (("static", derived.g0, printed.g0), ("drive", derived.g1, printed.g1)):
        Ad, Ap = -gd.T, -gp.T
        bad = np.abs(Ad - Ap) > atol + rtol * np.maximum(np.abs(Ad), np.abs(Ap))
        for r, c in zip(*np.nonzero(bad)):
            if max_row_depth is not None and levels[r] > max_row_depth:
                continue
            entries.append(
                {
                    "row_label": labels[r],
                    "col_label": labels[c],
                    "part": part,
                    "derived": float(Ad[r, c]),
                    "printed": float(Ap[r, c]),
                }
            )
    return DiscrepancyReport(entries)


@dataclass
class ConservedFunctionals:
    """``values[n-1]`` for ``n = 1..N_h`` and ``double_occ[n]`` for ``n = 0..N_h``."""

    values: list[float]
    double_occ: list[float]


def conserved_labels(depth: int) -> list[str]:
    """``set1`` labels needed to evaluate the conserved functionals."""
    labs = []
    for n in range(depth + 1):
        labs += [member_label("N1", n), member_label("N2", n), member_label("Delta", n), member_label("N21", n)]
    return labs


def conserved_from_means(means: Mapping[str, float], depth: int) -> ConservedFunctionals:
    """Evaluate the functionals from ``set1`` mean values."""
    if depth < 1:
        raise ValueError("conserved functionals need depth >= 1")
    vals = [
        means[member_label("N1", n)] + means[member_label("N2", n)] - means[member_label("Delta", n - 1)]
        for n in range(1, depth + 1)
    ]
    docc = [means[member_label("N21", n)] for n in range(depth + 1)]
    return ConservedFunctionals(vals, docc)


def conserved_functionals(op_set: OperatorSet, s: QuantumState) -> ConservedFunctionals:
    """Conserved functionals of a state, using a ``set1`` hierarchy."""
    if op_set.variant != "set1":
        raise ValueError(f"conserved functionals are defined on set1, got {op_set.variant}")
    labs = conserved_labels(op_set.depth)
    return conserved_from_means(means_of(op_set.subset(labs), s), op_set.depth)


def conserved_columns(means_by_label: Mapping[str, Sequence[float]], depth: int) -> dict[str, np.ndarray]:
    """Time series of functional drifts ``cons_n*`` and double occupations ``docc_n*``."""
    cols = {}
    for n in range(1, depth + 1):
        v = (
            np.asarray(means_by_label[member_label("N1", n)])
            + np.asarray(means_by_label[member_label("N2", n)])
            - np.asarray(means_by_label[member_label("Delta", n - 1)])
        )
        cols[f"cons_n{n}"] = v - v[0]
    for n in range(depth + 1):
        cols[f"docc_n{n}"] = np.asarray(means_by_label[member_label("N21", n)], dtype=float)
    return cols
