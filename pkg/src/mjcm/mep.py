"""Maximum-entropy density matrices over a relevant-operator set.

``rho = exp(-lambda_0 - sum_j lambda_j O_j)`` with ``lambda_0`` fixed by
normalisation. Fitting minimises the convex dual
``lambda_0(lambda) + sum_j lambda_j mu_j`` by damped Newton steps.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConvergenceError
from .model import ModelParams, OperatorSet, member_label
from .operators import QuantumState

MAX_EXPONENT_SPREAD = 700.0


def _spectrum(op_set: OperatorSet, lam: np.ndarray):
    K = np.zeros((op_set.dims.total_dim,) * 2, dtype=complex)
    for c, O in zip(lam, op_set.operators):
        if c != 0.0:
            K += c * O
    k, V = np.linalg.eigh(0.5 * (K + K.conj().T))
    spread = k[-1] - k[0]
    if spread > MAX_EXPONENT_SPREAD:
        raise OverflowError(
            f"exponent spectrum spans {spread:.3g} > {MAX_EXPONENT_SPREAD:g}; "
            "scale the multipliers down or use a smaller truncation"
        )
    return k, V


def _vector(op_set: OperatorSet, lambdas: Mapping[str, float]) -> np.ndarray:
    unknown = [lab for lab in lambdas if lab not in op_set]
    if unknown:
        raise KeyError(f"multiplier label {unknown[0]!r} not in the operator set")
    lam = np.array([float(lambdas.get(lab, 0.0)) for lab in op_set.labels])
    if not np.all(np.isfinite(lam)):
        raise ValueError("multipliers must be finite")
    return lam


def log_partition(op_set: OperatorSet, lam: np.ndarray) -> float:
    """``lambda_0 = ln Tr exp(-sum_j lambda_j O_j)``."""
    k, _ = _spectrum(op_set, np.asarray(lam, dtype=float))
    return float(np.log(np.sum(np.exp(-(k - k[0])))) - k[0])


def _state_data(op_set: OperatorSet, lam: np.ndarray):
    k, V = _spectrum(op_set, lam)
    w = np.exp(-(k - k[0]))
    Z = w.sum()
    lam0 = float(np.log(Z) - k[0])
    p = w / Z
    rho = (V * p) @ V.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    means = np.array([np.einsum("ij,ji->", rho, O).real for O in op_set.operators])
    return k, V, p, lam0, rho, means


@dataclass(frozen=True, eq=False)
class MepState:
    """Multipliers in duality with mean values over one operator set."""

    op_set: OperatorSet
    lambdas: dict[str, float]
    lambda0: float
    means: dict[str, float]
    info: dict = field(default_factory=dict)

    @classmethod
    def from_lambdas(cls, op_set: OperatorSet, lambdas: Mapping[str, float]) -> "MepState":
        """Build the state; unspecified multipliers are zero."""
        lam = _vector(op_set, lambdas)
        _, _, _, lam0, _, means = _state_data(op_set, lam)
        return cls(op_set, dict(zip(op_set.labels, lam.tolist())), lam0, dict(zip(op_set.labels, means.tolist())))

    def vector(self) -> np.ndarray:
        return np.array([self.lambdas[lab] for lab in self.op_set.labels])

    def rho(self) -> QuantumState:
        return build_rho(self)

    def to_dict(self) -> dict:
        return {
            "set_variant": self.op_set.variant,
            "depth": self.op_set.depth,
            "lambdas": dict(self.lambdas),
            "lambda0": self.lambda0,
            "means": dict(self.means),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def build_rho(m: MepState) -> QuantumState:
    """Density matrix ``exp(-lambda_0 - sum_j lambda_j O_j)``."""
    *_, rho, _ = _state_data(m.op_set, m.vector())
    return QuantumState.density(rho, m.op_set.dims)


def kubo_mori_covariance(op_set: OperatorSet, lam: np.ndarray) -> np.ndarray:
    """Hessian of ``lambda_0``: the Kubo-Mori covariance of the members."""
    k, V, p, _, _, means = _state_data(op_set, lam)
    ka, kb = k[:, None], k[None, :]
    lo = np.minimum(ka, kb)
    gap = np.abs(ka - kb)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(gap > 1e-12, -np.expm1(-gap) / np.where(gap > 0, gap, 1.0), 1.0)
    W = np.exp(-(lo - k[0])) * ratio / np.exp(-(k - k[0])).sum()
    T = np.stack([V.conj().T @ O @ V for O in op_set.operators])
    flat = (T * W).reshape(len(T), -1)
    cov = (flat @ T.conj().reshape(len(T), -1).T).real
    return 0.5 * (cov + cov.T) - np.outer(means, means)


def entropy(s: QuantumState) -> float:
    """Von Neumann entropy ``-Tr[rho ln rho]`` from the spectrum."""
    if s.kind == "pure":
        return 0.0
    w = np.linalg.eigvalsh(s.data)
    if w.min() < -1e-10:
        raise ValueError(f"density matrix has eigenvalue {w.min():.3e} < -1e-10")
    w = w[w > 0]
    return float(-np.sum(w * np.log(w)))


def _feasibility(op_set: OperatorSet, targets: Mapping[str, float]) -> None:
    for lab, v in targets.items():
        w = np.linalg.eigvalsh(op_set[lab])
        slack = 1e-12 * max(1.0, abs(w[0]), abs(w[-1]))
        if not (w[0] + slack < v < w[-1] - slack):
            raise ConvergenceError(
                f"target <{lab}> = {v!r} is not strictly inside the spectrum "
                f"[{w[0]:.12g}, {w[-1]:.12g}]; violated bound "
                f"{'lower' if v <= w[0] + slack else 'upper'}"
            )


def fit_lambdas(op_set: OperatorSet, targets: Mapping[str, float], tol: float = 1e-10,
                max_iter: int = 200) -> MepState:
    """Fit multipliers of the targeted members; the rest stay zero.

    Damped Newton on the dual with a pseudo-inverse Hessian and step halving
    until the dual decreases, starting from ``lambda = 0``.

    Returns
    -------
    MepState
        ``info`` holds the iteration count, final gap and any gauge
        directions (combinations of multipliers that leave ``rho`` unchanged).

    Raises
    ------
    ConvergenceError
        For targets on or outside the spectral boundary, or when
        ``max_iter`` is reached; the message reports the final gap.
    """
    for lab in targets:
        if lab not in op_set:
            raise KeyError(f"target label {lab!r} not in the operator set")
    _feasibility(op_set, targets)
    labels = [lab for lab in op_set.labels if lab in targets]
    sub = op_set.subset(labels)
    mu = np.array([float(targets[lab]) for lab in labels])
    lam = np.zeros(len(labels))

    def dual(x):
        return log_partition(sub, x) + x @ mu

    it, gap = 0, 0.0
    if labels:
        f = dual(lam)
        for it in range(1, max_iter + 1):
            means = _state_data(sub, lam)[-1]
            grad = mu - means
            gap = float(np.max(np.abs(grad)))
            if gap < tol:
                break
            H = kubo_mori_covariance(sub, lam)
            step = -np.linalg.pinv(H, rcond=1e-12, hermitian=True) @ grad
            t = 1.0
            while True:
                try:
                    f_new = dual(lam + t * step)
                except OverflowError:
                    f_new = np.inf
                if f_new <= f + 1e-4 * t * (grad @ step) or t < 1e-12:
                    break
                t *= 0.5
            lam = lam + t * step
            f = min(f, f_new)
        else:
            means = _state_data(sub, lam)[-1]
            gap = float(np.max(np.abs(mu - means)))
            if gap >= tol:
                raise ConvergenceError(f"fit did not converge in {max_iter} iterations; final gap {gap:.3e}")
    gauge = []
    if labels:
        H = kubo_mori_covariance(sub, lam)
        w, U = np.linalg.eigh(H)
        for i in np.nonzero(w <= 1e-10 * max(1.0, w[-1]))[0]:
            v = U[:, i] / np.max(np.abs(U[:, i]))
            gauge.append({lab: float(c) for lab, c in zip(labels, v) if abs(c) > 1e-8})
    full = dict.fromkeys(op_set.labels, 0.0)
    full.update(zip(labels, lam.tolist()))
    state = MepState.from_lambdas(op_set, full)
    state.info.update({"iterations": it, "gap": gap, "gauge": gauge})
    return state


def duality_gradient_check(m: MepState, h: float = 1e-5) -> float:
    """Largest ``|d lambda_0/d lambda_j + <O_j>|`` by central differences."""
    lam = m.vector()
    worst = 0.0
    for j, lab in enumerate(m.op_set.labels):
        e = np.zeros_like(lam)
        e[j] = h
        d = (log_partition(m.op_set, lam + e) - log_partition(m.op_set, lam - e)) / (2 * h)
        worst = max(worst, abs(d + m.means[lab]))
    return worst


def thermal_lambdas(p: ModelParams, beta: float) -> dict[str, float]:
    """Multipliers of ``exp(-beta (E1 N1 + E2 N2 + omega a^dag a))``."""
    return {
        member_label("N1", 0): beta * p.e1,
        member_label("N2", 0): beta * p.e2,
        member_label("Delta", 0): beta * p.omega,
    }
