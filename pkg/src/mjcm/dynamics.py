"""Time evolution: exact states, mean-value (Bloch) flow and multiplier flow.

All three paths share one sample grid ``t_k = k * t_end / n_samples``. The
integrator is classical fourth-order Runge-Kutta with a fixed step that
divides each sample interval evenly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .algebra import StructureConstants, exact_structure_constants, printed_coefficients
from .errors import ClosureError, IntegrationError
from .model import ModelParams, OperatorSet, build_hierarchy_set, drive_value, hamiltonian_parts
from .operators import QuantumState

STEP_SAFETY = 5e-4


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 settings.

    Parameters
    ----------
    t_end : float
        Final time.
    step : float, optional
        Base step; ``None`` uses :func:`default_step`.
    n_samples : int
        Number of sample intervals; the grid has ``n_samples + 1`` points.
    convergence_check : bool
        Repeat the run at half step and record the largest change.
    """

    t_end: float
    step: float | None = None
    n_samples: int = 200
    convergence_check: bool = False

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.step is not None and not self.step > 0:
            raise ValueError("step must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_samples + 1)


def frequency_scale(p: ModelParams) -> float:
    """Largest frequency of the problem used by the step rule."""
    n, m = p.n_max, p.m
    coupling = abs(p.gamma) * p.drive.bound() * math.sqrt(math.perm(n, m))
    return max(abs(p.e2 - p.e1), abs(p.omega), abs(p.detuning), coupling, 1e-12)


def default_step(p: ModelParams, safety: float = STEP_SAFETY) -> float:
    """``safety / max(|E2-E1|, omega, |E2-E1-m omega|, |gamma| T_max sqrt(n_max!/(n_max-m)!))``."""
    return safety / frequency_scale(p)


def _substeps(cfg: IntegratorConfig, p: ModelParams) -> tuple[int, float]:
    dt = cfg.t_end / cfg.n_samples
    target = cfg.step if cfg.step is not None else default_step(p)
    k = max(1, math.ceil(dt / target - 1e-9))
    return k, dt / k


@dataclass
class TimeSeries:
    """Sampled trajectories with labelled columns."""

    times: np.ndarray
    columns: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for k, v in self.columns.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.times.shape:
                raise ValueError(f"column {k!r} has length {v.shape}, expected {self.times.shape}")
            self.columns[k] = v

    def __getitem__(self, label: str) -> np.ndarray:
        return self.columns[label]

    @property
    def labels(self) -> list[str]:
        return list(self.columns)

    def to_csv(self, path, labels: Sequence[str] | None = None, extra: Mapping[str, np.ndarray] | None = None) -> None:
        """Write ``t`` and the chosen columns with 17 significant digits."""
        labels = self.labels if labels is None else list(labels)
        cols = [self.times] + [self.columns[lab] for lab in labels]
        header = ["t"] + labels
        for k, v in (extra or {}).items():
            header.append(k)
            cols.append(np.asarray(v, dtype=float))
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in zip(*cols):
                fh.write(",".join("%.17g" % x for x in row) + "\n")


def _rk4_step(f, t: float, y, h: float):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def _rk4_loop(f, y0, times: np.ndarray, k: int, h: float) -> Iterator[np.ndarray]:
    y = y0
    yield y
    for s in range(1, len(times)):
        t = times[s - 1]
        for i in range(k):
            y = _rk4_step(f, t + i * h, y, h)
        yield y


def _rk4_linear_power(A: np.ndarray, k: int, h: float) -> np.ndarray:
    """``R^k`` for the RK4 step matrix ``R`` of ``y' = A y``, in long double."""
    Z = A.astype(np.longdouble) * np.longdouble(h)
    eye = np.eye(len(A), dtype=np.longdouble)
    R = eye + Z @ (eye + Z @ (eye / 2 + Z @ (eye / 6 + Z / 24)))
    out, base = eye.copy(), R
    while k:
        if k & 1:
            out = out @ base
        base = base @ base
        k >>= 1
    return out


def iter_states(p: ModelParams, s0: QuantumState, times: np.ndarray, step: float | None = None,
                method: str = "auto") -> Iterator[QuantumState | np.ndarray]:
    """Yield the state (vector or density matrix) at each time in ``times``.

    ``method="auto"`` propagates exactly through the eigenbasis of ``H`` when
    the drive is constant and uses RK4 otherwise; ``"rk4"`` forces stepping.
    """
    h0, hint = hamiltonian_parts(p)
    y0 = s0.data
    if method == "auto" and p.drive.is_constant:
        H = h0 + p.drive.amplitude * hint
        w, V = np.linalg.eigh(H)
        c0 = V.conj().T @ y0 if s0.kind == "pure" else V.conj().T @ y0 @ V
        for t in times:
            ph = np.exp(-1j * w * t)
            if s0.kind == "pure":
                yield V @ (ph * c0)
            else:
                yield V @ (ph[:, None] * c0 * ph.conj()[None, :]) @ V.conj().T
        return
    target = step if step is not None else default_step(p)
    if s0.kind == "pure":
        def f(t, y):
            return -1j * ((h0 + drive_value(p.drive, t) * hint) @ y)
    else:
        def f(t, y):
            H = h0 + drive_value(p.drive, t) * hint
            return -1j * (H @ y - y @ H)
    y, t_prev = y0, times[0]
    yield y
    for t in times[1:]:
        span = t - t_prev
        k = max(1, math.ceil(span / target - 1e-9))
        hh = span / k
        for i in range(k):
            y = _rk4_step(f, t_prev + i * hh, y, hh)
        t_prev = t
        yield y


def _expectations(stack: np.ndarray, y: np.ndarray, pure: bool) -> np.ndarray:
    """Complex expectations of stacked operators ``(L, d, d)`` in one state."""
    if pure:
        return (stack.reshape(-1, len(y)) @ y).reshape(len(stack), -1) @ y.conj()
    return np.einsum("lij,ji->l", stack, y)


def _as_items(tracked) -> list[tuple[str, np.ndarray]]:
    if isinstance(tracked, OperatorSet):
        return list(tracked)
    return list(tracked.items())


def evolve_exact(p: ModelParams, s0: QuantumState, cfg: IntegratorConfig, tracked,
                 method: str = "auto", drift_tol: float = 1e-8) -> TimeSeries:
    """Sample expectations along the exact trajectory.

    Parameters
    ----------
    p : ModelParams
    s0 : QuantumState
    cfg : IntegratorConfig
    tracked : OperatorSet or mapping label -> operator
    method : {"auto", "rk4"}
        ``auto`` uses the eigendecomposition of ``H`` for a constant drive.
    drift_tol : float
        Abort when norm or trace drifts further than this.

    Raises
    ------
    IntegrationError
        On norm or trace drift beyond ``drift_tol``.
    """
    items = _as_items(tracked)
    times = cfg.times()
    k, h = _substeps(cfg, p)
    stack = np.stack([O for _, O in items]) if items else np.zeros((0,) + s0.rho.shape, complex)
    vals = np.empty((len(times), len(items)))
    max_imag, max_drift = 0.0, 0.0
    pure = s0.kind == "pure"
    for s, y in enumerate(iter_states(p, s0, times, h, method)):
        drift = abs(np.linalg.norm(y) - 1.0) if pure else abs(np.trace(y).real - 1.0)
        max_drift = max(max_drift, drift)
        if drift > drift_tol:
            raise IntegrationError(
                f"{'norm' if pure else 'trace'} drift {drift:.3e} exceeds {drift_tol:g} at t={times[s]:.6g}; "
                "reduce the step"
            )
        if items:
            ev = _expectations(stack, y, pure)
            vals[s] = ev.real
            max_imag = max(max_imag, float(np.max(np.abs(ev.imag))))
    cols = {lab: vals[:, i] for i, (lab, _) in enumerate(items)}
    used = "eigen" if (method == "auto" and p.drive.is_constant) else "rk4"
    meta = {
        "path": "exact",
        "method": used,
        "step": None if used == "eigen" else h,
        "params": p.to_dict(),
        "initial_state": s0.kind,
        "max_imag": max_imag,
        "norm_drift": max_drift,
    }
    return TimeSeries(times, cols, meta)


def structure_for(p: ModelParams, variant: str, depth: int, mode: str = "derived") -> StructureConstants:
    """Coefficients used to drive the mean-value flow of a hierarchy set."""
    if mode == "derived":
        sc = exact_structure_constants(p, variant, depth)
        if not sc.closes(1e-12):
            bad = sc.labels[int(np.argmax(sc.residuals))]
            raise ClosureError(
                f"{variant} at depth {depth} does not close in the truncated space (worst member {bad}); "
                f"use depth = n_max = {p.n_max}"
            )
        return sc
    if mode == "printed":
        if variant != "set1":
            raise ValueError("printed coefficients exist only for set1")
        return printed_coefficients(p, depth)
    raise ValueError(f"coefficient mode must be 'derived' or 'printed', got {mode!r}")


def _ordered_vector(labels: Sequence[str], values: Mapping[str, float], what: str) -> np.ndarray:
    missing = [lab for lab in labels if lab not in values]
    if missing:
        raise ValueError(f"missing initial {what} for label {missing[0]!r}")
    extra = [lab for lab in values if lab not in labels]
    if extra:
        raise ValueError(f"label mismatch: {extra[0]!r} is not a member of the set")
    return np.array([float(values[lab]) for lab in labels])


def _linear_flow(sc: StructureConstants, p: ModelParams, y0: np.ndarray, cfg: IntegratorConfig,
                 transpose: bool, h_override: float | None = None) -> np.ndarray:
    """Integrate ``y' = A(t) y`` with ``A = -g(t).T`` (means) or ``g(t)`` (multipliers)."""
    times = cfg.times()
    k, h = _substeps(cfg, p)
    if h_override is not None:
        k = max(1, math.ceil((cfg.t_end / cfg.n_samples) / h_override - 1e-9))
        h = cfg.t_end / cfg.n_samples / k

    def mat(T):
        g = sc.g0 + T * sc.g1
        return -g.T if transpose else g

    out = np.empty((len(times), len(y0)))
    if p.drive.is_constant:
        P = _rk4_linear_power(mat(p.drive.amplitude), k, h)
        y = y0.astype(np.longdouble)
        out[0] = y0
        for s in range(1, len(times)):
            y = P @ y
            out[s] = y.astype(float)
        return out
    A0 = -sc.g0.T if transpose else sc.g0
    A1 = -sc.g1.T if transpose else sc.g1

    def f(t, y):
        return A0 @ y + drive_value(p.drive, t) * (A1 @ y)

    for s, y in enumerate(_rk4_loop(f, y0.astype(float), times, k, h)):
        out[s] = y
    return out


def evolve_bloch(p: ModelParams, init_means: Mapping[str, float], cfg: IntegratorConfig,
                 variant: str = "set1", depth: int | None = None, mode: str = "derived",
                 structure: StructureConstants | None = None) -> TimeSeries:
    """Integrate ``d<O_j>/dt = -sum_i g_ij(t) <O_i>`` for a hierarchy set.

    Parameters
    ----------
    p : ModelParams
    init_means : mapping label -> float
        Must cover exactly the members of the set, in any order.
    cfg : IntegratorConfig
    variant, depth : set selection; depth defaults to ``n_max``.
    mode : {"derived", "printed"}
    structure : StructureConstants, optional
        Precomputed coefficients; overrides ``mode``.
    """
    depth = p.n_max if depth is None else depth
    sc = structure if structure is not None else structure_for(p, variant, depth, mode)
    y0 = _ordered_vector(sc.labels, init_means, "mean")
    out = _linear_flow(sc, p, y0, cfg, transpose=True)
    meta = {
        "path": "bloch",
        "coefficient_mode": sc.method if structure is not None else mode,
        "step": _substeps(cfg, p)[1],
        "params": p.to_dict(),
    }
    if cfg.convergence_check:
        half = _linear_flow(sc, p, y0, cfg, transpose=True, h_override=_substeps(cfg, p)[1] / 2)
        meta["step_halving_change"] = float(np.max(np.abs(half - out)))
    return TimeSeries(cfg.times(), {lab: out[:, i] for i, lab in enumerate(sc.labels)}, meta)


def evolve_lagrange(p: ModelParams, lambdas: Mapping[str, float], cfg: IntegratorConfig,
                    op_set: OperatorSet, mode: str = "derived",
                    structure: StructureConstants | None = None,
                    reconstruct: bool = True) -> TimeSeries:
    """Integrate the multiplier flow ``d lambda_i/dt = sum_j g_ij(t) lambda_j``.

    Columns ``lambda:<label>`` hold multipliers; when ``reconstruct`` is set
    the mean values of the maximum-entropy state built from them are added
    under the plain labels, along with ``entropy``.
    """
    from .mep import MepState, entropy

    sc = structure if structure is not None else structure_for(p, op_set.variant, op_set.depth, mode)
    if tuple(sc.labels) != tuple(op_set.labels):
        raise ValueError("structure constants and operator set use different labels")
    y0 = _ordered_vector(sc.labels, lambdas, "multiplier")
    out = _linear_flow(sc, p, y0, cfg, transpose=False)
    cols = {f"lambda:{lab}": out[:, i] for i, lab in enumerate(sc.labels)}
    if reconstruct:
        means = np.empty_like(out)
        ent = np.empty(len(out))
        for s in range(len(out)):
            ms = MepState.from_lambdas(op_set, dict(zip(sc.labels, out[s])))
            means[s] = [ms.means[lab] for lab in sc.labels]
            ent[s] = entropy(ms.rho())
        cols.update({lab: means[:, i] for i, lab in enumerate(sc.labels)})
        cols["entropy"] = ent
    meta = {"path": "lagrange", "coefficient_mode": mode, "step": _substeps(cfg, p)[1], "params": p.to_dict()}
    return TimeSeries(cfg.times(), cols, meta)


def validate_means(op_set: OperatorSet, means: Mapping[str, float], tol: float = 1e-8) -> None:
    """Reject mean vectors no state could produce.

    Checks each value against the spectrum of its operator and every linear
    dependency among the members (including members that vanish).
    """
    y = _ordered_vector(op_set.labels, means, "mean")
    for lab, O, v in zip(op_set.labels, op_set.operators, y):
        w = np.linalg.eigvalsh(O)
        slack = tol * max(1.0, float(np.max(np.abs(w))))
        if v < w[0] - slack or v > w[-1] + slack:
            raise ValueError(f"mean of {lab} = {v!r} lies outside its spectrum [{w[0]:.6g}, {w[-1]:.6g}]")
    M = np.stack([O.ravel() for O in op_set.operators], axis=1)
    Mr = np.vstack([M.real, M.imag])
    norms = np.linalg.norm(Mr, axis=0)
    scale = np.where(norms > 0, norms, 1.0)
    _, S, Vh = np.linalg.svd(Mr / scale, full_matrices=False)
    cut = 1e-10 * S[0]
    null = list(Vh[S <= cut]) + [np.eye(len(y))[i] for i in np.nonzero(norms == 0)[0]]
    for v in null:
        c = v / scale
        resid = abs(c @ y)
        if resid > tol * max(1.0, float(np.abs(c) @ np.abs(y))):
            terms = ", ".join(f"{lab}:{x:.3g}" for lab, x in zip(op_set.labels, c) if abs(x) > 1e-9 * np.abs(c).max())
            raise ValueError(f"means violate the linear dependency {{{terms}}} by {resid:.3e}")


def ehrenfest_residual(p: ModelParams, s0: QuantumState, op_set: OperatorSet, cfg: IntegratorConfig,
                       structure: StructureConstants | None = None, mode: str = "derived",
                       h: float = 1e-3, stencil: int = 5) -> dict[str, float]:
    """Largest pointwise ``|d<O>/dt - A(t)<O>|`` per member along the exact path.

    Derivatives come from central differences of spacing ``h`` (five-point
    stencil by default, three-point with ``stencil=3``) at every sample time.
    """
    if stencil not in (3, 5):
        raise ValueError("stencil must be 3 or 5")
    sc = structure if structure is not None else structure_for(p, op_set.variant, op_set.depth, mode)
    if tuple(sc.labels) != tuple(op_set.labels):
        raise ValueError("structure constants and operator set use different labels")
    reach = 2 * h if stencil == 5 else h
    centers = np.clip(cfg.times(), reach, None)
    offsets = (-2, -1, 1, 2) if stencil == 5 else (-1, 1)
    weights = np.array([1, -8, 8, -1]) / (12 * h) if stencil == 5 else np.array([-1, 1]) / (2 * h)
    grid = np.unique(np.concatenate([centers] + [centers + o * h for o in offsets]))
    k, step = _substeps(cfg, p)
    pure = s0.kind == "pure"
    stack = np.stack(op_set.operators)
    means = {t: _expectations(stack, y, pure).real for t, y in zip(grid, iter_states(p, s0, grid, step))}
    worst = np.zeros(len(op_set))
    for t in centers:
        deriv = sum(w * means[t + o * h] for o, w in zip(offsets, weights))
        A = sc.rates(drive_value(p.drive, t))
        worst = np.maximum(worst, np.abs(deriv - A @ means[t]))
    return dict(zip(op_set.labels, worst.tolist()))
