"""Flow maps of the optimization dynamics and their fixed-step integrator.

Three continuous-time methods are implemented on the budget hyperplane:
plain Laplacian-gradient descent, the heavy-ball method with a fixed
damping gain, and its hybrid-inspired variant whose damping switches
between a low and a high gain by the sign of <L grad, p>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import LaplacianPair
from .objectives import QuadraticObjective

TIE_RULES = ("take_hi", "take_lo", "midpoint")

# Steps on which the damping sign flips are re-integrated with this many
# substeps so the energy decrease survives the discontinuity.
EVENT_SUBSTEPS = 16

# Sign flips with |s| below this floor are float chatter around an
# equilibrium, not material crossings; refining them buys nothing.
EVENT_REFINE_FLOOR = 1e-12


@dataclass(frozen=True)
class OptState:
    """Positions and momenta on the flow set: 1^T q = d, 1^T p = 0."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1-D with equal length")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @staticmethod
    def from_stacked(z: np.ndarray) -> "OptState":
        n = z.shape[-1] // 2
        return OptState(q=z[:n], p=z[n:])


@dataclass(frozen=True)
class DampingBounds:
    """Admissible damping interval [lo, hi] with 0 < lo <= hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (0 < self.lo <= self.hi):
            raise ValueError(f"need 0 < lo <= hi, got ({self.lo}, {self.hi})")


@dataclass(frozen=True)
class DynamicsSpec:
    """Which flow to integrate and its parameters.

    kind is one of 'gradient', 'hbm' (requires gain) and 'hihbm'
    (requires bounds). hysteresis > 0 freezes the damping selection per
    step and only lets it flip once |s| exceeds the band width.
    """

    kind: str
    gain: float | None = None
    bounds: DampingBounds | None = None
    tie: str = "take_hi"
    hysteresis: float = 0.0
    refine_events: bool = True

    def __post_init__(self):
        if self.kind not in ("gradient", "hbm", "hihbm"):
            raise ValueError(f"unknown dynamics kind {self.kind!r}")
        if self.kind == "hbm" and self.gain is None:
            raise ValueError("hbm dynamics require a gain")
        if self.kind == "hihbm" and self.bounds is None:
            raise ValueError("hihbm dynamics require damping bounds")
        if self.tie not in TIE_RULES:
            raise ValueError(f"unknown tie rule {self.tie!r}; expected one of {TIE_RULES}")


def select_kappa(s, lo: float, hi: float, tie: str = "take_hi"):
    """Damping gain as a function of the switching inner product s.

    Returns hi for s > 0, lo for s < 0 and the tie rule's pick from
    [lo, hi] on the s = 0 surface. Broadcasts over s.
    """
    if tie == "take_hi":
        tie_value = hi
    elif tie == "take_lo":
        tie_value = lo
    elif tie == "midpoint":
        tie_value = 0.5 * (lo + hi)
    else:
        raise ValueError(f"unknown tie rule {tie!r}; expected one of {TIE_RULES}")
    return np.where(s > 0, hi, np.where(s < 0, lo, tie_value))


def kappa(s: float, bounds: DampingBounds, tie: str = "take_hi") -> float:
    return float(select_kappa(s, bounds.lo, bounds.hi, tie))


def hbm_flow(x: OptState, gain: float, obj: QuadraticObjective,
             lap: LaplacianPair) -> OptState:
    """(q_dot, p_dot) = (p, -gain p - L grad(q))."""
    lg = lap.L @ obj.gradient(x.q)
    return OptState(q=x.p.copy(), p=-gain * x.p - lg)


def hihbm_flow(x: OptState, bounds: DampingBounds, obj: QuadraticObjective,
               lap: LaplacianPair, tie: str = "take_hi") -> OptState:
    """Heavy-ball flow with the sign-switched damping selection."""
    lg = lap.L @ obj.gradient(x.q)
    s = float(lg @ x.p)
    k = float(select_kappa(s, bounds.lo, bounds.hi, tie))
    return OptState(q=x.p.copy(), p=-k * x.p - lg)


def gradient_flow(q: np.ndarray, obj: QuadraticObjective,
                  lap: LaplacianPair) -> np.ndarray:
    """q_dot = -L grad(q); preserves the budget since 1^T L = 0."""
    return -(lap.L @ obj.gradient(q))


def project_feasible(x: OptState, d: float) -> OptState:
    """Exact orthogonal projection onto 1^T q = d, 1^T p = 0."""
    n = x.n
    q = x.q - (x.q.sum() - d) / n
    p = x.p - x.p.sum() / n
    return OptState(q=q, p=p)


# ---------------------------------------------------------------------------
# Batched right-hand sides and stepping. States are stacked as
# z = [q, p] with shape (..., 2n); all evaluations broadcast over leading
# axes so one call advances a whole batch of trajectories.


def make_rhs(spec: DynamicsSpec, L: np.ndarray):
    """Build f(z, curv, lin) -> dz for the chosen dynamics.

    curv and lin carry the active mode's coefficients per row, shape
    broadcastable against (..., n).
    """
    n = L.shape[0]
    kind = spec.kind

    if kind == "gradient":
        def rhs(z, curv, lin):
            q = z[..., :n]
            lg = (curv * q + lin) @ L
            dz = np.empty_like(z)
            dz[..., :n] = -lg
            dz[..., n:] = 0.0
            return dz
        return rhs

    if kind == "hbm":
        gain = spec.gain

        def rhs(z, curv, lin):
            q = z[..., :n]
            p = z[..., n:]
            lg = (curv * q + lin) @ L
            dz = np.empty_like(z)
            dz[..., :n] = p
            dz[..., n:] = -gain * p - lg
            return dz
        return rhs

    lo, hi, tie = spec.bounds.lo, spec.bounds.hi, spec.tie

    def rhs(z, curv, lin, kappa_override=None):
        q = z[..., :n]
        p = z[..., n:]
        lg = (curv * q + lin) @ L
        if kappa_override is None:
            s = np.sum(lg * p, axis=-1)
            k = select_kappa(s, lo, hi, tie)
        else:
            k = kappa_override
        dz = np.empty_like(z)
        dz[..., :n] = p
        dz[..., n:] = -np.expand_dims(np.asarray(k), -1) * p - lg
        return dz
    return rhs


def switching_product(z: np.ndarray, curv, lin, L: np.ndarray) -> np.ndarray:
    """s = <L grad(q), p>, the damping switching surface coordinate."""
    n = L.shape[0]
    q = z[..., :n]
    p = z[..., n:]
    return np.sum(((curv * q + lin) @ L) * p, axis=-1)


def rk4_step(rhs, z: np.ndarray, h: float, *args, **kwargs) -> np.ndarray:
    k1 = rhs(z, *args, **kwargs)
    k2 = rhs(z + (0.5 * h) * k1, *args, **kwargs)
    k3 = rhs(z + (0.5 * h) * k2, *args, **kwargs)
    k4 = rhs(z + h * k3, *args, **kwargs)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def advance_step(z: np.ndarray, h: float, rhs, spec: DynamicsSpec,
                 curv, lin, L: np.ndarray,
                 kappa_state: np.ndarray | None = None) -> np.ndarray:
    """One integration step of the selected dynamics for a batch.

    For the sign-switched damping, steps across the switching surface are
    optionally re-integrated with EVENT_SUBSTEPS substeps; elsewhere a
    plain RK4 step is taken with the damping re-selected at every stage.
    With hysteresis the per-row gain in kappa_state is frozen within the
    step and updated at its end.
    """
    if spec.kind != "hihbm":
        return rk4_step(rhs, z, h, curv, lin)

    if spec.hysteresis > 0.0:
        z_new = rk4_step(rhs, z, h, curv, lin, kappa_override=kappa_state)
        s_new = switching_product(z_new, curv, lin, L)
        lo, hi = spec.bounds.lo, spec.bounds.hi
        kappa_state[s_new > spec.hysteresis] = hi
        kappa_state[s_new < -spec.hysteresis] = lo
        return z_new

    z_new = rk4_step(rhs, z, h, curv, lin)
    if not spec.refine_events:
        return z_new

    s0 = switching_product(z, curv, lin, L)
    s1 = switching_product(z_new, curv, lin, L)
    crossed = ((s0 * s1) < 0.0) & (np.maximum(np.abs(s0), np.abs(s1)) > EVENT_REFINE_FLOOR)
    if not np.any(crossed):
        return z_new
    zc = z[crossed]
    curv_c = curv[crossed] if getattr(curv, "ndim", 1) == 2 else curv
    lin_c = lin[crossed] if getattr(lin, "ndim", 1) == 2 else lin
    hs = h / EVENT_SUBSTEPS
    for _ in range(EVENT_SUBSTEPS):
        zc = rk4_step(rhs, zc, hs, curv_c, lin_c)
    z_new[crossed] = zc
    return z_new


def project_stacked(z: np.ndarray, d: float, n: int) -> np.ndarray:
    """In-place feasibility projection of stacked states."""
    z[..., :n] -= np.expand_dims((z[..., :n].sum(axis=-1) - d) / n, -1)
    z[..., n:] -= np.expand_dims(z[..., n:].sum(axis=-1) / n, -1)
    return z


def integrate_flow(spec: DynamicsSpec, obj: QuadraticObjective, lap: LaplacianPair,
                   x0: OptState, d: float, horizon: float, step: float,
                   backward: bool = False, record_every: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Integrate a single fixed-mode trajectory.

    Returns (t, Z) with Z[k] the stacked state at t[k]. The state is
    re-projected onto the flow set after every step. backward=True
    integrates dz/dt = -f(z), the reversed-time inclusion with the same
    damping selection.
    """
    n = obj.n
    nsteps = int(round(horizon / step))
    base = make_rhs(spec, lap.L)
    sign = -1.0 if backward else 1.0

    if backward:
        def rhs(z, curv, lin, **kw):
            return -base(z, curv, lin, **kw)
    else:
        rhs = base

    curv = obj.curvature
    lin = obj.linear
    z = x0.stacked()[None, :].copy()
    kappa_state = None
    if spec.kind == "hihbm" and spec.hysteresis > 0.0:
        s0 = switching_product(z, curv, lin, lap.L) * sign
        kappa_state = np.asarray(select_kappa(s0, spec.bounds.lo, spec.bounds.hi, spec.tie), dtype=float)

    rec_idx = list(range(0, nsteps + 1, record_every))
    if rec_idx[-1] != nsteps:
        rec_idx.append(nsteps)
    out = np.empty((len(rec_idx), 2 * n))
    t_out = np.asarray(rec_idx, dtype=float) * step
    out[0] = z[0]
    pos = 1
    for k in range(1, nsteps + 1):
        z = advance_step(z, step, rhs, spec, curv, lin, lap.L, kappa_state)
        z = project_stacked(z, d, n)
        if pos < len(rec_idx) and k == rec_idx[pos]:
            out[pos] = z[0]
            pos += 1
    return t_out, out
