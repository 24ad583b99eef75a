"""Per-mode quadratic objectives, their closed-form optimizers, and the
energy function used to certify convergence of the momentum dynamics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import LaplacianPair


@dataclass(frozen=True)
class QuadraticObjective:
    """Separable quadratic 0.5 q^T diag(curvature) q + linear^T q.

    Curvatures are strictly positive, so the objective is strongly convex
    with gradient Lipschitz constant max(curvature).
    """

    curvature: np.ndarray
    linear: np.ndarray

    def __post_init__(self):
        curv = np.asarray(self.curvature, dtype=float)
        lin = np.asarray(self.linear, dtype=float)
        if curv.ndim != 1 or lin.shape != curv.shape:
            raise ValueError("curvature and linear must be 1-D with equal length")
        if not np.all(curv > 0):
            raise ValueError("curvature entries must be strictly positive")
        object.__setattr__(self, "curvature", curv)
        object.__setattr__(self, "linear", lin)

    @property
    def n(self) -> int:
        return self.curvature.shape[0]

    @property
    def lipschitz(self) -> float:
        return float(self.curvature.max())

    def value(self, q: np.ndarray) -> float | np.ndarray:
        q = np.asarray(q, dtype=float)
        self._check_dim(q)
        return 0.5 * np.sum(self.curvature * q * q, axis=-1) + np.sum(self.linear * q, axis=-1)

    def gradient(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        self._check_dim(q)
        return self.curvature * q + self.linear

    def _check_dim(self, q: np.ndarray):
        if q.shape[-1] != self.n:
            raise ValueError(f"expected vectors of length {self.n}, got shape {q.shape}")


@dataclass(frozen=True)
class KktSolution:
    """Optimal allocation and multiplier of the budget-constrained problem."""

    q_star: np.ndarray
    mu_star: float


def kkt_solve(obj: QuadraticObjective, d: float) -> KktSolution:
    """Closed-form optimizer of obj over the budget hyperplane 1^T q = d.

    Eliminating q from the stationarity condition gradient(q) + mu * 1 = 0
    gives mu = -(d + sum(linear/curvature)) / sum(1/curvature), and back
    substitution yields q.
    """
    w = 1.0 / obj.curvature
    mu = -(d + w @ obj.linear) / w.sum()
    q = -(obj.linear + mu) * w
    return KktSolution(q_star=q, mu_star=float(mu))


def kkt_residuals(obj: QuadraticObjective, d: float, sol: KktSolution) -> tuple[float, float]:
    """Stationarity and budget residuals of a candidate solution."""
    ones = np.ones(obj.n)
    stat = float(np.linalg.norm(obj.gradient(sol.q_star) + sol.mu_star * ones))
    feas = float(abs(ones @ sol.q_star - d))
    return stat, feas


def lyapunov(q: np.ndarray, p: np.ndarray, obj: QuadraticObjective,
             lap: LaplacianPair, phi_star: float) -> float | np.ndarray:
    """Energy phi(q) - phi_star + 0.5 p^T Ldag p.

    Nonnegative on the feasible set; zero exactly at the optimizer with
    zero momentum. phi_star must be the constrained minimum of obj, as
    returned by kkt_solve.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    return obj.value(q) - phi_star + 0.5 * np.sum((p @ lap.Ldag) * p, axis=-1)


@dataclass(eq=False)
class SwitchedObjectiveFamily:
    """Indexed family of per-mode objectives sharing one resource budget.

    Modes are numbered 1..M to match scenario files and CSV output.
    Instances are immutable by convention; the KKT cache is filled lazily.
    """

    modes: tuple[QuadraticObjective, ...]
    d: float
    seed: int | None = None
    _kkt_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.modes = tuple(self.modes)
        if len(self.modes) < 1:
            raise ValueError("family needs at least one mode")
        n = self.modes[0].n
        if any(m.n != n for m in self.modes):
            raise ValueError("all modes must share the same dimension")

    @property
    def M(self) -> int:
        return len(self.modes)

    @property
    def n(self) -> int:
        return self.modes[0].n

    def mode(self, sigma: int) -> QuadraticObjective:
        if not 1 <= sigma <= self.M:
            raise ValueError(f"mode index {sigma} outside 1..{self.M}")
        return self.modes[sigma - 1]

    def kkt(self, sigma: int) -> KktSolution:
        if sigma not in self._kkt_cache:
            self._kkt_cache[sigma] = kkt_solve(self.mode(sigma), self.d)
        return self._kkt_cache[sigma]

    def phi_star(self, sigma: int) -> float:
        return float(self.mode(sigma).value(self.kkt(sigma).q_star))

    def curvature_matrix(self) -> np.ndarray:
        """Stacked curvatures, shape (M, n), row sigma-1 for mode sigma."""
        return np.stack([m.curvature for m in self.modes])

    def linear_matrix(self) -> np.ndarray:
        return np.stack([m.linear for m in self.modes])


def sample_family(seed: int, n: int, M: int, d: float,
                  curvature_range: tuple[float, float] = (10.0, 20.0),
                  linear_range: tuple[float, float] = (-10.0, 10.0)) -> SwitchedObjectiveFamily:
    """Draw a family of M random separable quadratics.

    Curvatures are i.i.d. uniform over curvature_range and linear terms
    i.i.d. uniform over linear_range, drawn mode by mode from a PCG64
    stream so results are reproducible across platforms.
    """
    c_lo, c_hi = curvature_range
    l_lo, l_hi = linear_range
    if not (0 < c_lo <= c_hi):
        raise ValueError(f"curvature range must be positive, got {curvature_range}")
    if l_lo > l_hi:
        raise ValueError(f"empty linear range {linear_range}")
    rng = np.random.Generator(np.random.PCG64(seed))
    modes = []
    for _ in range(M):
        curv = rng.uniform(c_lo, c_hi, size=n)
        lin = rng.uniform(l_lo, l_hi, size=n)
        modes.append(QuadraticObjective(curvature=curv, linear=lin))
    return SwitchedObjectiveFamily(modes=tuple(modes), d=float(d), seed=seed)
