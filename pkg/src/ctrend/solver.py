"""Penalized weighted least squares on the assembled linear system.

For fixed regularization weights (lambda1, lambda2) the estimate minimizes

    S(z) = S0(z) + lambda1*S1(z) + lambda2*S2(z)

where S0 is the (count-weighted) data misfit and S1, S2 the level and trend
second-difference penalties.  The normal matrix is dense and small (a few
hundred parameters at survey scale), so the solve is a Cholesky
factorization with a reciprocal-condition estimate; covariances follow the
classical weighted-least-squares formulas with
sigma2 = (S0 + pooled within-cell CSS) / (n_obs - dim).

Parameters whose normal-matrix column is exactly zero (possible only with
both lambdas at zero, when the two extreme boundary corners are outside
every cohort path) are excluded from the factorization and reported as zero
with zero variance; `FitResult.n_silent` counts them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.linalg.lapack import dpocon
from scipy.stats import t as t_dist

from .design import LinearSystem, build_z2u, build_z2v, rows_to_matrix
from .errors import SingularSystem
from .grid import ParameterLayout

CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class NormalCache:
    """Dense pieces reused across lambda probes on one system."""

    layout: ParameterLayout
    b0: np.ndarray
    x0: np.ndarray
    w0: np.ndarray
    g0: np.ndarray          # B0' W0 B0
    rhs: np.ndarray         # B0' W0 x0
    g1: np.ndarray          # B1' B1
    g2: np.ndarray          # B2' B2
    b1: np.ndarray = field(repr=False, default=None)
    b2: np.ndarray = field(repr=False, default=None)
    a_z2v: np.ndarray = field(repr=False, default=None)
    a_z2u: np.ndarray = field(repr=False, default=None)
    css_total: float = 0.0
    n_obs: int = 0


def prepare(system: LinearSystem) -> NormalCache:
    dim = system.layout.dim
    b0 = rows_to_matrix(system.data_rows, dim)
    x0 = system.rhs
    w0 = np.asarray(system.data_weights, dtype=float)
    wb0 = b0 * w0[:, None]
    b1 = rows_to_matrix(system.penalty_v_rows, dim)
    b2 = rows_to_matrix(system.penalty_u_rows, dim)
    return NormalCache(
        layout=system.layout,
        b0=b0,
        x0=x0,
        w0=w0,
        g0=wb0.T @ b0,
        rhs=wb0.T @ x0,
        g1=b1.T @ b1,
        g2=b2.T @ b2,
        b1=b1,
        b2=b2,
        a_z2v=build_z2v(system.layout),
        a_z2u=build_z2u(system.layout),
        css_total=system.css_total,
        n_obs=system.n_obs,
    )


def rebind_data(cache: NormalCache, system: LinearSystem) -> NormalCache:
    """Cache for a new system sharing the first one's frame and penalties.

    Recomputes only the data-dependent pieces; useful when many datasets
    with identical measurement placement are fitted in sequence.
    """
    import dataclasses

    dim = cache.layout.dim
    b0 = rows_to_matrix(system.data_rows, dim)
    x0 = system.rhs
    w0 = np.asarray(system.data_weights, dtype=float)
    wb0 = b0 * w0[:, None]
    return dataclasses.replace(
        cache,
        b0=b0,
        x0=x0,
        w0=w0,
        g0=wb0.T @ b0,
        rhs=wb0.T @ x0,
        css_total=system.css_total,
        n_obs=system.n_obs,
    )


@dataclass
class FitResult:
    """Point estimate, covariances, and reconstructed surfaces for one solve.

    `unit_cov_z` is the inverse weighted normal matrix (covariance per unit
    error variance); `cov_z` and the surface covariances are its sigma2
    multiples and are None when the degrees of freedom are not positive.
    """

    lambda1: float
    lambda2: float
    z_hat: np.ndarray
    unit_cov_z: np.ndarray
    sigma2_hat: float | None
    dof: int
    n_obs: int
    s0: float
    s1: float
    s2: float
    condition: float
    n_silent: int
    v_hat: np.ndarray
    u_hat: np.ndarray
    unit_cov_v: np.ndarray
    unit_cov_u: np.ndarray
    layout: ParameterLayout

    @property
    def cov_z(self) -> np.ndarray | None:
        return None if self.sigma2_hat is None else self.sigma2_hat * self.unit_cov_z

    @property
    def cov_v(self) -> np.ndarray | None:
        return None if self.sigma2_hat is None else self.sigma2_hat * self.unit_cov_v

    @property
    def cov_u(self) -> np.ndarray | None:
        return None if self.sigma2_hat is None else self.sigma2_hat * self.unit_cov_u

    @property
    def objective(self) -> float:
        return self.s0 + self.lambda1 * self.s1 + self.lambda2 * self.s2

    def _stderr(self, unit_cov: np.ndarray, shape: tuple[int, int]) -> np.ndarray | None:
        if self.sigma2_hat is None:
            return None
        var = np.maximum(self.sigma2_hat * np.diag(unit_cov), 0.0)
        return np.sqrt(var).reshape(shape)

    def level_stderr(self) -> np.ndarray | None:
        return self._stderr(self.unit_cov_v, self.layout.level_shape)

    def trend_stderr(self) -> np.ndarray | None:
        return self._stderr(self.unit_cov_u, self.layout.trend_shape)

    def ci_halfwidth(self, stderr: np.ndarray, level: float = 0.95) -> np.ndarray:
        """Two-sided confidence half-width using the t distribution."""
        q = float(t_dist.ppf(0.5 + level / 2.0, self.dof))
        return q * stderr


def solve(
    system: LinearSystem,
    lambda1: float,
    lambda2: float,
    cache: NormalCache | None = None,
) -> FitResult:
    """Fit the penalized system at fixed regularization weights."""
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError("regularization weights must be non-negative")
    if not system.data_rows:
        raise SingularSystem("no data rows")
    if cache is None:
        cache = prepare(system)

    m = cache.g0.copy()
    if lambda1 != 0.0:
        m += lambda1 * cache.g1
    if lambda2 != 0.0:
        m += lambda2 * cache.g2
    rhs = cache.rhs

    active = np.diag(m) > 0.0
    n_silent = int(np.sum(~active))
    mr = m[np.ix_(active, active)]
    # Symmetric Jacobi equilibration: with lambdas spanning many decades the
    # normal matrix is strongly graded, and the raw condition number reflects
    # block scale disparity rather than actual ill-posedness.  The condition
    # check applies to the equilibrated matrix.
    scale = 1.0 / np.sqrt(np.diag(mr))
    ms = mr * scale[:, None] * scale[None, :]
    try:
        factor = cho_factor(ms, lower=True)
    except LinAlgError as exc:
        raise SingularSystem(f"normal matrix not positive definite: {exc}") from exc
    anorm = np.linalg.norm(ms, 1)
    rcond, info = dpocon(factor[0], anorm, uplo=b"L")
    if info != 0 or rcond <= 0.0:
        raise SingularSystem("condition estimate failed")
    condition = 1.0 / rcond
    if condition > CONDITION_LIMIT:
        raise SingularSystem(
            f"normal matrix condition {condition:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )

    dim = cache.layout.dim
    n_active = int(np.sum(active))
    z_hat = np.zeros(dim)
    z_hat[active] = scale * cho_solve(factor, scale * rhs[active])
    unit_cov = np.zeros((dim, dim))
    inv_scaled = cho_solve(factor, np.eye(n_active))
    unit_cov[np.ix_(active, active)] = inv_scaled * scale[:, None] * scale[None, :]

    resid = cache.b0 @ z_hat - cache.x0
    s0 = float(np.sum(cache.w0 * resid**2))
    s1 = float(np.sum((cache.b1 @ z_hat) ** 2))
    s2 = float(np.sum((cache.b2 @ z_hat) ** 2))

    dof = cache.n_obs - dim
    sigma2 = (s0 + cache.css_total) / dof if dof >= 1 else None

    v_hat = (cache.a_z2v @ z_hat).reshape(cache.layout.level_shape)
    u_hat = (cache.a_z2u @ z_hat).reshape(cache.layout.trend_shape)
    unit_cov_v = cache.a_z2v @ unit_cov @ cache.a_z2v.T
    unit_cov_u = cache.a_z2u @ unit_cov @ cache.a_z2u.T

    return FitResult(
        lambda1=lambda1,
        lambda2=lambda2,
        z_hat=z_hat,
        unit_cov_z=unit_cov,
        sigma2_hat=sigma2,
        dof=dof,
        n_obs=cache.n_obs,
        s0=s0,
        s1=s1,
        s2=s2,
        condition=condition,
        n_silent=n_silent,
        v_hat=v_hat,
        u_hat=u_hat,
        unit_cov_v=unit_cov_v,
        unit_cov_u=unit_cov_u,
        layout=cache.layout,
    )


COLLINEARITY_TOL = 1e-9


def _collinear(p: tuple[float, float], q: tuple[float, float], r: tuple[float, float]) -> bool:
    cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
    return abs(cross) <= COLLINEARITY_TOL


def check_uniqueness(points: list[tuple[float, float]]) -> tuple[bool, str]:
    """Whether the point set guarantees a unique penalized solution.

    True when four points exist with no three on a common straight line.
    The search is exact: find a non-degenerate triangle, look for a fourth
    point off all three of its lines; if every point sits on those lines,
    a valid quadruple exists exactly when two of the lines each carry two
    points besides their shared vertex.
    """
    distinct = sorted(set((float(y), float(a)) for y, a in points))
    if len(distinct) < 4:
        return False, f"only {len(distinct)} distinct points"

    a = distinct[0]
    b = next((p for p in distinct if p != a), None)
    c = next((p for p in distinct if not _collinear(a, b, p)), None)
    if c is None:
        return False, "all points collinear"

    on_ab, on_bc, on_ac = [], [], []
    for p in distinct:
        off = True
        if _collinear(a, b, p):
            on_ab.append(p)
            off = False
        if _collinear(b, c, p):
            on_bc.append(p)
            off = False
        if _collinear(a, c, p):
            on_ac.append(p)
            off = False
        if off:
            return True, "found 4 points in general position"

    # Every point lies on the triangle's lines; a 2+2 pick across two lines
    # works iff both lines hold two points besides the shared vertex.
    for line1, line2, vertex in (
        (on_ab, on_bc, b),
        (on_ab, on_ac, a),
        (on_bc, on_ac, c),
    ):
        if (
            sum(1 for p in line1 if p != vertex) >= 2
            and sum(1 for p in line2 if p != vertex) >= 2
        ):
            return True, "found 4 points in general position"
    return False, "all but at most one point share a line"


def normal_residual(system: LinearSystem, fit: FitResult, cache: NormalCache | None = None) -> float:
    """Norm of the weighted normal-equation residual; ~0 at the optimum."""
    if cache is None:
        cache = prepare(system)
    m = cache.g0.copy()
    if fit.lambda1 != 0.0:
        m += fit.lambda1 * cache.g1
    if fit.lambda2 != 0.0:
        m += fit.lambda2 * cache.g2
    return float(np.linalg.norm(m @ fit.z_hat - cache.rhs))
