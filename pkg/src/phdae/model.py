"""Port-Hamiltonian descriptor system models and structure validation.

A model describes the implicit input-output system

    E(t,x) xdot + r(t,x) = (J(t,x) - R(t,x)) z(t,x) + (B(t,x) - P(t,x)) u
                       y = (B(t,x) + P(t,x))^T z(t,x) + (S(t,x) - N(t,x)) u

together with an energy function H(t, x).  Structural soundness means

* the extended structure matrix  Gamma = [[J, B], [-B^T, N]]  is
  skew-symmetric pointwise,
* the extended dissipation matrix  W = [[R, P], [P^T, S]]  is symmetric
  positive semidefinite pointwise,
* the energy gradient is compatible with the effort and time-flow:
  grad_x H = E^T z  and  dH/dt = z^T r.

Along any solution the power balance

    dH/dt = -[z; u]^T W [z; u] + u^T y

holds, which integrates to the dissipation inequality
H(t2) - H(t1) <= int u^T y dt expressing passivity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

MatrixFn = Callable[[float, np.ndarray], np.ndarray]
VectorFn = Callable[[float, np.ndarray], np.ndarray]
ScalarFn = Callable[[float, np.ndarray], float]

# Step scale for central differences; cbrt(eps) balances truncation
# against roundoff for second-order formulas.
FD_STEP_SCALE = float(np.cbrt(np.finfo(float).eps))


def constant(value) -> MatrixFn:
    """Wrap a constant array (or scalar) as a coefficient function of (t, x)."""
    arr = np.asarray(value, dtype=float)
    arr.flags.writeable = False
    return lambda t, x: arr


def grad_x_central(f: ScalarFn, t: float, x: np.ndarray,
                   step: float | None = None) -> np.ndarray:
    """Central-difference gradient of f(t, .) at x.

    The default per-coordinate step is cbrt(eps) * max(1, |x_i|).
    """
    x = np.asarray(x, dtype=float)
    g = np.empty(x.size)
    for i in range(x.size):
        hi = step if step is not None else FD_STEP_SCALE * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += hi
        xm[i] -= hi
        g[i] = (f(t, xp) - f(t, xm)) / (2.0 * hi)
    return g


def grad_t_central(f: ScalarFn, t: float, x: np.ndarray,
                   step: float | None = None) -> float:
    """Central-difference time derivative of f(., x) at t."""
    ht = step if step is not None else FD_STEP_SCALE * max(1.0, abs(t))
    return (f(t + ht, x) - f(t - ht, x)) / (2.0 * ht)


class Coefficients(NamedTuple):
    """All coefficient values of a model at one point (t, x)."""

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    B: np.ndarray
    P: np.ndarray
    S: np.ndarray
    N: np.ndarray
    z: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class PHDAEModel:
    """Immutable port-Hamiltonian descriptor system.

    Coefficient functions map (t, x) to arrays of the shapes listed
    below; ``n`` is the state dimension, ``ell`` the number of
    equations (the two may differ) and ``m`` the port dimension.

    E : (ell, n)   flow matrix
    J : (ell, ell) structure matrix
    R : (ell, ell) dissipation matrix
    B, P : (ell, m) port matrices
    S, N : (m, m)  feed-through matrices
    z : (ell,)     effort function
    r : (ell,)     time-flow function
    H : scalar     energy (Hamiltonian)

    ``gradH_x`` and ``gradH_t`` default to central finite differences
    of H.  ``stage_jacobian_x`` optionally supplies the x-Jacobian of
    ``E(t,x) xdot + r(t,x) - (J - R)(t,x) z(t,x)`` for implicit time
    stepping; when absent the integrator falls back to finite
    differences.

    Models are immutable after construction and safe to share between
    threads; every operation on them is pure.
    """

    n: int
    ell: int
    m: int
    E: MatrixFn
    J: MatrixFn
    R: MatrixFn
    B: MatrixFn
    P: MatrixFn
    S: MatrixFn
    N: MatrixFn
    z: VectorFn
    r: VectorFn
    H: ScalarFn
    gradH_x: VectorFn | None = None
    gradH_t: ScalarFn | None = None
    time_interval: tuple[float, float] = (0.0, 1.0)
    stage_jacobian_x: Callable[[float, np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.n < 0 or self.ell < 0 or self.m < 0:
            raise ValueError("dimensions must be nonnegative")
        if self.gradH_x is None:
            H = self.H
            object.__setattr__(self, "gradH_x",
                               lambda t, x: grad_x_central(H, t, x))
        if self.gradH_t is None:
            H = self.H
            object.__setattr__(self, "gradH_t",
                               lambda t, x: grad_t_central(H, t, x))

    # -- evaluation helpers -------------------------------------------------

    def _shaped(self, fn, t, x, rows, cols=None):
        val = np.asarray(fn(t, x), dtype=float)
        want = (rows,) if cols is None else (rows, cols)
        if val.shape != want:
            val = val.reshape(want)
        return val

    def coeffs(self, t: float, x: np.ndarray) -> Coefficients:
        """Evaluate every coefficient function at (t, x)."""
        n, ell, m = self.n, self.ell, self.m
        return Coefficients(
            E=self._shaped(self.E, t, x, ell, n),
            J=self._shaped(self.J, t, x, ell, ell),
            R=self._shaped(self.R, t, x, ell, ell),
            B=self._shaped(self.B, t, x, ell, m),
            P=self._shaped(self.P, t, x, ell, m),
            S=self._shaped(self.S, t, x, m, m),
            N=self._shaped(self.N, t, x, m, m),
            z=self._shaped(self.z, t, x, ell),
            r=self._shaped(self.r, t, x, ell),
        )

    def gamma_matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        """Extended structure matrix [[J, B], [-B^T, N]]; skew for valid models."""
        c = self.coeffs(t, x)
        return np.block([[c.J, c.B], [-c.B.T, c.N]])

    def w_matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        """Extended dissipation matrix [[R, P], [P^T, S]]; symmetric PSD for valid models."""
        c = self.coeffs(t, x)
        return np.block([[c.R, c.P], [c.P.T, c.S]])

    def output(self, t: float, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Read the output y = (B + P)^T z + (S - N) u."""
        c = self.coeffs(t, x)
        u = np.asarray(u, dtype=float).reshape(self.m)
        return (c.B + c.P).T @ c.z + (c.S - c.N) @ u

    def residual(self, t: float, x: np.ndarray, xdot: np.ndarray,
                 u: np.ndarray) -> np.ndarray:
        """Implicit equation residual E xdot + r - (J - R) z - (B - P) u."""
        c = self.coeffs(t, x)
        xdot = np.asarray(xdot, dtype=float).reshape(self.n)
        u = np.asarray(u, dtype=float).reshape(self.m)
        return c.E @ xdot + c.r - (c.J - c.R) @ c.z - (c.B - c.P) @ u


def pbe_residual(model: PHDAEModel, t: float, x: np.ndarray,
                 xdot: np.ndarray, u: np.ndarray, y: np.ndarray) -> float:
    """Pointwise power balance defect.

    Returns dH/dt - (-[z; u]^T W [z; u] + u^T y), where
    dH/dt = gradH_t + gradH_x . xdot.  Zero along any exact solution.
    """
    x = np.asarray(x, dtype=float).reshape(model.n)
    xdot = np.asarray(xdot, dtype=float).reshape(model.n)
    u = np.asarray(u, dtype=float).reshape(model.m)
    y = np.asarray(y, dtype=float).reshape(model.m)
    dH = float(model.gradH_t(t, x)) + float(np.dot(model.gradH_x(t, x), xdot))
    zu = np.concatenate([model.coeffs(t, x).z, u])
    W = model.w_matrix(t, x)
    return dH - (-(zu @ W @ zu) + float(u @ y))


@dataclass(frozen=True)
class ValidationReport:
    """Worst-case structure residuals over a sampled region."""

    skew_residual: float
    sym_residual: float
    eig_min: float
    grad_x_residual: float
    grad_t_residual: float
    skew_ok: bool
    sym_ok: bool
    psd_ok: bool
    grad_x_ok: bool
    grad_t_ok: bool
    worst_points: dict
    count: int
    seed: int
    tol: float
    errors: tuple = ()
    # advisory only: a negative energy sample weakens stability arguments
    # but is not required by the structure conditions
    energy_min: float = 0.0

    @property
    def passed(self) -> bool:
        return (not self.errors and self.skew_ok and self.sym_ok
                and self.psd_ok and self.grad_x_ok and self.grad_t_ok)

    def summary(self) -> str:
        lines = [
            f"samples={self.count} seed={self.seed} tol={self.tol:g}",
            f"  skew residual   max|Gamma+Gamma^T| = {self.skew_residual:.3e}"
            f"  [{'ok' if self.skew_ok else 'FAIL'}]",
            f"  symmetry        max|W-W^T|         = {self.sym_residual:.3e}"
            f"  [{'ok' if self.sym_ok else 'FAIL'}]",
            f"  min eig(sym W)                     = {self.eig_min:.3e}"
            f"  [{'ok' if self.psd_ok else 'FAIL'}]",
            f"  gradient/effort max|dH/dx - E^T z| = {self.grad_x_residual:.3e}"
            f"  [{'ok' if self.grad_x_ok else 'FAIL'}]",
            f"  time-flow       max|dH/dt - z^T r| = {self.grad_t_residual:.3e}"
            f"  [{'ok' if self.grad_t_ok else 'FAIL'}]",
        ]
        if self.energy_min < 0:
            lines.append(f"  advisory: H attains {self.energy_min:.3e} on the "
                         f"sampled box (negative energies are permitted but "
                         f"weaken stability arguments)")
        for msg in self.errors:
            lines.append(f"  error: {msg}")
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def validate_structure(model: PHDAEModel, x_low=-1.0, x_high=1.0,
                       t_range: tuple[float, float] | None = None,
                       count: int = 100, seed: int = 0,
                       tol: float = 1e-9) -> ValidationReport:
    """Check the structural conditions on randomly sampled points.

    Points (t, x) are drawn uniformly from the box given by
    ``t_range`` (default: the model's time interval) and
    ``x_low``/``x_high`` (scalars or per-coordinate arrays).  The
    conditions hold pointwise for a valid model; sampling with a fixed
    seed and reporting the worst case is the testable surrogate.

    The positive-semidefiniteness test accepts eigenvalues down to
    -tol * (1 + ||W||_F), which is robust to roundoff.  All other
    residuals must stay within ``tol``.  Non-finite coefficient values
    at a sampled point are reported with the point and fail validation.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(seed)
    lo = np.broadcast_to(np.asarray(x_low, dtype=float), (model.n,))
    hi = np.broadcast_to(np.asarray(x_high, dtype=float), (model.n,))
    if np.any(hi < lo):
        raise ValueError("empty sample box")
    t0, t1 = t_range if t_range is not None else model.time_interval
    if not (np.isfinite(t0) and np.isfinite(t1)):
        raise ValueError("time range must be finite")

    residuals = {"skew": 0.0, "sym": 0.0, "grad_x": 0.0, "grad_t": 0.0}
    worst = {}
    eig_min = np.inf
    psd_ok = True
    errors = []

    for _ in range(count):
        t = float(rng.uniform(t0, t1))
        x = rng.uniform(lo, hi)
        try:
            c = model.coeffs(t, x)
            gx = np.asarray(model.gradH_x(t, x), dtype=float).reshape(model.n)
            gt = float(model.gradH_t(t, x))
        except Exception as exc:  # evaluation blew up; report the point
            errors.append(f"coefficient evaluation failed at t={t!r}, x={x!r}: {exc}")
            break
        values = np.concatenate([a.ravel() for a in c] + [gx, [gt]])
        if not np.all(np.isfinite(values)):
            errors.append(f"non-finite coefficient value at t={t!r}, x={x!r}")
            break
        gamma = np.block([[c.J, c.B], [-c.B.T, c.N]])
        W = np.block([[c.R, c.P], [c.P.T, c.S]])
        checks = {
            "skew": float(np.max(np.abs(gamma + gamma.T), initial=0.0)),
            "sym": float(np.max(np.abs(W - W.T), initial=0.0)),
            "grad_x": float(np.max(np.abs(gx - c.E.T @ c.z), initial=0.0)),
            "grad_t": abs(gt - float(c.z @ c.r)),
        }
        for key, val in checks.items():
            if val > residuals[key]:
                residuals[key] = val
                worst[key] = (t, x)
        if W.size:
            ev = float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
            if ev < eig_min:
                eig_min = ev
                worst["psd"] = (t, x)
            if ev < -tol * (1.0 + np.linalg.norm(W)):
                psd_ok = False
    if not np.isfinite(eig_min):
        eig_min = 0.0

    return ValidationReport(
        skew_residual=residuals["skew"],
        sym_residual=residuals["sym"],
        eig_min=eig_min,
        grad_x_residual=residuals["grad_x"],
        grad_t_residual=residuals["grad_t"],
        skew_ok=residuals["skew"] <= tol and not errors,
        sym_ok=residuals["sym"] <= tol and not errors,
        psd_ok=psd_ok and not errors,
        grad_x_ok=residuals["grad_x"] <= tol and not errors,
        grad_t_ok=residuals["grad_t"] <= tol and not errors,
        worst_points=worst,
        count=count,
        seed=seed,
        tol=tol,
        errors=tuple(errors),
    )


@dataclass(frozen=True)
class IntervalReport:
    """Dissipation inequality check on one stored interval."""

    t_start: float
    t_end: float
    gap: float
    ok: bool


def dissipation_check(trajectory, model: PHDAEModel,
                      tol: float = 1e-12) -> list[IntervalReport]:
    """Check H(t2, x2) - H(t1, x1) <= int u^T y dt on every stored step.

    The port integral is taken from each step record's quadrature sum,
    which is exact for quadratic energies under Gauss-Legendre nodes.
    ``gap`` is the left side minus the integral; passivity requires it
    to stay below ``tol``.
    """
    reports = []
    for rec in trajectory.steps:
        t1 = rec.t0 + rec.h
        gap = (model.H(t1, rec.x_end) - model.H(rec.t0, rec.x0)) - rec.port_sum
        reports.append(IntervalReport(rec.t0, t1, float(gap), gap <= tol))
    return reports


@dataclass(frozen=True)
class LTIModel:
    """Constant-coefficient model data with an affine effort map.

    The effort is z(x) = Z x + w and the energy is the quadratic
    H(x) = x^T Q x / 2 + v^T x + c.  Gradient/effort compatibility then
    amounts to Q = E^T Z and v = E^T w, which ``lti_to_model`` verifies.
    """

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    B: np.ndarray
    P: np.ndarray
    S: np.ndarray
    N: np.ndarray
    Z: np.ndarray
    w: np.ndarray
    Q: np.ndarray
    v: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        for name in ("E", "J", "R", "B", "P", "S", "N", "Z", "w", "Q", "v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "c", float(self.c))
        ell, n = self.E.shape
        m = self.B.shape[1] if self.B.ndim == 2 else 0
        expected = {
            "J": (ell, ell), "R": (ell, ell), "B": (ell, m), "P": (ell, m),
            "S": (m, m), "N": (m, m), "Z": (ell, n), "w": (ell,),
            "Q": (n, n), "v": (n,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(
                    f"block {name} has shape {getattr(self, name).shape}, "
                    f"expected {shape}")

    @property
    def n(self) -> int:
        return self.E.shape[1]

    @property
    def ell(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def hamiltonian(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.v @ x + self.c)


def lti_to_model(lti: LTIModel, tol: float = 1e-9,
                 time_interval: tuple[float, float] = (0.0, 1.0)) -> PHDAEModel:
    """Turn constant-coefficient data into a full model.

    Rejects data whose energy gradient is incompatible with the effort
    map (Q != E^T Z or v != E^T w beyond ``tol``); the produced model
    would violate the gradient condition everywhere.  The returned
    coefficient functions hand back the stored arrays unchanged, and the
    quadratic energy gradient Q x + v is supplied analytically.
    """
    scale_q = 1.0 + float(np.max(np.abs(lti.Q), initial=0.0))
    if np.max(np.abs(lti.Q - lti.Q.T), initial=0.0) > tol * scale_q:
        raise ValueError("Q must be symmetric")
    if np.max(np.abs(lti.Q - lti.E.T @ lti.Z), initial=0.0) > tol * scale_q:
        raise ValueError(
            "gradient/effort compatibility fails: Q != E^T Z, so "
            "grad H(x) = Q x + v cannot equal E^T z(x)")
    scale_v = 1.0 + float(np.max(np.abs(lti.v), initial=0.0))
    if np.max(np.abs(lti.v - lti.E.T @ lti.w), initial=0.0) > tol * scale_v:
        raise ValueError(
            "gradient/effort compatibility fails: v != E^T w, so "
            "grad H(x) = Q x + v cannot equal E^T z(x)")

    zero_r = np.zeros(lti.ell)
    zero_r.flags.writeable = False
    rhs_jac = -(lti.J - lti.R) @ lti.Z
    rhs_jac.flags.writeable = False

    return PHDAEModel(
        n=lti.n, ell=lti.ell, m=lti.m,
        E=constant(lti.E), J=constant(lti.J), R=constant(lti.R),
        B=constant(lti.B), P=constant(lti.P),
        S=constant(lti.S), N=constant(lti.N),
        z=lambda t, x: lti.Z @ x + lti.w,
        r=constant(zero_r),
        H=lambda t, x: lti.hamiltonian(x),
        gradH_x=lambda t, x: lti.Q @ x + lti.v,
        gradH_t=lambda t, x: 0.0,
        time_interval=time_interval,
        stage_jacobian_x=lambda t, x, xdot: rhs_jac,
    )
