"""Gauss-Legendre collocation time stepping with energy accounting.

One step approximates the solution on [t0, t0 + h] by a polynomial of
degree s that matches the initial state and satisfies the descriptor
equations at the collocation times t_i = t0 + gamma_i h.  Writing
xdot_i for the polynomial slopes at the nodes,

    x_i   = x0 + h sum_j alpha_ij xdot_j
    x_end = x0 + h sum_j beta_j  xdot_j

with alpha_ij and beta_j the integrals of the Lagrange basis over
[0, gamma_i] and [0, 1].  The slopes solve the stacked nonlinear system

    E(t_i, x_i) xdot_i + r(t_i, x_i)
        = (J - R)(t_i, x_i) z(t_i, x_i) + (B - P)(t_i, x_i) u_i

by Newton iteration.  Each converged stage lifts into the Dirac
structure, and the step records the discrete energy pieces

    delta_H    = H(t_end, x_end) - H(t0, x0)
    diss_sum   = h sum_j beta_j <e_d^j, f_d^j>   (<= 0)
    port_sum   = h sum_j beta_j <y_j, u_j>

whose sum reproduces delta_H exactly for quadratic energies, because
Gauss nodes integrate the degree-(2s-1) polynomial dH/dt along the
collocation polynomial without error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import dirac
from .model import PHDAEModel

InputFn = Callable[[float, np.ndarray], np.ndarray]


class NewtonError(RuntimeError):
    """Stage equations could not be solved."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class NewtonOptions:
    """Solver controls for the stacked stage system.

    Convergence requires the max-norm residual to drop below
    atol + rtol * ||rhs||.  The Jacobian is rebuilt every iteration,
    by forward differences with step fd_step * (1 + |coordinate|)
    unless the model supplies an analytic stage Jacobian.
    """

    atol: float = 1e-12
    rtol: float = 1e-10
    max_iter: int = 25
    fd_step: float = 1e-7


def _solve_newton(fun, w0: np.ndarray, opts: NewtonOptions, jac=None):
    """Undamped full Newton; returns (w, iterations, residual, tol)."""
    w = np.asarray(w0, dtype=float).copy()
    F, scale = fun(w)
    tol = opts.atol + opts.rtol * scale
    res = float(np.max(np.abs(F), initial=0.0))
    iterations = 0
    while res > tol:
        if iterations >= opts.max_iter:
            raise NewtonError(
                f"no convergence within {opts.max_iter} iterations "
                f"(last residual {res:.3e}, tolerance {tol:.3e})",
                residual=res)
        if jac is not None:
            Jm = jac(w)
        else:
            Jm = np.empty((F.size, w.size))
            for j in range(w.size):
                dw = opts.fd_step * (1.0 + abs(w[j]))
                wp = w.copy()
                wp[j] += dw
                Jm[:, j] = (fun(wp)[0] - F) / dw
        try:
            delta = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError as exc:
            raise NewtonError(
                "singular iteration matrix; try a smaller step size or "
                "check the differential/algebraic structure of the model",
                residual=res) from exc
        w = w + delta
        iterations += 1
        F, scale = fun(w)
        tol = opts.atol + opts.rtol * scale
        res = float(np.max(np.abs(F), initial=0.0))
    return w, iterations, res, tol


def _lagrange_antiderivatives(nodes: np.ndarray) -> np.ndarray:
    """Monomial coefficients of int_0^tau l_j for each Lagrange basis l_j."""
    s = nodes.size
    out = np.zeros((s, s + 1))
    for j in range(s):
        poly = np.polynomial.Polynomial([1.0])
        for k in range(s):
            if k != j:
                poly = poly * np.polynomial.Polynomial(
                    [-nodes[k], 1.0]) / (nodes[j] - nodes[k])
        integ = poly.integ()
        out[j, :integ.coef.size] = integ.coef
    return out


@dataclass(frozen=True)
class ButcherTableau:
    """Collocation coefficients plus the Lagrange-basis antiderivatives.

    ``basis_integrals[j]`` holds the ascending monomial coefficients of
    int_0^tau l_j(sigma) d sigma, used for dense output; evaluating them
    at gamma_i and 1 reproduces alpha and beta, so the three datasets
    are consistent by construction.
    """

    s: int
    gamma: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray
    p: int
    basis_integrals: np.ndarray

    def __post_init__(self):
        for name in ("gamma", "beta", "alpha", "basis_integrals"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def gauss_legendre_tableau(s: int) -> ButcherTableau:
    """Collocation coefficients for the s-stage Gauss-Legendre method.

    Nodes are the roots of the degree-s Legendre polynomial shifted to
    [0, 1]; weights and the stage matrix come from exact integration of
    the Lagrange basis.  The quadrature exactness degree is 2s - 1, the
    highest achievable with s nodes.  s = 1 is the implicit midpoint
    rule.
    """
    if not 1 <= s <= 5:
        raise ValueError(f"stage count must be between 1 and 5, got {s}")
    nodes, _ = np.polynomial.legendre.leggauss(s)
    gamma = np.sort((nodes + 1.0) / 2.0)
    anti = _lagrange_antiderivatives(gamma)
    beta = np.array([np.polynomial.polynomial.polyval(1.0, anti[j])
                     for j in range(s)])
    alpha = np.array([[np.polynomial.polynomial.polyval(gamma[i], anti[j])
                       for j in range(s)] for i in range(s)])
    return ButcherTableau(s=s, gamma=gamma, beta=beta, alpha=alpha,
                          p=2 * s - 1, basis_integrals=anti)


@dataclass(frozen=True)
class StepRecord:
    """Everything produced by one collocation step."""

    t0: float
    h: float
    x0: np.ndarray
    stage_times: np.ndarray
    stage_states: np.ndarray
    stage_rates: np.ndarray
    stage_inputs: np.ndarray
    stage_outputs: np.ndarray
    x_end: np.ndarray
    H0: float
    H_end: float
    delta_H: float
    diss_sum: float
    port_sum: float
    dirac_points: tuple
    newton_iterations: int
    newton_residual: float
    newton_tolerance: float


@dataclass(frozen=True)
class EnergyReport:
    residual: float
    delta_H: float
    diss_sum: float
    port_sum: float
    dissipation_nonpositive: bool


def discrete_energy_report(rec: StepRecord, tol: float = 1e-12) -> EnergyReport:
    """Per-step energy balance defect delta_H - diss_sum - port_sum.

    For quadratic energies the defect is roundoff; in general it shrinks
    with the quadrature exactness degree as the step is refined.  The
    dissipation sum is flagged nonpositive, which holds whenever the
    weights are nonnegative and the dissipation matrix is PSD.
    """
    residual = rec.delta_H - rec.diss_sum - rec.port_sum
    return EnergyReport(
        residual=float(residual),
        delta_H=rec.delta_H,
        diss_sum=rec.diss_sum,
        port_sum=rec.port_sum,
        dissipation_nonpositive=rec.diss_sum <= tol,
    )


def _zero_input(m: int) -> InputFn:
    zero = np.zeros(m)
    zero.flags.writeable = False
    return lambda t, x: zero


def _input_jacobian(input_fn: InputFn, t: float, x: np.ndarray,
                    u0: np.ndarray, fd_step: float) -> np.ndarray:
    """Forward-difference du/dx, needed only on the analytic Jacobian path."""
    J = np.zeros((u0.size, x.size))
    for j in range(x.size):
        dx = fd_step * (1.0 + abs(x[j]))
        xp = x.copy()
        xp[j] += dx
        J[:, j] = (np.asarray(input_fn(t, xp), dtype=float).ravel() - u0) / dx
    return J


def step(model: PHDAEModel, t0: float, x0: np.ndarray, h: float,
         tab: ButcherTableau, input_fn: InputFn | None = None,
         newton: NewtonOptions | None = None,
         initial_rates: np.ndarray | None = None) -> StepRecord:
    """Advance the square (ell == n) descriptor system by one step.

    The s*n stage slopes are solved for simultaneously; the initial
    guess is zero slopes unless ``initial_rates`` (typically the
    previous step's) are given.  Negative h is accepted so adjoint-type
    checks can step backwards.
    """
    if model.ell != model.n:
        raise ValueError(
            f"time stepping requires as many equations as states "
            f"(ell={model.ell}, n={model.n}); non-square models remain "
            f"valid for validation and transformation only")
    if h == 0.0:
        raise ValueError("step size must be nonzero")
    newton = newton or NewtonOptions()
    input_fn = input_fn or _zero_input(model.m)
    n, m, s = model.n, model.m, tab.s
    x0 = np.asarray(x0, dtype=float).reshape(n)
    times = t0 + tab.gamma * h

    def residual(rates_flat: np.ndarray):
        rates = rates_flat.reshape(s, n)
        states = x0 + h * (tab.alpha @ rates)
        F = np.empty((s, n))
        scale = 0.0
        for i in range(s):
            c = model.coeffs(times[i], states[i])
            u = np.asarray(input_fn(times[i], states[i]),
                           dtype=float).reshape(m)
            rhs = (c.J - c.R) @ c.z + (c.B - c.P) @ u
            F[i] = c.E @ rates[i] + c.r - rhs
            scale = max(scale, float(np.max(np.abs(rhs), initial=0.0)))
        return F.ravel(), scale

    jac = None
    if model.stage_jacobian_x is not None:
        def jac(rates_flat: np.ndarray) -> np.ndarray:
            rates = rates_flat.reshape(s, n)
            states = x0 + h * (tab.alpha @ rates)
            Jm = np.zeros((s * n, s * n))
            for i in range(s):
                c = model.coeffs(times[i], states[i])
                K = np.asarray(model.stage_jacobian_x(
                    times[i], states[i], rates[i]), dtype=float)
                if m > 0:
                    u = np.asarray(input_fn(times[i], states[i]),
                                   dtype=float).reshape(m)
                    dudx = _input_jacobian(input_fn, times[i], states[i],
                                           u, newton.fd_step)
                    K = K - (c.B - c.P) @ dudx
                for j in range(s):
                    block = h * tab.alpha[i, j] * K
                    if i == j:
                        block = block + c.E
                    Jm[i * n:(i + 1) * n, j * n:(j + 1) * n] = block
            return Jm

    guess = (np.zeros(s * n) if initial_rates is None
             else np.asarray(initial_rates, dtype=float).reshape(s * n).copy())
    rates_flat, iters, res, tol = _solve_newton(residual, guess, newton, jac=jac)

    rates = rates_flat.reshape(s, n)
    states = x0 + h * (tab.alpha @ rates)
    x_end = x0 + h * (tab.beta @ rates)

    inputs = np.empty((s, m))
    outputs = np.empty((s, m))
    points = []
    diss_sum = 0.0
    port_sum = 0.0
    for i in range(s):
        u = np.asarray(input_fn(times[i], states[i]), dtype=float).reshape(m)
        y = model.output(times[i], states[i], u)
        inputs[i] = u
        outputs[i] = y
        p = dirac.lift(model, times[i], states[i], rates[i], u, y)
        points.append(p)
        diss_sum += tab.beta[i] * float(p.e_d @ p.f_d)
        port_sum += tab.beta[i] * float(y @ u)
    diss_sum *= h
    port_sum *= h

    H0 = float(model.H(t0, x0))
    H_end = float(model.H(t0 + h, x_end))
    return StepRecord(
        t0=t0, h=h, x0=x0,
        stage_times=times, stage_states=states, stage_rates=rates,
        stage_inputs=inputs, stage_outputs=outputs,
        x_end=x_end, H0=H0, H_end=H_end, delta_H=H_end - H0,
        diss_sum=diss_sum, port_sum=port_sum,
        dirac_points=tuple(points),
        newton_iterations=iters, newton_residual=res, newton_tolerance=tol,
    )


@dataclass(frozen=True)
class Trajectory:
    """Chained step records with dense evaluation.

    Between grid points the state follows the collocation polynomial
    x(t0 + tau h) = x0 + h sum_j xdot_j int_0^tau l_j, so dense output
    is exact with respect to the discrete solution.
    """

    steps: tuple
    tableau: ButcherTableau

    @property
    def t_start(self) -> float:
        return self.steps[0].t0

    @property
    def t_end(self) -> float:
        last = self.steps[-1]
        return last.t0 + last.h

    @property
    def times(self) -> np.ndarray:
        """Grid times including both endpoints."""
        return np.array([rec.t0 for rec in self.steps] + [self.t_end])

    @property
    def states(self) -> np.ndarray:
        """States at the grid times, shape (len(steps) + 1, n)."""
        return np.vstack([self.steps[0].x0]
                         + [rec.x_end for rec in self.steps])

    @property
    def energies(self) -> np.ndarray:
        return np.array([self.steps[0].H0] + [rec.H_end for rec in self.steps])

    def evaluate(self, t: float) -> np.ndarray:
        """Dense state via the collocation polynomial of the owning step."""
        if not self.t_start <= t <= self.t_end + 1e-12 * max(1.0, abs(self.t_end)):
            raise ValueError(f"t={t} outside [{self.t_start}, {self.t_end}]")
        starts = np.array([rec.t0 for rec in self.steps])
        idx = int(np.searchsorted(starts, t, side="right") - 1)
        idx = max(0, min(idx, len(self.steps) - 1))
        rec = self.steps[idx]
        tau = (t - rec.t0) / rec.h
        weights = np.array([
            np.polynomial.polynomial.polyval(tau, self.tableau.basis_integrals[j])
            for j in range(self.tableau.s)])
        return rec.x0 + rec.h * (weights @ rec.stage_rates)

    def energy_summary(self) -> dict:
        """Grid energies plus cumulative dissipation/port sums and defects."""
        diss = np.array([rec.diss_sum for rec in self.steps])
        port = np.array([rec.port_sum for rec in self.steps])
        defect = np.array([discrete_energy_report(rec).residual
                           for rec in self.steps])
        return {
            "t": self.times,
            "H": self.energies,
            "cumulative_dissipation": np.concatenate([[0.0], np.cumsum(diss)]),
            "cumulative_port": np.concatenate([[0.0], np.cumsum(port)]),
            "balance_residuals": defect,
        }


def check_consistency(model: PHDAEModel, t0: float, x0: np.ndarray,
                      u0: np.ndarray, tol: float = 1e-8) -> float:
    """Residual of the best xdot at (t0, x0); large values mean x0 is
    inconsistent with the algebraic part."""
    c = model.coeffs(t0, x0)
    rhs = (c.J - c.R) @ c.z + (c.B - c.P) @ np.asarray(u0, float).reshape(model.m) - c.r
    xdot, *_ = np.linalg.lstsq(c.E, rhs, rcond=None)
    res = float(np.max(np.abs(c.E @ xdot - rhs), initial=0.0))
    scale = 1.0 + float(np.max(np.abs(rhs), initial=0.0))
    if res > tol * scale:
        raise ValueError(
            f"initial state is inconsistent: algebraic residual {res:.3e} "
            f"exceeds {tol:g}*(1+|rhs|); use consistent_init first")
    return res


def integrate(model: PHDAEModel, t_span: tuple[float, float], x0: np.ndarray,
              h: float, tab: ButcherTableau | None = None,
              input_fn: InputFn | None = None,
              newton: NewtonOptions | None = None,
              consistency_check: bool = True,
              callback: Callable[[StepRecord], None] | None = None) -> Trajectory:
    """March from t_span[0] to t_span[1] in steps of h (last one shortened).

    Each step warm-starts from the previous slopes.  ``callback`` runs
    after every accepted step, so callers can stream output; failures
    raise NewtonError annotated with the step index after all previous
    records were delivered.
    """
    t0, t_end = float(t_span[0]), float(t_span[1])
    if h <= 0:
        raise ValueError("step size must be positive")
    if t_end <= t0:
        raise ValueError("time span must be increasing")
    tab = tab or gauss_legendre_tableau(1)
    input_fn = input_fn or _zero_input(model.m)
    x0 = np.asarray(x0, dtype=float).reshape(model.n)
    if consistency_check:
        check_consistency(model, t0, x0, input_fn(t0, x0))

    span = t_end - t0
    n_steps = max(1, int(np.ceil(span / h - 1e-12)))
    records = []
    x = x0
    rates = None
    for k in range(n_steps):
        tk = t0 + k * h
        hk = min(h, t_end - tk)
        try:
            rec = step(model, tk, x, hk, tab, input_fn=input_fn,
                       newton=newton, initial_rates=rates)
        except NewtonError as exc:
            raise NewtonError(f"step {k + 1} at t={tk:g} failed: {exc}",
                              residual=exc.residual) from exc
        records.append(rec)
        if callback is not None:
            callback(rec)
        x = rec.x_end
        rates = rec.stage_rates
    return Trajectory(steps=tuple(records), tableau=tab)


def consistent_init(model: PHDAEModel, t0: float, x_guess: np.ndarray,
                    u0, newton: NewtonOptions | None = None,
                    algebraic_mask: np.ndarray | None = None) -> np.ndarray:
    """Complete a state guess so the algebraic relations hold at t0.

    Coordinates multiplied by a nonzero column of E(t0, x_guess) are
    treated as differential and held fixed; the remaining coordinates
    are solved from the rows of E with no content (the algebraic rows)
    by Newton iteration.  ``u0`` may be an input vector or a function
    (t, x) -> u, which matters when the input feeds back on the state.
    Pass ``algebraic_mask`` (boolean, True = solve this coordinate) when
    the structural split is ambiguous.
    """
    if model.ell != model.n:
        raise ValueError("consistent_init requires a square model (ell == n)")
    newton = newton or NewtonOptions()
    x_guess = np.asarray(x_guess, dtype=float).reshape(model.n).copy()
    input_fn = u0 if callable(u0) else (lambda t, x: u0)

    E0 = model.coeffs(t0, x_guess).E
    thresh = 1e-12 * (1.0 + float(np.max(np.abs(E0), initial=0.0)))
    alg_rows = np.where(np.max(np.abs(E0), axis=1, initial=0.0) <= thresh)[0]
    if algebraic_mask is not None:
        alg_cols = np.where(np.asarray(algebraic_mask, dtype=bool))[0]
    else:
        alg_cols = np.where(np.max(np.abs(E0), axis=0, initial=0.0) <= thresh)[0]
    if alg_rows.size != alg_cols.size:
        raise ValueError(
            f"differential/algebraic split is structurally ambiguous "
            f"({alg_rows.size} algebraic rows vs {alg_cols.size} candidate "
            f"coordinates); pass algebraic_mask explicitly")

    if alg_rows.size == 0:
        check_consistency(model, t0, x_guess, input_fn(t0, x_guess))
        return x_guess

    def fun(w: np.ndarray):
        x = x_guess.copy()
        x[alg_cols] = w
        c = model.coeffs(t0, x)
        u = np.asarray(input_fn(t0, x), dtype=float).reshape(model.m)
        rhs = (c.J - c.R) @ c.z + (c.B - c.P) @ u - c.r
        scale = float(np.max(np.abs(rhs), initial=0.0))
        return -rhs[alg_rows], scale

    w, *_ = _solve_newton(fun, x_guess[alg_cols], newton)
    x = x_guess
    x[alg_cols] = w
    check_consistency(model, t0, x, input_fn(t0, x))
    return x


@dataclass(frozen=True)
class ConvergenceStudy:
    """End-state errors over a step-size grid and the fitted order."""

    h_values: np.ndarray
    errors: np.ndarray
    component_errors: np.ndarray
    order: float
    component_orders: np.ndarray
    monotone: bool


def convergence_study(model: PHDAEModel, t_span: tuple[float, float],
                      x0: np.ndarray, h_values, tab: ButcherTableau,
                      input_fn: InputFn | None = None,
                      reference=None,
                      newton: NewtonOptions | None = None,
                      components: np.ndarray | None = None) -> ConvergenceStudy:
    """Measure the observed order against a reference end state.

    ``reference`` is a Trajectory, a callable t -> x(t), or None, in
    which case a 3-stage run with h = min(h_values) / 10 is computed.
    ``components`` restricts the fitted error norm (for example to the
    differential variables of a DAE); per-component slopes are reported
    regardless.  Non-monotone error sequences are flagged but the
    least-squares slope is still returned.
    """
    h_values = np.sort(np.asarray(h_values, dtype=float))[::-1]
    if reference is None:
        reference = integrate(model, t_span, x0, min(h_values) / 10.0,
                              gauss_legendre_tableau(3), input_fn=input_fn,
                              newton=newton)
    if isinstance(reference, Trajectory):
        ref_end = reference.states[-1]
    else:
        ref_end = np.asarray(reference(t_span[1]), dtype=float)

    comp_errors = np.empty((h_values.size, model.n))
    for i, h in enumerate(h_values):
        traj = integrate(model, t_span, x0, float(h), tab,
                         input_fn=input_fn, newton=newton)
        comp_errors[i] = np.abs(traj.states[-1] - ref_end)

    sel = (np.arange(model.n) if components is None
           else np.asarray(components, dtype=int))
    errors = np.max(comp_errors[:, sel], axis=1)

    logs = np.log(h_values)
    with np.errstate(divide="ignore"):
        order = float(np.polyfit(logs, np.log(errors), 1)[0])
        comp_orders = np.array([
            np.polyfit(logs, np.log(np.maximum(comp_errors[:, j], 1e-300)), 1)[0]
            for j in range(model.n)])
    monotone = bool(np.all(np.diff(errors) < 0))
    return ConvergenceStudy(
        h_values=h_values, errors=errors, component_errors=comp_errors,
        order=order, component_orders=comp_orders, monotone=monotone,
    )
