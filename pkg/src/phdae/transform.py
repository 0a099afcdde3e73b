"""Structure-preserving model algebra.

Three constructions that stay inside the model class:

* ``apply_transformation`` composes a model with a state change
  x = phi(t, x~) and a pointwise-invertible row scaling U,
* ``autonomize`` appends time as a state so all coefficients become
  time-independent,
* ``interconnect`` couples two autonomous models through a linear
  relation M u + N y = 0 on their aggregated ports.

Each returns a new immutable model whose structure matrices remain
skew/PSD and whose energy stays compatible with the effort, so the
result passes validation whenever the inputs do.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import PHDAEModel, constant

StateMap = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TransformSpec:
    """Change of variables x = phi(t, x~) with row scaling U(t, x~).

    ``dphi_dx`` is the state Jacobian of phi (full column rank where
    used) and ``dphi_dt`` its time derivative.  ``phi_inverse`` is
    optional and only needed to map initial states or check solution
    correspondence; inverting phi numerically is out of scope.
    ``n_out`` is the transformed state dimension (defaults to the
    model's).
    """

    phi: StateMap
    dphi_dx: StateMap
    dphi_dt: StateMap
    U: StateMap
    phi_inverse: StateMap | None = None
    n_out: int | None = None


def identity_transform(n: int, ell: int) -> TransformSpec:
    eye = np.eye(ell)
    return TransformSpec(
        phi=lambda t, x: x,
        dphi_dx=constant(np.eye(n)),
        dphi_dt=constant(np.zeros(n)),
        U=constant(eye),
        phi_inverse=lambda t, x: x,
        n_out=n,
    )


def affine_transform(A: np.ndarray, b: np.ndarray | None = None,
                     U: np.ndarray | None = None,
                     ell: int | None = None) -> TransformSpec:
    """Spec for x = A x~ + b with a constant row scaling U."""
    A = np.asarray(A, dtype=float)
    n, n_out = A.shape
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    if U is None:
        if ell is None:
            ell = n
        U = np.eye(ell)
    U = np.asarray(U, dtype=float)
    A_inv = None
    if n == n_out:
        try:
            A_inv = np.linalg.inv(A)
        except np.linalg.LinAlgError:
            A_inv = None
    return TransformSpec(
        phi=lambda t, xt: A @ xt + b,
        dphi_dx=constant(A),
        dphi_dt=constant(np.zeros(n)),
        U=constant(U),
        phi_inverse=(None if A_inv is None
                     else (lambda t, x: A_inv @ (x - b))),
        n_out=n_out,
    )


def apply_transformation(model: PHDAEModel, spec: TransformSpec) -> PHDAEModel:
    """Pull a model back through (phi, U).

    The transformed coefficients are

        E~ = U^T (E o phi) dphi_dx          J~ = U^T (J o phi) U
        R~ = U^T (R o phi) U                B~ = U^T (B o phi)
        P~ = U^T (P o phi)                  z~ = U^{-1} (z o phi)
        r~ = U^T (r o phi + (E o phi) dphi_dt)

    with S, N evaluated along phi and H~ = H o phi.  Energy gradients
    compose through the chain rule, so the result validates with the
    same tolerances, and solutions map onto solutions of the original
    system through phi.
    """
    n_out = spec.n_out if spec.n_out is not None else model.n
    ell, m = model.ell, model.m

    def at(t, xt):
        return np.asarray(spec.phi(t, xt), dtype=float).reshape(model.n)

    def umat(t, xt):
        return np.asarray(spec.U(t, xt), dtype=float).reshape(ell, ell)

    def jphi(t, xt):
        return np.asarray(spec.dphi_dx(t, xt), dtype=float).reshape(model.n, n_out)

    def tphi(t, xt):
        return np.asarray(spec.dphi_dt(t, xt), dtype=float).reshape(model.n)

    def z_new(t, xt):
        U = umat(t, xt)
        zval = model.coeffs(t, at(t, xt)).z
        try:
            return np.linalg.solve(U, zval)
        except np.linalg.LinAlgError as exc:
            raise ValueError(
                f"row scaling U is singular at t={t!r}, x~={xt!r}") from exc

    def grad_x_new(t, xt):
        return jphi(t, xt).T @ np.asarray(
            model.gradH_x(t, at(t, xt)), dtype=float).reshape(model.n)

    def grad_t_new(t, xt):
        x = at(t, xt)
        gx = np.asarray(model.gradH_x(t, x), dtype=float).reshape(model.n)
        return float(model.gradH_t(t, x)) + float(gx @ tphi(t, xt))

    return PHDAEModel(
        n=n_out, ell=ell, m=m,
        E=lambda t, xt: umat(t, xt).T @ model.coeffs(t, at(t, xt)).E @ jphi(t, xt),
        J=lambda t, xt: umat(t, xt).T @ model.coeffs(t, at(t, xt)).J @ umat(t, xt),
        R=lambda t, xt: umat(t, xt).T @ model.coeffs(t, at(t, xt)).R @ umat(t, xt),
        B=lambda t, xt: umat(t, xt).T @ model.coeffs(t, at(t, xt)).B,
        P=lambda t, xt: umat(t, xt).T @ model.coeffs(t, at(t, xt)).P,
        S=lambda t, xt: model.coeffs(t, at(t, xt)).S,
        N=lambda t, xt: model.coeffs(t, at(t, xt)).N,
        z=z_new,
        r=lambda t, xt: umat(t, xt).T @ (
            model.coeffs(t, at(t, xt)).r
            + model.coeffs(t, at(t, xt)).E @ tphi(t, xt)),
        H=lambda t, xt: float(model.H(t, at(t, xt))),
        gradH_x=grad_x_new,
        gradH_t=grad_t_new,
        time_interval=model.time_interval,
    )


def autonomize(model: PHDAEModel) -> PHDAEModel:
    """Append time as an extra state driven by a constant auxiliary input.

    The new state is (x, tau) with tau' = 1; the former time-flow r
    moves into the last column of the flow matrix, every coefficient
    reads the clock from tau instead of t, and the constant input 1
    becomes a genuine extra input channel (see ``autonomized_input``).
    The gradient condition collapses to the state part only.
    Autonomizing an already autonomous model leaves the x-dynamics
    untouched.
    """
    n, ell, m = model.n, model.ell, model.m

    def split(X):
        X = np.asarray(X, dtype=float).reshape(n + 1)
        return X[:n], float(X[n])

    def E_new(t, X):
        x, tau = split(X)
        c = model.coeffs(tau, x)
        out = np.zeros((ell + 1, n + 1))
        out[:ell, :n] = c.E
        out[:ell, n] = c.r
        out[ell, n] = 1.0
        return out

    def pad_square(fn):
        def inner(t, X):
            x, tau = split(X)
            out = np.zeros((ell + 1, ell + 1))
            out[:ell, :ell] = np.asarray(fn(tau, x), dtype=float).reshape(ell, ell)
            return out
        return inner

    def B_new(t, X):
        x, tau = split(X)
        out = np.zeros((ell + 1, m + 1))
        out[:ell, :m] = np.asarray(model.B(tau, x), dtype=float).reshape(ell, m)
        out[ell, m] = 1.0
        return out

    def pad_port(fn, rows, cols):
        def inner(t, X):
            x, tau = split(X)
            out = np.zeros((rows + 1, cols + 1))
            out[:rows, :cols] = np.asarray(fn(tau, x), dtype=float).reshape(rows, cols)
            return out
        return inner

    def z_new(t, X):
        x, tau = split(X)
        return np.concatenate([
            np.asarray(model.z(tau, x), dtype=float).reshape(ell), [0.0]])

    def grad_new(t, X):
        x, tau = split(X)
        gx = np.asarray(model.gradH_x(tau, x), dtype=float).reshape(n)
        return np.concatenate([gx, [float(model.gradH_t(tau, x))]])

    return PHDAEModel(
        n=n + 1, ell=ell + 1, m=m + 1,
        E=E_new,
        J=pad_square(model.J),
        R=pad_square(model.R),
        B=B_new,
        P=pad_port(model.P, ell, m),
        S=pad_port(model.S, m, m),
        N=pad_port(model.N, m, m),
        z=z_new,
        r=constant(np.zeros(ell + 1)),
        H=lambda t, X: float(model.H(split(X)[1], split(X)[0])),
        gradH_x=grad_new,
        gradH_t=lambda t, X: 0.0,
        time_interval=model.time_interval,
    )


def autonomized_input(input_fn, m: int):
    """Lift an input function to the autonomized model (appends the 1)."""
    def inner(t, X):
        X = np.asarray(X, dtype=float)
        u = np.asarray(input_fn(float(X[-1]), X[:-1]), dtype=float).reshape(m)
        return np.concatenate([u, [1.0]])
    return inner


@dataclass(frozen=True)
class InterconnectionSpec:
    """Linear port relation M u + N y = 0 on the aggregated ports.

    Both matrices are k x m with m the total port count of the two
    models being coupled.  Redundant (rank-deficient) relation rows are
    tolerated but flagged with a warning.
    """

    M_ic: np.ndarray
    N_ic: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M_ic, dtype=float))
        N = np.atleast_2d(np.asarray(self.N_ic, dtype=float))
        if M.shape != N.shape:
            raise ValueError(
                f"relation matrices must share a shape, got {M.shape} and {N.shape}")
        M.flags.writeable = False
        N.flags.writeable = False
        object.__setattr__(self, "M_ic", M)
        object.__setattr__(self, "N_ic", N)
        if self.k and np.linalg.matrix_rank(np.hstack([M, N])) < self.k:
            warnings.warn("interconnection relation rows are rank deficient",
                          stacklevel=3)

    @property
    def k(self) -> int:
        return self.M_ic.shape[0]

    @property
    def m(self) -> int:
        return self.M_ic.shape[1]


def _probe_autonomous(model: PHDAEModel, label: str, seed: int = 0):
    """Cheap sampling check that a model has no explicit time dependence."""
    rng = np.random.default_rng(seed)
    t0 = model.time_interval[0]
    ta, tb = t0, t0 + 0.37
    for _ in range(3):
        x = rng.uniform(-1.0, 1.0, model.n)
        ca, cb = model.coeffs(ta, x), model.coeffs(tb, x)
        for name in ("E", "J", "R", "B", "P", "S", "N", "z"):
            va, vb = getattr(ca, name), getattr(cb, name)
            if np.max(np.abs(va - vb), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(va), initial=0.0)):
                raise ValueError(
                    f"{label} model is time dependent (coefficient {name} "
                    f"changes between t={ta} and t={tb}); autonomize it first")
        if np.max(np.abs(ca.r), initial=0.0) > 1e-12:
            raise ValueError(
                f"{label} model has a nonzero time-flow r; autonomize it first")
        ha, hb = float(model.H(ta, x)), float(model.H(tb, x))
        if abs(ha - hb) > 1e-12 * (1.0 + abs(ha)):
            raise ValueError(
                f"{label} model has a time-dependent energy; autonomize it first")


def interconnect(m1: PHDAEModel, m2: PHDAEModel,
                 spec: InterconnectionSpec) -> PHDAEModel:
    """Couple two autonomous models through M u + N y = 0.

    The aggregate keeps all ports as explicit states: its state is
    (x1, x2, u_hat, y_hat) where u_hat and y_hat copy the stacked
    inputs and outputs.  The equations are the original dynamics driven
    by u_hat, the output definition of y_hat, the copy rows
    u_hat = u (u is the new free input of the same total width), and
    the k relation rows M u_hat + N y_hat = 0.  The combined effort is
    (z1, z2, u_hat, y_hat, 0_k), the energy is H1 + H2, and the
    structure/dissipation data is the permuted direct sum of the
    subsystems' padded with the skew coupling blocks, so validation
    carries over.  No elimination or index reduction is attempted; the
    aggregate has n1 + n2 + 2m states and l1 + l2 + 2m + k equations,
    square exactly when k = 0 and the subsystems are.
    """
    if spec.m != m1.m + m2.m:
        raise ValueError(
            f"relation matrices have {spec.m} columns but the models "
            f"expose {m1.m + m2.m} ports in total")
    _probe_autonomous(m1, "first")
    _probe_autonomous(m2, "second")

    n1, l1, p1 = m1.n, m1.ell, m1.m
    n2, l2, p2 = m2.n, m2.ell, m2.m
    n = n1 + n2
    ell = l1 + l2
    mm = p1 + p2
    k = spec.k
    L = ell + 2 * mm + k
    NS = n + 2 * mm

    # Reorder the direct sum (l1, p1, l2, p2) into (l1, l2, p1, p2).
    perm = np.concatenate([
        np.arange(0, l1),
        np.arange(l1 + p1, l1 + p1 + l2),
        np.arange(l1, l1 + p1),
        np.arange(l1 + p1 + l2, l1 + p1 + l2 + p2),
    ])

    def split(X):
        X = np.asarray(X, dtype=float).reshape(NS)
        return X[:n1], X[n1:n], X[n:n + mm], X[n + mm:]

    def gamma_w(t, X):
        x1, x2, _, _ = split(X)
        g = np.zeros((ell + mm, ell + mm))
        w = np.zeros((ell + mm, ell + mm))
        d1 = l1 + p1
        g[:d1, :d1] = m1.gamma_matrix(t, x1)
        g[d1:, d1:] = m2.gamma_matrix(t, x2)
        w[:d1, :d1] = m1.w_matrix(t, x1)
        w[d1:, d1:] = m2.w_matrix(t, x2)
        return g[np.ix_(perm, perm)], w[np.ix_(perm, perm)]

    # Constant skew coupling blocks tying the port copies to the relation.
    TR = np.zeros((ell + mm, mm + k))
    TR[ell:, :mm] = np.eye(mm)
    TR[ell:, mm:] = -spec.M_ic.T
    BR = np.zeros((mm + k, mm + k))
    BR[:mm, mm:] = -spec.N_ic.T
    BR[mm:, :mm] = spec.N_ic

    def J_new(t, X):
        gamma, _ = gamma_w(t, X)
        out = np.zeros((L, L))
        out[:ell + mm, :ell + mm] = gamma
        out[:ell + mm, ell + mm:] = TR
        out[ell + mm:, :ell + mm] = -TR.T
        out[ell + mm:, ell + mm:] = BR
        return out

    def R_new(t, X):
        _, w = gamma_w(t, X)
        out = np.zeros((L, L))
        out[:ell + mm, :ell + mm] = w
        return out

    def E_new(t, X):
        x1, x2, _, _ = split(X)
        out = np.zeros((L, NS))
        out[:l1, :n1] = np.asarray(m1.E(t, x1), dtype=float).reshape(l1, n1)
        out[l1:ell, n1:n] = np.asarray(m2.E(t, x2), dtype=float).reshape(l2, n2)
        return out

    B_new = np.zeros((L, mm))
    B_new[ell + mm:ell + 2 * mm, :] = np.eye(mm)

    def z_new(t, X):
        x1, x2, uh, yh = split(X)
        return np.concatenate([
            np.asarray(m1.z(t, x1), dtype=float).reshape(l1),
            np.asarray(m2.z(t, x2), dtype=float).reshape(l2),
            uh, yh, np.zeros(k)])

    def grad_new(t, X):
        x1, x2, _, _ = split(X)
        return np.concatenate([
            np.asarray(m1.gradH_x(t, x1), dtype=float).reshape(n1),
            np.asarray(m2.gradH_x(t, x2), dtype=float).reshape(n2),
            np.zeros(2 * mm)])

    t_lo = min(m1.time_interval[0], m2.time_interval[0])
    t_hi = max(m1.time_interval[1], m2.time_interval[1])
    return PHDAEModel(
        n=NS, ell=L, m=mm,
        E=E_new, J=J_new, R=R_new,
        B=constant(B_new), P=constant(np.zeros((L, mm))),
        S=constant(np.zeros((mm, mm))), N=constant(np.zeros((mm, mm))),
        z=z_new,
        r=constant(np.zeros(L)),
        H=lambda t, X: float(m1.H(t, split(X)[0])) + float(m2.H(t, split(X)[1])),
        gradH_x=grad_new,
        gradH_t=lambda t, X: 0.0,
        time_interval=(t_lo, t_hi),
    )
