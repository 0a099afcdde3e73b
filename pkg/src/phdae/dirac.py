"""Dirac structure of an autonomous model: membership, pairing, lifting.

The flow/effort space at a state x splits into storage, port and
dissipation components.  Pairs (f, e) belong to the structure when

    f + K(x) e = 0,      K(x) = [[Gamma(x), I], [-I, 0]],

with Gamma the extended structure matrix.  K is skew, so every member
pairs to zero with itself (the power balance), and the member set is a
maximally isotropic subspace of dimension 2 (ell + m).

Trajectory points lift into the structure via

    f_s = -E(x) xdot    e_s = z(x)
    f_p = y             e_p = u
    f_d = (z(x), u)     e_d = -W(x) f_d

so converged collocation stages are members up to the solver tolerance.
Time-varying models should be autonomized first; the base time stored
on a point is carried along for bookkeeping only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PHDAEModel


@dataclass(frozen=True)
class DiracPoint:
    """Partitioned flow/effort pair anchored at a state."""

    f_s: np.ndarray
    f_p: np.ndarray
    f_d: np.ndarray
    e_s: np.ndarray
    e_p: np.ndarray
    e_d: np.ndarray
    x: np.ndarray
    t: float = 0.0

    def flow(self) -> np.ndarray:
        return np.concatenate([self.f_s, self.f_p, self.f_d])

    def effort(self) -> np.ndarray:
        return np.concatenate([self.e_s, self.e_p, self.e_d])


def point_from_vectors(f: np.ndarray, e: np.ndarray, x: np.ndarray,
                       ell: int, m: int, t: float = 0.0) -> DiracPoint:
    """Split stacked flow/effort vectors into a DiracPoint."""
    f = np.asarray(f, dtype=float)
    e = np.asarray(e, dtype=float)
    if f.size != 2 * (ell + m) or e.size != 2 * (ell + m):
        raise ValueError("flow/effort vectors must have length 2*(ell+m)")
    return DiracPoint(
        f_s=f[:ell], f_p=f[ell:ell + m], f_d=f[ell + m:],
        e_s=e[:ell], e_p=e[ell:ell + m], e_d=e[ell + m:],
        x=np.asarray(x, dtype=float), t=t,
    )


def pairing(p: DiracPoint) -> float:
    """Duality product <e, f> = e_s.f_s + e_p.f_p + e_d.f_d.

    Vanishes for members; along lifted solution points this restates
    the power balance equation.
    """
    return float(p.e_s @ p.f_s + p.e_p @ p.f_p + p.e_d @ p.f_d)


def skew_map(model: PHDAEModel, x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """The skew block matrix K(x) whose graph is the Dirac structure."""
    big = model.ell + model.m
    gamma = model.gamma_matrix(t, x)
    K = np.zeros((2 * big, 2 * big))
    K[:big, :big] = gamma
    K[:big, big:] = np.eye(big)
    K[big:, :big] = -np.eye(big)
    return K


@dataclass(frozen=True)
class MembershipResult:
    residual: float
    member: bool
    storage_flow_in_range: bool
    storage_flow_residual: float


def membership(model: PHDAEModel, p: DiracPoint,
               tol: float = 1e-10) -> MembershipResult:
    """Test f + K(x) e = 0 in the max norm.

    Membership itself is checked in the ambient space; whether the
    storage flow actually lies in range(E(x)) is reported separately
    (rank-revealing least squares with threshold 1e-10 scaled by the
    matrix and vector sizes), preserving the storage-fiber semantics
    without complicating the linear test.
    """
    K = skew_map(model, p.x, p.t)
    residual = float(np.max(np.abs(p.flow() + K @ p.effort()), initial=0.0))

    E = model.coeffs(p.t, p.x).E
    if model.ell == 0 or p.f_s.size == 0:
        range_res = 0.0
    else:
        coef, *_ = np.linalg.lstsq(E, p.f_s, rcond=None)
        range_res = float(np.max(np.abs(E @ coef - p.f_s), initial=0.0))
    range_tol = 1e-10 * (1.0 + np.linalg.norm(E)) * (1.0 + np.linalg.norm(p.f_s))
    return MembershipResult(
        residual=residual,
        member=residual <= tol,
        storage_flow_in_range=range_res <= range_tol,
        storage_flow_residual=range_res,
    )


def lift(model: PHDAEModel, t: float, x: np.ndarray, xdot: np.ndarray,
         u: np.ndarray, y: np.ndarray) -> DiracPoint:
    """Lift a trajectory point (x, xdot, u, y) into flow/effort coordinates."""
    x = np.asarray(x, dtype=float).reshape(model.n)
    xdot = np.asarray(xdot, dtype=float).reshape(model.n)
    u = np.asarray(u, dtype=float).reshape(model.m)
    y = np.asarray(y, dtype=float).reshape(model.m)
    c = model.coeffs(t, x)
    f_d = np.concatenate([c.z, u])
    W = np.block([[c.R, c.P], [c.P.T, c.S]])
    return DiracPoint(
        f_s=-(c.E @ xdot), f_p=y, f_d=f_d,
        e_s=c.z, e_p=u, e_d=-(W @ f_d),
        x=x, t=t,
    )


@dataclass(frozen=True)
class DimensionCheck:
    expected: int
    rank: int
    dimension: int
    ok: bool


def dimension_check(model: PHDAEModel, x: np.ndarray,
                    t: float = 0.0) -> DimensionCheck:
    """Verify dim D_x = ell + m + ... = 2 (ell + m) numerically.

    The member set is the null space of [I, K(x)] acting on stacked
    (f, e); its dimension must equal the flow-space dimension
    2 (ell + m) for a Dirac structure.  Rank is computed from singular
    values with threshold 1e-10 times the largest one, since no
    symbolic rank is available for state-dependent structure matrices.
    """
    big = 2 * (model.ell + model.m)
    K = skew_map(model, x, t)
    system = np.hstack([np.eye(big), K])
    sv = np.linalg.svd(system, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > 1e-10 * smax))
    dim = 2 * big - rank
    return DimensionCheck(expected=big, rank=rank, dimension=dim,
                          ok=dim == big)


def separating_member(model: PHDAEModel, p: DiracPoint) -> DiracPoint:
    """Build a member that pairs nontrivially with a non-member.

    For a point with defect d = f + K e != 0, the member
    (f', e') = (-K d / |d|^2, d / |d|^2) satisfies <<p, (f', e')>> = 1,
    witnessing maximal isotropy constructively.
    """
    K = skew_map(model, p.x, p.t)
    d = p.flow() + K @ p.effort()
    nd2 = float(d @ d)
    if nd2 == 0.0:
        raise ValueError("point is a member; no separating partner exists")
    e = d / nd2
    f = -(K @ e)
    return point_from_vectors(f, e, p.x, model.ell, model.m, t=p.t)
