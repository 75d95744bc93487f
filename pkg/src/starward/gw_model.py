"""The complex Grosse-Wulkenhaar scalar model on Moyal space.

Action functional (Euclidean, complex field, harmonic confining term,
quartic coupling with both orderings)::

    S = int [ d phi * d phibar + m^2 phi * phibar
              + (Omega^2/2) (xt phi) * (xt phibar)
              + (lambda / (2*4!)) (phi*phibar*phi*phibar + phi*phibar*phibar*phi) ]

All rescaled-coordinate multiplications go through the exact closed forms
(`tilde_left` / `tilde_right`); the harmonic term is evaluated in its
star-algebra (recast) form so the whole density lives in the star algebra.

The Lagrangian density returned by :func:`lagrangian_density` is the
symmetrized operator ordering used inside the canonical energy-momentum
tensor; it integrates to the same action as the literal ordering, and it is
the unique ordering for which the local divergence identity of the currents
module closes exactly (verified symbolically in the test suite's word
algebra and numerically against finite differences).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
import scipy.sparse.linalg as spla
from scipy.optimize import NoConvergence, newton_krylov

from .lattice import (
    Field,
    Lattice,
    LatticeSpecError,
    boundary_decay,
    integrate,
    l2_norm,
    laplacian,
    make_lattice,
    masked_l2_norm,
    interior_mask,
    spectral_derivative,
)
from .moyal import (
    DegenerateThetaError,
    StarBackend,
    ThetaStructure,
    star,
    star_anticommutator,
    tilde_coordinate,
    tilde_left,
    tilde_right,
)

__all__ = [
    "ModelParams",
    "FieldPair",
    "SolverError",
    "QUARTIC_NORM",
    "lagrangian_density",
    "action",
    "harmonic_recast_residual",
    "el_residual_phi",
    "el_residual_phibar",
    "constraint_field",
    "tilde_ordered_constraint",
    "variation_check",
    "quadratic_operator_matrix",
    "solve_linear_onshell",
    "onshell_fixture",
    "solve_onshell_newton",
    "solve_onshell_x0profile",
]

# quartic normalization lambda/(2*4!)
QUARTIC_NORM = 1.0 / 48.0


class SolverError(RuntimeError):
    """Nonlinear or eigenvalue solve failed."""


@dataclass(frozen=True)
class ModelParams:
    """(m^2, Omega, lambda) plus the noncommutativity structure."""

    mass_sq: float
    omega: float
    coupling: float
    theta: ThetaStructure

    def __post_init__(self) -> None:
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.coupling < 0:
            raise ValueError("coupling must be >= 0")
        if self.omega > 0 and not self.theta.is_invertible:
            raise DegenerateThetaError(
                "omega > 0 requires an invertible Theta (xt undefined otherwise)"
            )


@dataclass(frozen=True)
class FieldPair:
    """phi and phibar as independent variation slots."""

    phi: Field
    phibar: Field

    def __post_init__(self) -> None:
        if self.phi.lattice != self.phibar.lattice:
            raise LatticeSpecError("phi and phibar must share a lattice")

    @classmethod
    def from_phi(cls, phi: Field) -> "FieldPair":
        return cls(phi, phi.conj())

    @property
    def lattice(self) -> Lattice:
        return self.phi.lattice

    def scale(self) -> float:
        return max(l2_norm(self.phi), l2_norm(self.phibar), 1e-30)


@dataclass(frozen=True)
class TildeFrame:
    """Affine frame for the rescaled coordinate: xt -> scale*xt + offset."""

    scale: float = 1.0
    offset: tuple[float, ...] | None = None

    def shift(self, nu: int) -> float:
        return 0.0 if self.offset is None else self.offset[nu]


_ID_FRAME = TildeFrame()


def _tl(f: Field, p: ModelParams, nu: int, frame: TildeFrame = _ID_FRAME) -> Field:
    return tilde_left(f, p.theta, nu, scale=frame.scale, shift=frame.shift(nu))


def _tr(f: Field, p: ModelParams, nu: int, frame: TildeFrame = _ID_FRAME) -> Field:
    return tilde_right(f, p.theta, nu, scale=frame.scale, shift=frame.shift(nu))


def lagrangian_density(
    fp: FieldPair,
    p: ModelParams,
    backend: StarBackend,
    drop_mass: bool = False,
    frame: TildeFrame = _ID_FRAME,
) -> Field:
    """Symmetrized star-algebra Lagrangian density (the EMT ordering).

    kinetic   (1/2) sum_rho {d_rho phi, d_rho phibar}
    mass      (m^2/2) {phi, phibar}
    harmonic  (Om^2/8) sum_nu [ {xt phi, xt phibar} + (1/2){xt {phibar,phi}, xt} ]
    quartic   (lam/96) [(phi phibar)^2 + (phibar phi)^2]
            + (lam/192) [{phi phibar, phibar phi}-cross + {phi phi, phibar phibar}-cross]
    """
    lat = fp.lattice
    th = p.theta
    phi, phb = fp.phi, fp.phibar
    S = lambda a, b: star(a, b, th, backend)
    A = lambda a, b: star_anticommutator(a, b, th, backend)

    dens = Field(lat, np.zeros(lat.shape, dtype=np.complex128))
    for rho in range(lat.dim):
        dens = dens + 0.5 * A(spectral_derivative(phi, rho), spectral_derivative(phb, rho))
    if not drop_mass and p.mass_sq != 0.0:
        dens = dens + (p.mass_sq / 2.0) * A(phi, phb)
    if p.omega != 0.0:
        w = A(phb, phi)  # {phibar, phi}
        harm = Field(lat, np.zeros(lat.shape, dtype=np.complex128))
        for nu in range(lat.dim):
            harm = harm + A(_tl(phi, p, nu, frame), _tl(phb, p, nu, frame))
            tw = _tl(w, p, nu, frame)
            harm = harm + 0.5 * (_tr(tw, p, nu, frame) + _tl(tw, p, nu, frame))
        dens = dens + (p.omega**2 / 8.0) * harm
    if p.coupling != 0.0:
        c = p.coupling * QUARTIC_NORM
        fg, gf = S(phi, phb), S(phb, phi)
        ff, gg = S(phi, phi), S(phb, phb)
        dens = dens + (c / 2.0) * (S(fg, fg) + S(gf, gf))
        dens = dens + (c / 4.0) * (S(fg, gf) + S(gf, fg) + S(ff, gg) + S(gg, ff))
    return dens


def action(
    fp: FieldPair,
    p: ModelParams,
    backend: StarBackend,
    tilde_scale: float = 1.0,
    tilde_offset: Sequence[float] | None = None,
) -> complex:
    """Action value; ``tilde_scale``/``tilde_offset`` deform the rescaled
    coordinate inside the harmonic term (used by the Ward-identity checks)."""
    frame = TildeFrame(
        tilde_scale, None if tilde_offset is None else tuple(tilde_offset)
    )
    return integrate(lagrangian_density(fp, p, backend, frame=frame))


def harmonic_recast_residual(
    fp: FieldPair, p: ModelParams, backend: StarBackend, margin: float = 0.125
) -> float:
    """Interior-masked L2 norm of (xt phi)*(xt phibar) minus its four-term
    star-algebra recast, both contracted over nu."""
    if not p.theta.is_invertible:
        raise DegenerateThetaError("recast residual needs invertible Theta")
    lat = fp.lattice
    phi, phb = fp.phi, fp.phibar
    S = lambda a, b: star(a, b, p.theta, backend)
    lhs = Field(lat, np.zeros(lat.shape, dtype=np.complex128))
    rhs = Field(lat, np.zeros(lat.shape, dtype=np.complex128))
    for nu in range(lat.dim):
        xt = tilde_coordinate(lat, p.theta, nu)
        lhs = lhs + S(xt * phi, xt * phb)
        rhs = rhs + 0.25 * (
            S(_tl(phi, p, nu), _tl(phb, p, nu))
            + S(_tl(phi, p, nu), _tr(phb, p, nu))
            + S(_tr(phi, p, nu), _tl(phb, p, nu))
            + S(_tr(phi, p, nu), _tr(phb, p, nu))
        )
    return masked_l2_norm(lhs - rhs, interior_mask(lat, margin))


def _quartic_el(phi: Field, phb: Field, p: ModelParams, backend: StarBackend) -> Field:
    # variation slot ordering: 2 phb*phi*phb + phb*phb*phi + phi*phb*phb
    S = lambda a, b: star(a, b, p.theta, backend)
    return (p.coupling * QUARTIC_NORM) * (
        2.0 * S(S(phb, phi), phb) + S(S(phb, phb), phi) + S(S(phi, phb), phb)
    )


def _harmonic_el(other: Field, p: ModelParams) -> Field:
    # (Om^2/8) sum_nu (2 xt other xt + other xt xt + xt xt other)
    lat = other.lattice
    out = Field(lat, np.zeros(lat.shape, dtype=np.complex128))
    for nu in range(lat.dim):
        out = out + 2.0 * _tr(_tl(other, p, nu), p, nu)
        out = out + _tr(_tr(other, p, nu), p, nu)
        out = out + _tl(_tl(other, p, nu), p, nu)
    return (p.omega**2 / 8.0) * out


def el_residual_phi(fp: FieldPair, p: ModelParams, backend: StarBackend) -> Field:
    """Variation of the action with respect to phi (an expression in phibar);
    zero on-shell."""
    res = -laplacian(fp.phibar) + p.mass_sq * fp.phibar
    if p.coupling != 0.0:
        res = res + _quartic_el(fp.phi, fp.phibar, p, backend)
    if p.omega != 0.0:
        res = res + _harmonic_el(fp.phibar, p)
    return res


def el_residual_phibar(fp: FieldPair, p: ModelParams, backend: StarBackend) -> Field:
    """Variation with respect to phibar (an expression in phi)."""
    res = -laplacian(fp.phi) + p.mass_sq * fp.phi
    if p.coupling != 0.0:
        res = res + _quartic_el(fp.phibar, fp.phi, p, backend)
    if p.omega != 0.0:
        res = res + _harmonic_el(fp.phi, p)
    return res


def el_residual_norm(fp: FieldPair, p: ModelParams, backend: StarBackend) -> float:
    return max(
        l2_norm(el_residual_phi(fp, p, backend)),
        l2_norm(el_residual_phibar(fp, p, backend)),
    )


_CONSTRAINT_WEIGHTS = (2.0, 2.0, 1.0, 1.0, 1.0, 1.0)
# pointwise ordering entering the exact divergence identity; same integral
_TILDE_ORDERED_WEIGHTS = (1.0, 1.0, 0.5, 2.5, 2.5, 0.5)


def _constraint_words(
    fp: FieldPair, p: ModelParams, rho: int, backend: StarBackend, weights
) -> Field:
    """Weighted sum of the six orderings
    (phi xt phibar, phibar xt phi, phi phibar xt, xt phi phibar,
     xt phibar phi, phibar phi xt)."""
    lat = fp.lattice
    phi, phb = fp.phi, fp.phibar
    S = lambda a, b: star(a, b, p.theta, backend)
    fg = S(phi, phb)
    gf = S(phb, phi)
    w = weights
    out = (
        w[0] * S(_tr(phi, p, rho), phb)
        + w[1] * S(_tr(phb, p, rho), phi)
        + w[2] * _tr(fg, p, rho)
        + w[3] * _tl(fg, p, rho)
        + w[4] * _tl(gf, p, rho)
        + w[5] * _tr(gf, p, rho)
    )
    return (p.omega**2 / 8.0) * out


def constraint_field(
    fp: FieldPair, p: ModelParams, rho: int, backend: StarBackend
) -> Field:
    """The translation-obstruction density: the variation of the action with
    respect to xt_rho (six-term expression; identically zero when Omega=0)."""
    lat = fp.lattice
    if p.omega == 0.0:
        return Field(lat, np.zeros(lat.shape, dtype=np.complex128))
    if not p.theta.is_invertible:
        raise DegenerateThetaError("constraint density needs invertible Theta")
    return _constraint_words(fp, p, rho, backend, _CONSTRAINT_WEIGHTS)


def tilde_ordered_constraint(
    fp: FieldPair, p: ModelParams, rho: int, backend: StarBackend
) -> Field:
    """The constraint density in the operator ordering that appears pointwise
    in the exact divergence identity.  Integrates to the same value as
    :func:`constraint_field`."""
    lat = fp.lattice
    if p.omega == 0.0:
        return Field(lat, np.zeros(lat.shape, dtype=np.complex128))
    return _constraint_words(fp, p, rho, backend, _TILDE_ORDERED_WEIGHTS)


def variation_check(
    fp: FieldPair,
    p: ModelParams,
    dphi: Field,
    dphibar: Field,
    backend: StarBackend,
    eps: float = 1.0e-5,
) -> tuple[complex, complex]:
    """First variation of the action: analytic EL contraction vs central
    finite difference.  Returns (analytic, numeric)."""
    analytic = integrate(
        star(el_residual_phi(fp, p, backend), dphi, p.theta, backend)
    ) + integrate(star(dphibar, el_residual_phibar(fp, p, backend), p.theta, backend))
    plus = FieldPair(fp.phi + eps * dphi, fp.phibar + eps * dphibar)
    minus = FieldPair(fp.phi - eps * dphi, fp.phibar - eps * dphibar)
    numeric = (action(plus, p, backend) - action(minus, p, backend)) / (2.0 * eps)
    return analytic, numeric


# ----------------------------------------------------------------------
# On-shell generators
# ----------------------------------------------------------------------

def _quadratic_potential(lat: Lattice, p: ModelParams) -> np.ndarray:
    """Diagonal of the quadratic operator: m^2 + (Om^2/2) |xt|^2."""
    pot = np.full(lat.shape, float(p.mass_sq))
    if p.omega != 0.0:
        thinv = p.theta.inverse_matrix
        for mu in range(lat.dim):
            xt = np.zeros(lat.shape)
            for nu in range(lat.dim):
                if thinv[mu, nu] != 0.0:
                    xt = xt + 2.0 * thinv[mu, nu] * lat.coordinate_mesh(nu)
            pot = pot + (p.omega**2 / 2.0) * xt**2
    return pot


def _dense_1d_kinetic(n: int, length: float) -> np.ndarray:
    lat1 = make_lattice(1, n, length)
    mult = -(lat1.derivative_multipliers[0] ** 2)  # +k^2
    eye = np.eye(n, dtype=np.complex128)
    K = np.fft.ifft(mult[:, None] * np.fft.fft(eye, axis=0), axis=0)
    return np.ascontiguousarray(K.real)


def quadratic_operator_matrix(lat: Lattice, p: ModelParams) -> np.ndarray:
    """Dense real-symmetric matrix of -laplacian + m^2 + (Om^2/2)|xt|^2."""
    if lat.dim != 2:
        raise SolverError("dense quadratic operator is built for D=2 only")
    K0 = _dense_1d_kinetic(lat.shape[0], lat.lengths[0])
    K1 = _dense_1d_kinetic(lat.shape[1], lat.lengths[1])
    n0, n1 = lat.shape
    H = np.kron(K0, np.eye(n1)) + np.kron(np.eye(n0), K1)
    H[np.diag_indices_from(H)] += _quadratic_potential(lat, p).reshape(-1)
    return 0.5 * (H + H.T)


def _apply_quadratic(lat: Lattice, p: ModelParams, pot: np.ndarray, v: np.ndarray) -> np.ndarray:
    field = v.reshape(lat.shape)
    mult = np.zeros(lat.shape, dtype=np.complex128)
    for axis in range(lat.dim):
        m = -(lat.derivative_multipliers[axis] ** 2)
        shape = [1] * lat.dim
        shape[axis] = lat.shape[axis]
        mult = mult + m.reshape(shape)
    out = lat.ifft(lat.fft(field) * mult).real + pot * field
    return out.reshape(-1)


def _reflection_parity(lat: Lattice, vec: np.ndarray) -> int:
    field = vec.reshape(lat.shape)
    refl = field
    for axis in range(lat.dim):
        idx = (-np.arange(lat.shape[axis])) % lat.shape[axis]
        refl = np.take(refl, idx, axis=axis)
    corr = np.vdot(vec, refl.reshape(-1)).real / max(np.vdot(vec, vec).real, 1e-300)
    if corr > 0.9:
        return +1
    if corr < -0.9:
        return -1
    return 0


def solve_linear_onshell(
    lat: Lattice,
    p: ModelParams,
    parity: str = "even",
    index: int = 0,
    num_modes: int = 16,
) -> tuple[float, FieldPair]:
    """Eigenpair of the quadratic (lambda=0) operator, selected by reflection
    parity sector and index within the sector.

    The returned field is L2-normalized and satisfies the equations of motion
    exactly once ``mass_sq`` is shifted by the eigenvalue (see
    :func:`onshell_fixture`).
    """
    if p.coupling != 0.0:
        raise SolverError("linear on-shell solve requires lambda = 0")
    if lat.dim != 2:
        raise SolverError("linear on-shell solve supports D=2 lattices")
    if max(lat.shape) > 64:
        raise SolverError("linear on-shell solve is guarded to N <= 64")
    if parity not in ("even", "odd"):
        raise SolverError("parity sector must be 'even' or 'odd'")

    if max(lat.shape) <= 32:
        H = quadratic_operator_matrix(lat, p)
        vals, vecs = np.linalg.eigh(H)
        vals, vecs = vals[: 4 * num_modes], vecs[:, : 4 * num_modes]
    else:
        pot = _quadratic_potential(lat, p)
        op = spla.LinearOperator(
            (lat.npoints, lat.npoints),
            matvec=lambda v: _apply_quadratic(lat, p, pot, v),
            dtype=np.float64,
        )
        vals, vecs = spla.eigsh(op, k=max(4 * num_modes, 8), which="SA", tol=1e-12)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]

    want = +1 if parity == "even" else -1
    found = 0
    for i in range(len(vals)):
        if _reflection_parity(lat, vecs[:, i]) == want:
            if found == index:
                v = vecs[:, i]
                field = Field(lat, v.reshape(lat.shape))
                field = field / l2_norm(field)
                return float(vals[i]), FieldPair.from_phi(field)
            found += 1
    raise SolverError(
        f"eigen sector exhausted: needed index {index} of parity {parity}"
    )


def onshell_fixture(
    lat: Lattice,
    p: ModelParams,
    parity: str = "even",
    index: int = 0,
) -> tuple[FieldPair, ModelParams]:
    """Exact on-shell pair for the mass-shifted parameters (lambda = 0)."""
    eig, pair = solve_linear_onshell(lat, p, parity, index)
    return pair, replace(p, mass_sq=p.mass_sq - eig)


def _pack(phi: np.ndarray, phb: np.ndarray) -> np.ndarray:
    return np.concatenate(
        [phi.real.ravel(), phi.imag.ravel(), phb.real.ravel(), phb.imag.ravel()]
    )


def _unpack(lat: Lattice, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = lat.npoints
    phi = (x[:n] + 1j * x[n : 2 * n]).reshape(lat.shape)
    phb = (x[2 * n : 3 * n] + 1j * x[3 * n :]).reshape(lat.shape)
    return phi, phb


def solve_onshell_newton(
    p: ModelParams,
    seed: FieldPair,
    backend: StarBackend,
    tol: float = 1.0e-10,
    max_iter: int = 40,
) -> FieldPair:
    """Newton-Krylov solve of the joint Euler-Lagrange system from ``seed``.

    Raises :class:`SolverError` on non-convergence; the seed is never
    modified (all operations are pure).
    """
    if tol < 1e-12:
        raise SolverError("tolerance below 1e-12 is not resolvable in float64")
    lat = seed.lattice

    def residual(x: np.ndarray) -> np.ndarray:
        phi, phb = _unpack(lat, x)
        pair = FieldPair(Field(lat, phi), Field(lat, phb))
        r_phi = el_residual_phibar(pair, p, backend)  # equation of motion for phi
        r_phb = el_residual_phi(pair, p, backend)
        return _pack(r_phi.data, r_phb.data)

    x0 = _pack(seed.phi.data, seed.phibar.data)
    try:
        with np.errstate(invalid="ignore"):
            sol = newton_krylov(
                residual, x0, f_tol=tol, maxiter=max_iter, method="lgmres", verbose=0
            )
    except NoConvergence as exc:
        raise SolverError(f"Newton-Krylov did not converge within {max_iter} iterations") from exc
    phi, phb = _unpack(lat, sol)
    return FieldPair(Field(lat, phi), Field(lat, phb))


def solve_onshell_x0profile(
    lat: Lattice,
    p: ModelParams,
    seed_amplitude: float = 0.6,
    tol: float = 1.0e-11,
) -> FieldPair:
    """On-shell configuration depending on x^0 only (Omega must be 0).

    Single-variable fields star-commute for any Theta, so the equations of
    motion reduce to the pointwise 1-D profile equation
    ``-u'' + m^2 u + (lam/12) u^3 = 0`` (real u), solved on the x^0 axis and
    broadcast across the remaining axes.
    """
    if p.omega != 0.0:
        raise SolverError("x0-only profiles require omega = 0")
    n0, L0 = lat.shape[0], lat.lengths[0]
    lat1 = make_lattice(1, n0, L0)
    x = lat1.axis_coordinates[0]

    def residual(u: np.ndarray) -> np.ndarray:
        f = Field(lat1, u.astype(np.complex128))
        r = -laplacian(f).data.real + p.mass_sq * u + (p.coupling / 12.0) * u**3
        return r

    seed = seed_amplitude * np.sin(2.0 * np.pi * x / L0)
    try:
        u = newton_krylov(residual, seed, f_tol=tol, maxiter=200, method="lgmres")
    except NoConvergence as exc:
        raise SolverError("x0-profile Newton solve did not converge") from exc
    if float(np.abs(u).max()) < 1e-6:
        raise SolverError("x0-profile solve collapsed to the trivial solution")
    data = np.broadcast_to(
        u.reshape((n0,) + (1,) * (lat.dim - 1)), lat.shape
    ).astype(np.complex128)
    return FieldPair.from_phi(Field(lat, data))
