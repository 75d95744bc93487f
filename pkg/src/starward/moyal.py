"""The Moyal star algebra on a periodic lattice.

Three independent evaluation routes for ``f * g`` (star product):

* ``SpectralTwisted`` — the production path: the momentum-space twisted
  convolution ``(f*g)^(k) = sum_q fhat(q) ghat(k-q) exp(-i/2 q.Theta.(k-q))``
  evaluated with physical wavenumbers.
* ``SeriesOrder(K)`` — the bidifferential series truncated at total order K,
  with 2/3-rule dealiasing per multiplication.
* ``KernelQuadrature(r)`` — direct quadrature of the two-point kernel double
  integral on the fundamental domain at resolution factor ``r``; the slow
  oracle, guarded to small lattices, never the production path.

The twisted-convolution phase sign is anchored to the series convention
(plane waves: ``e_p * e_q = exp(-i/2 p.Theta.q) e_{p+q}``); a self-calibration
test keeps the two backends locked together.

The two-point kernel used by the quadrature backend is the one consistent
with that convention::

    K(x, y; z) = exp(-2i (z-x).ThetaInv.(z-y)) / (pi^D det Theta)

Multiplication by the rescaled coordinate ``xt = 2 ThetaInv . x`` never goes
through a generic backend: the series for a linear symbol terminates, giving
the exact closed forms ``xt_mu * f = xt_mu f + i d_mu f`` and
``f * xt_mu = xt_mu f - i d_mu f`` (`tilde_left` / `tilde_right`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from itertools import product as _iproduct

import numpy as np
import scipy.fft as _fft

from .lattice import (
    Field,
    Lattice,
    LatticeSpecError,
    coordinate_field,
    dealias_mask,
    spectral_derivative,
    sup_norm,
)

__all__ = [
    "ThetaStructure",
    "SpectralTwisted",
    "SeriesOrder",
    "KernelQuadrature",
    "StarBackend",
    "StarBackendError",
    "DegenerateThetaError",
    "CostGuardError",
    "star",
    "star_commutator",
    "star_anticommutator",
    "tilde_coordinate",
    "tilde_left",
    "tilde_right",
    "coordinate_star_left",
    "coordinate_star_right",
    "star_exponential",
    "MAX_SERIES_ORDER",
]

MAX_SERIES_ORDER = 16  # factorial overflow guard
_KERNEL_MAX_POINTS_PER_AXIS = 32
_KERNEL_WORK_LIMIT = 3.2e8  # refined (2N'-1)^D * N'^D product sum bound


class StarBackendError(ValueError):
    """Invalid backend request."""


class DegenerateThetaError(StarBackendError):
    """Operation requires an invertible Theta but a block is degenerate."""


class CostGuardError(RuntimeError):
    """Resource guard tripped (oracle backend on too large a problem)."""


@dataclass(frozen=True)
class ThetaStructure:
    """Block-canonical noncommutativity matrix.

    ``block_thetas[b]`` couples the coordinate pair (2b, 2b+1); an odd final
    axis stays commutative.  ``theta = 0`` blocks are allowed (degenerate,
    commutative pair) but exclude everything built on ThetaInv.
    """

    dim: int
    block_thetas: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise StarBackendError("dim must be >= 1")
        if len(self.block_thetas) != self.dim // 2:
            raise StarBackendError(
                f"expected {self.dim // 2} block thetas for dim {self.dim}, "
                f"got {len(self.block_thetas)}"
            )
        for th in self.block_thetas:
            if th < 0:
                raise StarBackendError("block theta values must be >= 0")

    @classmethod
    def canonical(cls, dim: int, theta: float = 1.0) -> "ThetaStructure":
        return cls(dim, tuple([float(theta)] * (dim // 2)))

    @property
    def is_invertible(self) -> bool:
        return self.dim % 2 == 0 and all(th > 0 for th in self.block_thetas)

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim))
        for b, th in enumerate(self.block_thetas):
            m[2 * b, 2 * b + 1] = th
            m[2 * b + 1, 2 * b] = -th
        m.setflags(write=False)
        return m

    @cached_property
    def inverse_matrix(self) -> np.ndarray:
        if not self.is_invertible:
            raise DegenerateThetaError("Theta is degenerate; no inverse exists")
        m = np.zeros((self.dim, self.dim))
        for b, th in enumerate(self.block_thetas):
            m[2 * b, 2 * b + 1] = -1.0 / th
            m[2 * b + 1, 2 * b] = 1.0 / th
        m.setflags(write=False)
        return m

    @property
    def det(self) -> float:
        if self.dim % 2 == 1:
            return 0.0
        return float(np.prod([th**2 for th in self.block_thetas]))

    def blocks(self) -> list[tuple[int, int, float]]:
        """Active (noncommutative) blocks as (axis, axis', theta)."""
        return [
            (2 * b, 2 * b + 1, th)
            for b, th in enumerate(self.block_thetas)
            if th != 0.0
        ]


@dataclass(frozen=True)
class SpectralTwisted:
    """Momentum-space twisted convolution backend (production path)."""


@dataclass(frozen=True)
class SeriesOrder:
    """Bidifferential series truncated at total order ``order``."""

    order: int = 4

    def __post_init__(self) -> None:
        if not (1 <= self.order <= MAX_SERIES_ORDER):
            raise StarBackendError(
                f"series order must lie in [1, {MAX_SERIES_ORDER}], got {self.order}"
            )


@dataclass(frozen=True)
class KernelQuadrature:
    """Two-point-kernel quadrature oracle at resolution factor ``resolution``."""

    resolution: int = 1

    def __post_init__(self) -> None:
        if self.resolution not in (1, 2, 4):
            raise StarBackendError("kernel quadrature resolution must be 1, 2 or 4")


StarBackend = SpectralTwisted | SeriesOrder | KernelQuadrature


def _check_pair(f: Field, g: Field, theta: ThetaStructure) -> Lattice:
    if f.lattice != g.lattice:
        raise LatticeSpecError("star operands live on different lattices")
    if theta.dim != f.lattice.dim:
        raise StarBackendError(
            f"Theta dim {theta.dim} does not match lattice dim {f.lattice.dim}"
        )
    return f.lattice


def star(f: Field, g: Field, theta: ThetaStructure, backend: StarBackend) -> Field:
    """Star product of two fields through the selected backend."""
    lat = _check_pair(f, g, theta)
    if isinstance(backend, SpectralTwisted):
        return _star_twisted(lat, f, g, theta)
    if isinstance(backend, SeriesOrder):
        return _star_series(lat, f, g, theta, backend.order)
    if isinstance(backend, KernelQuadrature):
        return _star_kernel(lat, f, g, theta, backend.resolution)
    raise StarBackendError(f"unknown backend {backend!r}")


def star_commutator(f: Field, g: Field, theta: ThetaStructure, backend: StarBackend) -> Field:
    return star(f, g, theta, backend) - star(g, f, theta, backend)


def star_anticommutator(f: Field, g: Field, theta: ThetaStructure, backend: StarBackend) -> Field:
    return star(f, g, theta, backend) + star(g, f, theta, backend)


# ----------------------------------------------------------------------
# SpectralTwisted
# ----------------------------------------------------------------------

def _star_twisted(lat: Lattice, f: Field, g: Field, theta: ThetaStructure) -> Field:
    """Exact discrete twisted convolution.

    One output index per active block (the first axis of the pair) is looped;
    the remaining axes are handled as batched circular convolutions via FFT.
    Phases carry physical wavenumber values, so the centered-coordinate
    convention cancels identically.
    """
    F = f.spectrum
    G = g.spectrum
    blocks = theta.blocks()
    if not blocks:
        return Field(lat, f.data * g.data)

    k = lat.axis_wavenumbers
    alpha_axes = [a for (a, _, _) in blocks]
    other_axes = [ax for ax in range(lat.dim) if ax not in alpha_axes]

    # P_b[q_alpha, k_beta] applied in the final contraction
    P = [np.exp(-0.5j * th * np.outer(k[a], k[b2])) for (a, b2, th) in blocks]

    Ghat = _fft.fftn(G, axes=other_axes) if other_axes else G

    H = np.empty(lat.shape, dtype=np.complex128)
    alpha_shape = tuple(lat.shape[a] for a in alpha_axes)
    out_slot = [slice(None)] * lat.dim

    for idx in np.ndindex(*alpha_shape):
        T = F
        for bi, (a, b2, th) in enumerate(blocks):
            ka = k[a][idx[bi]]
            vec = np.exp(0.5j * th * k[b2] * ka)
            shape = [1] * lat.dim
            shape[b2] = lat.shape[b2]
            T = T * vec.reshape(shape)
        That = _fft.fftn(T, axes=other_axes) if other_axes else T

        Gg = Ghat
        for bi, a in enumerate(alpha_axes):
            n = lat.shape[a]
            Gg = np.take(Gg, (idx[bi] - np.arange(n)) % n, axis=a)
        C = _fft.ifftn(That * Gg, axes=other_axes) if other_axes else That * Gg

        # contract each q_alpha axis against its phase matrix
        letters = [chr(ord("a") + ax) for ax in range(lat.dim)]
        operands = []
        subs = []
        for bi, (a, b2, th) in enumerate(blocks):
            operands.append(P[bi])
            subs.append(letters[a] + letters[b2])
        out_letters = "".join(letters[ax] for ax in range(lat.dim) if ax not in alpha_axes)
        spec = ",".join(subs + ["".join(letters)]) + "->" + out_letters
        block_slice = np.einsum(spec, *operands, C)

        for bi, a in enumerate(alpha_axes):
            out_slot[a] = idx[bi]
        H[tuple(out_slot)] = block_slice

    return Field(lat, _fft.ifftn(H) / lat.npoints)


# ----------------------------------------------------------------------
# SeriesOrder
# ----------------------------------------------------------------------

def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _star_series(lat: Lattice, f: Field, g: Field, theta: ThetaStructure, order: int) -> Field:
    keep = dealias_mask(lat)
    Ft = f.spectrum * keep
    Gt = g.spectrum * keep
    blocks = theta.blocks()

    memo_f: dict[tuple[int, ...], np.ndarray] = {}
    memo_g: dict[tuple[int, ...], np.ndarray] = {}

    def deriv(spec: np.ndarray, memo: dict, alpha: tuple[int, ...]) -> np.ndarray:
        if alpha not in memo:
            work = spec
            for ax, p in enumerate(alpha):
                if p:
                    mult = lat.derivative_multipliers[ax] ** p
                    shape = [1] * lat.dim
                    shape[ax] = lat.shape[ax]
                    work = work * mult.reshape(shape)
            memo[alpha] = lat.ifft(work)
        return memo[alpha]

    zero = tuple([0] * lat.dim)
    acc = deriv(Ft, memo_f, zero) * deriv(Gt, memo_g, zero)

    for n in range(1, order + 1):
        base = (0.5j) ** n
        for comp in _compositions(n, max(len(blocks), 1)):
            if not blocks:
                break
            coeff = base
            for (a, b2, th), nb in zip(blocks, comp):
                coeff *= th**nb / math.factorial(nb)
            for js in _iproduct(*[range(nb + 1) for nb in comp]):
                alpha_f = [0] * lat.dim
                alpha_g = [0] * lat.dim
                weight = coeff
                for (a, b2, th), nb, j in zip(blocks, comp, js):
                    weight *= math.comb(nb, j) * (-1) ** (nb - j)
                    alpha_f[a] += j
                    alpha_f[b2] += nb - j
                    alpha_g[b2] += j
                    alpha_g[a] += nb - j
                acc = acc + weight * deriv(Ft, memo_f, tuple(alpha_f)) * deriv(
                    Gt, memo_g, tuple(alpha_g)
                )

    return Field(lat, lat.ifft(lat.fft(acc) * keep))


# ----------------------------------------------------------------------
# KernelQuadrature
# ----------------------------------------------------------------------

def _upsample_axis_matrices(n: int, length: float, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Direct-DFT analysis/synthesis matrices for one axis (no FFT reuse)."""
    h = length / n
    x = -length / 2.0 + h * np.arange(n)
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    analysis = np.exp(-1j * np.outer(k, x)) / n  # coeffs from coarse samples
    hp = length / (n * r)
    xp = -length / 2.0 + hp * np.arange(n * r)
    synthesis = np.exp(1j * np.outer(xp, k))
    return analysis, synthesis


def _trig_upsample(values: np.ndarray, lat: Lattice, r: int) -> np.ndarray:
    if r == 1:
        return values.astype(np.complex128)
    out = values.astype(np.complex128)
    for axis in range(lat.dim):
        analysis, synthesis = _upsample_axis_matrices(
            lat.shape[axis], lat.lengths[axis], r
        )
        out = np.moveaxis(
            np.tensordot(synthesis @ analysis, out, axes=([1], [axis])), 0, axis
        )
    return out


def _star_kernel(lat: Lattice, f: Field, g: Field, theta: ThetaStructure, r: int) -> Field:
    if not theta.is_invertible:
        raise DegenerateThetaError(
            "kernel quadrature needs det Theta != 0 and an inverse"
        )
    if any(n > _KERNEL_MAX_POINTS_PER_AXIS for n in lat.shape):
        raise CostGuardError(
            f"kernel quadrature is guarded to <= {_KERNEL_MAX_POINTS_PER_AXIS} points per axis"
        )
    D = lat.dim
    refined = tuple(n * r for n in lat.shape)
    n_table = tuple(2 * n - 1 for n in refined)
    work = float(np.prod(n_table)) * float(np.prod(refined))
    if work > _KERNEL_WORK_LIMIT:
        raise CostGuardError(
            f"kernel quadrature work estimate {work:.2e} exceeds the resource guard"
        )

    thinv = theta.inverse_matrix
    hp = np.array([length / n for length, n in zip(lat.lengths, refined)])
    cellp = float(np.prod(hp))

    fr = _trig_upsample(f.data, lat, r).reshape(-1)
    gr = _trig_upsample(g.data, lat, r).reshape(-1)

    axes_xp = [
        -lat.lengths[ax] / 2.0 + hp[ax] * np.arange(refined[ax]) for ax in range(D)
    ]
    Xp = np.stack(
        [m.reshape(-1) for m in np.meshgrid(*axes_xp, indexing="ij")], axis=1
    )  # (Ny, D) refined grid

    # v-difference table values per axis: (t - (N'-1)) * h'
    axes_v = [(np.arange(2 * refined[ax] - 1) - (refined[ax] - 1)) * hp[ax] for ax in range(D)]
    V = np.stack(
        [m.reshape(-1) for m in np.meshgrid(*axes_v, indexing="ij")], axis=1
    )  # (Nv, D)

    # S(v) = h'^D sum_y g(y) exp(2i v.ThetaInv.y)
    P = 2.0 * (V @ thinv)  # (Nv, D)
    S = np.empty(P.shape[0], dtype=np.complex128)
    chunk = max(1, int(2.0e7 // max(Xp.shape[0], 1)))
    for start in range(0, P.shape[0], chunk):
        rows = P[start : start + chunk]
        S[start : start + chunk] = np.exp(1j * (rows @ Xp.T)) @ gr
    S *= cellp

    # out(z) = c h'^D sum_x f(x) exp(2i x.ThetaInv.z) S(z - x)
    axes_z = lat.axis_coordinates
    Z = np.stack(
        [m.reshape(-1) for m in np.meshgrid(*axes_z, indexing="ij")], axis=1
    )  # (Nz, D) coarse grid
    jz = [np.arange(n) for n in lat.shape]
    jx = [np.arange(n) for n in refined]

    c = 1.0 / (np.pi**D * theta.det)
    out = np.empty(Z.shape[0], dtype=np.complex128)
    zchunk = max(1, int(1.6e7 // max(Xp.shape[0], 1)))
    # per-axis coarse/refined index grids for the table lookup
    JZ = np.stack([m.reshape(-1) for m in np.meshgrid(*jz, indexing="ij")], axis=1)
    JX = np.stack([m.reshape(-1) for m in np.meshgrid(*jx, indexing="ij")], axis=1)
    for start in range(0, Z.shape[0], zchunk):
        zrows = Z[start : start + zchunk]
        jzrows = JZ[start : start + zchunk]
        t_axes = [
            jzrows[:, ax][:, None] * r - JX[:, ax][None, :] + (refined[ax] - 1)
            for ax in range(D)
        ]
        flat_idx = np.ravel_multi_index(t_axes, n_table)
        Sg = S[flat_idx]  # (chunk, Ny)
        phase = np.exp(1j * (2.0 * (Xp @ thinv) @ zrows.T))  # (Ny, chunk)
        out[start : start + zchunk] = c * cellp * np.einsum(
            "y,yc,cy->c", fr, phase, Sg
        )
    return Field(lat, out.reshape(lat.shape))


# ----------------------------------------------------------------------
# Rescaled-coordinate closed forms
# ----------------------------------------------------------------------

def tilde_coordinate(lat: Lattice, theta: ThetaStructure, mu: int) -> Field:
    """The rescaled coordinate ``xt_mu = 2 (ThetaInv)_{mu nu} x^nu`` sampled on
    the fundamental domain (interior-mask discipline applies)."""
    lat._check_axis(mu)
    thinv = theta.inverse_matrix
    data = np.zeros(lat.shape, dtype=np.complex128)
    for nu in range(lat.dim):
        if thinv[mu, nu] != 0.0:
            data = data + 2.0 * thinv[mu, nu] * lat.coordinate_mesh(nu)
    return Field(lat, data)


def _tilde_product(
    f: Field,
    theta: ThetaStructure,
    mu: int,
    sign: int,
    scale: float,
    shift: float,
) -> Field:
    lat = f.lattice
    lat._check_axis(mu)
    xt = tilde_coordinate(lat, theta, mu)
    out = scale * (xt * f + sign * 1j * spectral_derivative(f, mu))
    if shift:
        out = out + shift * f
    return out


def tilde_left(
    f: Field, theta: ThetaStructure, mu: int, scale: float = 1.0, shift: float = 0.0
) -> Field:
    """Exact ``(scale * xt_mu + shift) * f`` star product from the left:
    ``scale (xt_mu f + i d_mu f) + shift f`` (series terminates; no truncation)."""
    return _tilde_product(f, theta, mu, +1, scale, shift)


def tilde_right(
    f: Field, theta: ThetaStructure, mu: int, scale: float = 1.0, shift: float = 0.0
) -> Field:
    """Exact ``f * (scale * xt_mu + shift)``:
    ``scale (xt_mu f - i d_mu f) + shift f``."""
    return _tilde_product(f, theta, mu, -1, scale, shift)


def coordinate_star_left(f: Field, theta: ThetaStructure, mu: int) -> Field:
    """Exact ``x^mu * f = x^mu f + (i/2) Theta^{mu sigma} d_sigma f``."""
    lat = f.lattice
    lat._check_axis(mu)
    out = coordinate_field(lat, mu) * f
    m = theta.matrix
    for sigma in range(lat.dim):
        if m[mu, sigma] != 0.0:
            out = out + 0.5j * m[mu, sigma] * spectral_derivative(f, sigma)
    return out


def coordinate_star_right(f: Field, theta: ThetaStructure, mu: int) -> Field:
    """Exact ``f * x^mu = x^mu f - (i/2) Theta^{mu sigma} d_sigma f``."""
    lat = f.lattice
    lat._check_axis(mu)
    out = coordinate_field(lat, mu) * f
    m = theta.matrix
    for sigma in range(lat.dim):
        if m[mu, sigma] != 0.0:
            out = out - 0.5j * m[mu, sigma] * spectral_derivative(f, sigma)
    return out


# ----------------------------------------------------------------------
# Star exponential
# ----------------------------------------------------------------------

def star_exponential(
    alpha: Field,
    order: int,
    theta: ThetaStructure,
    backend: StarBackend,
) -> tuple[Field, float]:
    """Truncated unitary star exponential ``sum_{n<=K} (i alpha)^{*n} / n!``.

    Returns the field together with the reported truncation-tail estimate
    ``sup|alpha|^(K+1) / (K+1)!``.  ``alpha`` must be real-valued.
    """
    if not (1 <= order <= MAX_SERIES_ORDER):
        raise StarBackendError(
            f"exponential order must lie in [1, {MAX_SERIES_ORDER}], got {order}"
        )
    if np.abs(alpha.data.imag).max() > 1e-12 * max(sup_norm(alpha), 1.0):
        raise StarBackendError("star_exponential expects a real-valued generator")
    lat = alpha.lattice
    unit = Field(lat, np.ones(lat.shape, dtype=np.complex128))
    acc = unit
    power = unit
    for n in range(1, order + 1):
        power = star(power, alpha, theta, backend)
        acc = acc + ((1j) ** n / math.factorial(n)) * power
    bound = sup_norm(alpha) ** (order + 1) / math.factorial(order + 1)
    return acc, float(bound)
