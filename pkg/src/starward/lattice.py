"""Periodic sampling grids and spectral calculus.

Everything downstream (star products, the action, the currents) lives on a
flat D-torus sampled uniformly per axis.  Schwartz-class fields on R^D are
modelled by fields whose magnitude at the box boundary is negligible
(`boundary_decay` <= 1e-6 for generated fields); the torus then makes every
spectral operation exact for band-limited data.

Transform convention (fixed here, imported everywhere else):

* samples live on centered coordinates  x_mu(j) = -L_mu/2 + j * h_mu,
  row-major with axis 0 slowest;
* the forward transform is the plain unnormalized FFT (kernel
  ``exp(-i k.x)`` in index space), the inverse carries ``1/prod(N)``;
* physical wavenumbers are ``k_m = 2*pi*fftfreq(N, d=h)``.

The phase offset between index-space and the centered coordinates is a
per-mode sign ``(-1)**m``; it cancels identically in every bilinear
operation used here (derivatives, twisted convolutions), so raw FFT
coefficients are used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.fft as _fft

__all__ = [
    "Lattice",
    "Field",
    "LatticeSpecError",
    "BoundaryDecayError",
    "DECAY_LIMIT",
    "make_lattice",
    "integrate",
    "l2_norm",
    "sup_norm",
    "spectral_derivative",
    "laplacian",
    "inverse_laplacian",
    "coordinate_field",
    "interior_mask",
    "masked_l2_norm",
    "gaussian",
    "boundary_decay",
    "random_schwartz_field",
    "plane_wave",
    "dealias_mask",
]

# Generated test fields must decay to this fraction of their peak at the box
# boundary for the torus to stand in for R^D.
DECAY_LIMIT = 1.0e-6


class LatticeSpecError(ValueError):
    """Invalid lattice construction parameters."""


class BoundaryDecayError(ValueError):
    """A generated field does not decay at the box boundary."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Lattice:
    """Uniform periodic grid on ``prod_mu [-L_mu/2, L_mu/2)``.

    Attributes
    ----------
    shape : tuple of int
        Points per axis, each a power of two >= 8.
    lengths : tuple of float
        Box length per axis.
    """

    shape: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.shape) != len(self.lengths) or not self.shape:
            raise LatticeSpecError("shape and lengths must be non-empty and equal length")
        for n in self.shape:
            if not _is_power_of_two(int(n)) or n < 8:
                raise LatticeSpecError(f"points per axis must be a power of two >= 8, got {n}")
        for length in self.lengths:
            if not (length > 0.0):
                raise LatticeSpecError(f"box length must be positive, got {length}")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @cached_property
    def spacings(self) -> tuple[float, ...]:
        return tuple(length / n for n, length in zip(self.shape, self.lengths))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def axis_coordinates(self) -> tuple[np.ndarray, ...]:
        """1-D coordinate values per axis on the fundamental domain."""
        out = []
        for n, length, h in zip(self.shape, self.lengths, self.spacings):
            out.append(-length / 2.0 + h * np.arange(n))
        return tuple(out)

    @cached_property
    def axis_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Physical wavenumbers ``2*pi*fftfreq`` per axis."""
        return tuple(
            2.0 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(self.shape, self.spacings)
        )

    @cached_property
    def derivative_multipliers(self) -> tuple[np.ndarray, ...]:
        """Spectral multiplier ``i*k`` per axis with the Nyquist mode zeroed."""
        out = []
        for n, k in zip(self.shape, self.axis_wavenumbers):
            mult = 1j * k.astype(complex)
            mult[n // 2] = 0.0  # unpaired Nyquist mode carries no derivative
            out.append(mult)
        return tuple(out)

    def coordinate_mesh(self, axis: int) -> np.ndarray:
        """Coordinate values of one axis broadcast over the full grid."""
        self._check_axis(axis)
        c = self.axis_coordinates[axis]
        newshape = [1] * self.dim
        newshape[axis] = self.shape[axis]
        return np.broadcast_to(c.reshape(newshape), self.shape)

    def _check_axis(self, axis: int) -> None:
        if not (0 <= axis < self.dim):
            raise LatticeSpecError(f"axis {axis} out of range for dim {self.dim}")

    def fft(self, values: np.ndarray) -> np.ndarray:
        return _fft.fftn(values)

    def ifft(self, values: np.ndarray) -> np.ndarray:
        return _fft.ifftn(values)


@dataclass(frozen=True)
class Field:
    """A complex scalar sampled on a :class:`Lattice`.

    Samples are immutable after construction and always finite; operations
    return new fields.
    """

    lattice: Lattice
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.complex128, copy=True)
        if arr.shape != self.lattice.shape:
            raise LatticeSpecError(
                f"sample shape {arr.shape} does not match lattice shape {self.lattice.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("field samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    # -- algebra ---------------------------------------------------------
    def _wrap(self, values: np.ndarray) -> "Field":
        return Field(self.lattice, values)

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.lattice != self.lattice:
                raise LatticeSpecError("fields live on different lattices")
            return other.data
        return np.asarray(other, dtype=np.complex128)

    def __add__(self, other) -> "Field":
        return self._wrap(self.data + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return self._wrap(self.data - self._coerce(other))

    def __rsub__(self, other) -> "Field":
        return self._wrap(self._coerce(other) - self.data)

    def __mul__(self, other) -> "Field":
        return self._wrap(self.data * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Field":
        return self._wrap(self.data / other)

    def __neg__(self) -> "Field":
        return self._wrap(-self.data)

    def conj(self) -> "Field":
        return self._wrap(np.conj(self.data))

    @property
    def real(self) -> "Field":
        return self._wrap(self.data.real.astype(np.complex128))

    @property
    def imag(self) -> "Field":
        return self._wrap(self.data.imag.astype(np.complex128))

    def is_zero(self) -> bool:
        return not np.any(self.data)

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Cached forward transform of the samples (read-only)."""
        out = self.lattice.fft(self.data)
        out.setflags(write=False)
        return out


def make_lattice(
    dim: int,
    points: int | Sequence[int],
    length: float | Sequence[float],
) -> Lattice:
    """Build a ``dim``-dimensional periodic lattice.

    ``points`` and ``length`` may be scalars (applied to every axis) or
    per-axis sequences.
    """
    if dim < 1:
        raise LatticeSpecError("dim must be >= 1")
    shape = tuple([int(points)] * dim) if np.isscalar(points) else tuple(int(n) for n in points)
    lengths = (
        tuple([float(length)] * dim)
        if np.isscalar(length)
        else tuple(float(x) for x in length)
    )
    if len(shape) != dim or len(lengths) != dim:
        raise LatticeSpecError("per-axis parameters must match dim")
    return Lattice(shape, lengths)


def integrate(f: Field) -> complex:
    """Volume integral: cell volume times the sample sum (exact on the torus
    for band-limited integrands)."""
    return complex(f.lattice.cell_volume * f.data.sum())


def l2_norm(f: Field) -> float:
    """Continuum-normalized L2 norm ``sqrt(int |f|^2)``."""
    return float(np.sqrt(f.lattice.cell_volume * np.vdot(f.data, f.data).real))


def sup_norm(f: Field) -> float:
    return float(np.abs(f.data).max()) if f.data.size else 0.0


def spectral_derivative(f: Field, axis: int) -> Field:
    """Exact derivative of the band-limited interpolant along ``axis``."""
    lat = f.lattice
    lat._check_axis(axis)
    mult = lat.derivative_multipliers[axis]
    newshape = [1] * lat.dim
    newshape[axis] = lat.shape[axis]
    return Field(lat, lat.ifft(f.spectrum * mult.reshape(newshape)))


def laplacian(f: Field) -> Field:
    lat = f.lattice
    mult = np.zeros(lat.shape, dtype=np.complex128)
    for axis in range(lat.dim):
        m = lat.derivative_multipliers[axis] ** 2
        newshape = [1] * lat.dim
        newshape[axis] = lat.shape[axis]
        mult = mult + m.reshape(newshape)
    return Field(lat, lat.ifft(f.spectrum * mult))


def inverse_laplacian(f: Field) -> Field:
    """Solve ``laplacian(u) = f`` with the mean (zero mode) of ``u`` set to 0.

    The zero mode of ``f`` is discarded; callers that need solvability should
    check it vanishes.
    """
    lat = f.lattice
    mult = np.zeros(lat.shape, dtype=np.complex128)
    for axis in range(lat.dim):
        m = lat.derivative_multipliers[axis] ** 2
        newshape = [1] * lat.dim
        newshape[axis] = lat.shape[axis]
        mult = mult + m.reshape(newshape)
    spec = f.spectrum.copy()
    flat = mult.reshape(-1)
    out = np.zeros_like(spec.reshape(-1))
    nonzero = flat != 0
    out[nonzero] = spec.reshape(-1)[nonzero] / flat[nonzero]
    return Field(lat, lat.ifft(out.reshape(lat.shape)))


def coordinate_field(lat: Lattice, axis: int) -> Field:
    """Coordinate ``x^axis`` sampled on the fundamental domain.

    The samples are a sawtooth on the torus (not a smooth periodic
    function): identities involving bare coordinates are only meaningful
    pointwise under :func:`interior_mask`, and spectral operations applied
    directly to this field carry Gibbs artefacts.
    """
    lat._check_axis(axis)
    return Field(lat, lat.coordinate_mesh(axis).astype(np.complex128))


def interior_mask(lat: Lattice, margin_fraction: float) -> Field:
    """0/1 weight selecting points at least ``margin_fraction*L`` from every
    boundary face (half-open on the positive side, like the domain)."""
    if not (0.0 < margin_fraction < 0.5):
        raise LatticeSpecError("margin_fraction must lie strictly between 0 and 0.5")
    mask = np.ones(lat.shape, dtype=np.complex128)
    for axis in range(lat.dim):
        length = lat.lengths[axis]
        x = lat.coordinate_mesh(axis)
        inside = (x >= -length / 2 + margin_fraction * length) & (
            x < length / 2 - margin_fraction * length
        )
        mask = mask * inside
    return Field(lat, mask)


def masked_l2_norm(f: Field, mask: Field) -> float:
    return l2_norm(f * mask)


def boundary_decay(f: Field) -> float:
    """Max |f| over the outermost two sample layers per axis side, divided by
    the global max |f|.  Zero field returns 0 by convention."""
    mags = np.abs(f.data)
    peak = mags.max()
    if peak == 0.0:
        return 0.0
    shell = np.zeros(f.lattice.shape, dtype=bool)
    for axis in range(f.lattice.dim):
        idx = [slice(None)] * f.lattice.dim
        idx[axis] = np.array([0, 1, -2, -1])
        shell[tuple(idx)] = True
    return float(mags[shell].max() / peak)


def gaussian(
    lat: Lattice,
    center: Sequence[float] | float = 0.0,
    sigma: float = 1.0,
    amplitude: complex = 1.0,
) -> Field:
    """Sample ``amplitude * exp(-|x-center|^2 / (2 sigma^2))``.

    Raises :class:`BoundaryDecayError` if the result fails the boundary
    decay gate (sigma too large or center too close to the boundary).
    """
    if sigma <= 0:
        raise LatticeSpecError("sigma must be positive")
    c = np.broadcast_to(np.atleast_1d(np.asarray(center, dtype=float)), (lat.dim,))
    for axis in range(lat.dim):
        half = lat.lengths[axis] / 2
        if not (-half <= c[axis] < half):
            raise LatticeSpecError(f"center component {c[axis]} outside the fundamental domain")
    r2 = np.zeros(lat.shape)
    for axis in range(lat.dim):
        r2 = r2 + (lat.coordinate_mesh(axis) - c[axis]) ** 2
    field = Field(lat, amplitude * np.exp(-r2 / (2.0 * sigma**2)))
    decay = boundary_decay(field)
    if decay > DECAY_LIMIT:
        raise BoundaryDecayError(
            f"gaussian boundary decay {decay:.3e} exceeds the {DECAY_LIMIT:.0e} gate"
        )
    return field


def plane_wave(lat: Lattice, mode: Sequence[int]) -> Field:
    """Lattice mode ``exp(i k.x)`` for integer mode numbers (one per axis)."""
    if len(mode) != lat.dim:
        raise LatticeSpecError("mode must give one integer per axis")
    phase = np.zeros(lat.shape)
    for axis, m in enumerate(mode):
        k = 2.0 * np.pi * m / lat.lengths[axis]
        phase = phase + k * lat.coordinate_mesh(axis)
    return Field(lat, np.exp(1j * phase))


def dealias_mask(lat: Lattice) -> np.ndarray:
    """Boolean spectral mask keeping modes ``|m| <= N//3`` per axis (2/3 rule)."""
    keep = np.ones(lat.shape, dtype=bool)
    for axis, n in enumerate(lat.shape):
        m = np.fft.fftfreq(n, d=1.0 / n)  # integer mode numbers
        newshape = [1] * lat.dim
        newshape[axis] = n
        keep = keep & (np.abs(m.reshape(newshape)) <= n // 3)
    return keep


def random_schwartz_field(
    lat: Lattice,
    rng: np.random.Generator,
    max_mode: int | None = None,
    window_sigma: float | None = None,
    amplitude: float = 1.0,
) -> Field:
    """Seeded random band-limited field under a Gaussian decay window.

    A random low-mode spectrum (``|m| <= max_mode`` per axis) is sampled,
    transformed to position space and multiplied by a centered Gaussian
    window so the result passes the boundary-decay gate.
    """
    if max_mode is None:
        max_mode = min(lat.shape) // 8
    if window_sigma is None:
        window_sigma = min(lat.lengths) / 12.0
    spec = np.zeros(lat.shape, dtype=np.complex128)
    grids = np.meshgrid(
        *[np.fft.fftfreq(n, d=1.0 / n) for n in lat.shape], indexing="ij"
    )
    keep = np.ones(lat.shape, dtype=bool)
    for g in grids:
        keep &= np.abs(g) <= max_mode
    nkeep = int(keep.sum())
    spec[keep] = rng.standard_normal(nkeep) + 1j * rng.standard_normal(nkeep)
    values = lat.ifft(spec) * lat.npoints / max(nkeep, 1)
    r2 = np.zeros(lat.shape)
    for axis in range(lat.dim):
        r2 = r2 + lat.coordinate_mesh(axis) ** 2
    window = np.exp(-r2 / (2.0 * window_sigma**2))
    values = values * window
    peak = np.abs(values).max()
    if peak > 0:
        values = values * (amplitude / peak)
    return Field(lat, values)
