"""starward: a numerical Moyal star-product engine plus a verification lab
for the noncommutative complex Grosse-Wulkenhaar scalar model."""

from .lattice import (
    Field,
    Lattice,
    make_lattice,
    integrate,
    l2_norm,
    spectral_derivative,
    coordinate_field,
    interior_mask,
    gaussian,
    boundary_decay,
    random_schwartz_field,
)
from .moyal import (
    ThetaStructure,
    SpectralTwisted,
    SeriesOrder,
    KernelQuadrature,
    star,
    star_commutator,
    star_anticommutator,
    tilde_coordinate,
    tilde_left,
    tilde_right,
    star_exponential,
)

__version__ = "0.1.0"
