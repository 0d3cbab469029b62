"""Spectral toolkit for the fractional Schrodinger operator on a honeycomb
lattice: Floquet-Bloch bands, Dirac-point data, and two-scale wave-packet
dynamics validated against the effective envelope model."""

from .lattice import (LatticeBasis, PlaneWaveBasis, k_path,
                      make_honeycomb_basis, rotation_index_map)
from .potential import (FourierPotential, Modulation, builtin_V, builtin_W,
                        check_honeycomb, zero_potential)
from .bloch import (BlochMatrix, BlochSolution, apply_p_sigma,
                    assemble_bloch_matrix, band_sweep, commutator_check,
                    resolvent_apply, solve_bands)
from .dirac import (DiracPointData, analyze_dirac_point, cone_fit,
                    conjugate_partner, find_degenerate_pair, gap_opening,
                    gauge_fix, mass_coefficient, cubic_coefficients,
                    symmetry_classify, verify_eigenvector_expansion)

__version__ = "0.1.0"
