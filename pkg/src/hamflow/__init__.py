"""Spectral flow and homoclinic bifurcation invariants on torus parameter spaces.

Numerics for paths of selfadjoint operators: two spectral flow engines
(eigenvalue counting and crossing forms), stable/unstable subspace shooting
for linear Hamiltonian systems, loop invariants on T^k, and a degeneracy
scanner with a box-counting dimension estimate.
"""

__version__ = "0.1.0"

from .errors import (BasePointError, CertificateUnavailable,
                     ClusteredCrossingError, ConfigError, ConvergenceError,
                     DegenerateCrossingError, EndpointSingularError,
                     HamflowError, HyperbolicityError, InconsistentKernelError,
                     NumericalError, PartitionError, ValidationError)
from .families import (CoordinateLoop, HamiltonianFamily, PiecewiseTorusPath,
                       TorusPoint, compact_control_family, check_hyperbolic,
                       example_family, family_from_config, s_rotation,
                       symplectic_j, wrap_angles)
from .flow import (FlowRecord, Frame, SampledSolution, StepControl,
                   TrajectoryFrame, propagate, propagate_recorded, residual)
from .linalg import (Spectrum, complexify_eig_check, intersection, signature,
                     stable_projector, sym_eig, unstable_projector)
from .spectral_flow import (Crossing, HomoclinicPath, MatrixPath,
                            PartitionControl, SflResult, concat_paths,
                            concat_reverse_check, crossing_form,
                            find_crossings, reverse_path, sfl_crossing,
                            sfl_eigcount)
from .subspaces import (BoundaryData, KernelBasis, ShootingOptions,
                        boundary_data, kernel_solutions, stable_space,
                        unstable_space)
from .torus_scan import (Certificate, ChernVector, ScanOptions, ScanReport,
                         certify, chern_vector, degenerate_instants,
                         gap_profile, scan_degeneracy)
