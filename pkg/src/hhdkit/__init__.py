"""Mesh-free Helmholtz-Hodge-type decompositions of scattered vector fields.

Vector fields sampled at scattered nodes on bounded 2D/3D domains are split
into divergence-free and curl-free parts using matrix-valued RBF kernels
that separate analytically, with boundary conditions imposed on the fields
themselves through generalized interpolation.
"""

from .fields import (MissingSampleError, VectorField, annulus_leray_exact,
                     annulus_target, peaks, peaks_gradient, read_samples,
                     sampled_field, write_samples)
from .geometry import (DomainSpec, NodeFileError, NodeSet, emit_nodes,
                       estimate_mesh_norm, gen_domain_nodes, load_nodes,
                       spacing_for_count, standard_annulus,
                       standard_wavy_annulus)
from .harness import (ConvergenceReport, RunConfig, emit_outputs, fit_order,
                      rel_l2_error, run_divfree_annulus, run_full_hhd)
from .kernels import (RadialProfile, eval_curl_free_kernel,
                      eval_div_free_kernel, eval_full_kernel,
                      eval_scalar_gradient, matern5_profile)
from .solver import (AssembledSystem, FullHHD, Interpolant, SolverError,
                     assemble_curlfree, assemble_divfree, assemble_plain,
                     eval_curl_part, eval_div_part, eval_interpolant,
                     eval_potentials, fit_curlfree, fit_divfree, fit_plain,
                     full_hhd, solve)

__version__ = "0.1.0"
