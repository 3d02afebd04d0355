"""Monte-Carlo laboratory for isotropic convex bodies.

Bodies and their oracles live in :mod:`slicelab.bodies`, samplers in
:mod:`slicelab.sampling`; the functionals, constructions and audit suites
build on those two.
"""

from .bodies import (AffineImage, AffineMap, Body, CrossPolytope, Cube, EuclideanBall, HPolytope, LpBall,
                     MinkowskiSum, OracleBody, OracleUnavailable, Simplex, apply_affine, body_from_config,
                     estimate_volume, gauge, membership, support, volume_normalize)
from .centroid import (ZqEvaluator, inclusion_ratio, sphere_moment_constant, zq_polar_norm, zq_radius,
                       zq_support, zq_width)
from .constructions import (BallBodyEvaluator, ConvolutionBody, WBody, ball_body_gauge, build_convolution_body,
                            build_w_body, k1_checks, kb_ratio_report, max_inequality_audit, normalize_k1,
                            rotation_average, subset_inclusion_audit, truncation_diagnostics)
from .covering import CoveringProfile, covering_upper, packing_lower, regularity_profile
from .estimate import Estimate
from .functionals import (iq_norm_moment, kstar, polar_volume_radius, qstar, radial_moment, slicing_parameter)
from .isotropy import IsotropyReport, center_of_mass, covariance, isotropic_constant, isotropic_transform
from .runner import ExperimentConfig, ExperimentReport, bq_gamma_tables, emit, run_suite
from .sampling import DirectionSet, PointSample, sample_rotation, sample_sphere, sample_uniform

__version__ = "0.1.0"
