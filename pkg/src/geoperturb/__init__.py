"""Location-privacy perturbation (Donut geomask, geo-indistinguishability)
and the metrics, distribution fits and adversary used to evaluate them."""

from .attack import AttackResult, PosteriorGrid, attack_posterior, attack_success
from .distfit import FAMILIES, FitResult, fit, fit_all
from .geo import GeoPoint, PlanarPoint, Projection, euclidean_distance, to_geo, to_planar
from .mechanisms import (
    AnnulusRadii,
    DonutParams,
    GeoIParams,
    donut_perturb,
    donut_perturb_batch,
    donut_radii,
    geoi_perturb,
    geoi_perturb_batch,
    planar_laplace_radius,
)
from .metrics import (
    PerturbationRecord,
    PrivacySummary,
    Records,
    average_spatial_error,
    bin_mean_distance_by_k,
    k_estimate,
    privacy_summary,
)
from .population import Block, BlockTable, SynthSpec, block_of, density_at, synth_generate
from .rng import RngStream, id_keys
from .special import lambert_w_m1

__version__ = "0.1.0"
