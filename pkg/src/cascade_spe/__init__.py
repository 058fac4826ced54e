"""Simulation and analysis of pulsed cascaded (biexciton-exciton) single-photon emitters."""

from .model import (DEVICE_PARAMS, GLASS_PARAMS, EnvironmentPair, RateParams, brightness_enhancement,
                    cw_photon_rate, enhancement_factors, intensity_model, photon_rate, photons_per_pulse,
                    population_x, population_xx, purcell_factors, radiative_split)
from .simulator import PhotonStream, SimConfig, expected_counts, simulate
from .counting import (coincidence_histogram, decay_histogram, estimate_emitter_count, g2_zero,
                       saturation_points, time_gate)
from .lm import FitProblem, FitResult, lm_minimize
from .fitting import LifetimeInit, SaturationModel, fit_lifetime, fit_saturation
from .angular import AngularProfile, BFPImage, bfp_to_angular, collection_efficiency

__version__ = "0.1.0"
