"""Stability moduli for mean-field SDEs under volatility ambiguity.

Bihari-Osgood transforms, the stability modulus ``Psi``, scenario Monte
Carlo for G-Brownian motion and empirical stability certificates.
"""

from .kernel import (CoefficientBounds, Custom, DomainError, KernelSum, Linear, LogLipschitz,
                     OsgoodKernel, PiecewiseConstant, Power, WeightProfile, evaluate_rho, validate_osgood)
from .bihari import (BihariTransform, StabilityModulus, constant_collection, continuity_modulus, psi,
                     solve_envelope)
from .ambiguity import (AmbiguitySet, BangBang, Extremes, LatinGrid, RandomizedControls, generate_scenarios,
                        sample_paths, sup_expectation)
from .msde import CoefficientTriple, InitialData, euler_step, initial_gap, simulate_pair
from .stability import (SaturatingFamily, Verdict, amplification, asymptotics_probe, certify,
                        propagate_partition, saturating_drift)
from .config import defaults_for_A4, load_config

__version__ = "0.1.0"
