"""Stochastic linear-quadratic control: Riccati gains, the optimal stationary
pair, dissipativity certificates and turnpike diagnostics."""
from .dissipativity import DissipativityCertificate, certify, verify_dissipation_chain
from .errors import (BoundViolated, CertificateNotFound, DegeneratePerturbation, DimensionError,
                     Inconclusive, NotPositiveDefinite, NoConvergence, TurnpikeError)
from .model import GaussianState, LtiStochasticSystem, Problem, QuadraticCost, scalar_example, validate
from .riccati import GainSchedule, RiccatiSolution, riccati_backward, solve_dare
from .simulate import overtaking_gap, sample_noise, simulate_ensemble, simulate_pair
from .stationary import AffineControl, StationaryPair, build_stationary_pair, propagate_joint_moments
from .turnpike import TurnpikeReport, figure1_metrics, moment_turnpike, probability_turnpike

__version__ = "0.1.0"
