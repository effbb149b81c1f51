"""Two-step Bayesian inference for ODE parameters under time-varying observation noise.

Step 1 learns a time-dependent observation variance with a pair of coupled
Gaussian processes; step 2 plugs the learned variance into the likelihood
of a random-walk Metropolis-Hastings sampler over the ODE parameters.
"""

__version__ = "0.1.0"

from .gp import KernelParams, TimeSeries, GPFit  # noqa: F401
from .hetgp import HetGPConfig, HetGPFit, fit_hetgp, check_homoscedastic  # noqa: F401
from .ode import OdeModel, Trajectory, solve  # noqa: F401
from .bayes import Chain, ParamPrior, PriorSpec, SigmaField, mh_sample  # noqa: F401
from .metrics import MmdResult, PredictiveBand, mmd_squared, median_heuristic  # noqa: F401
