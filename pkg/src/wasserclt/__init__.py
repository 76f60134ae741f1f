"""Wasserstein-contraction tools for Markov-chain central limit theorems."""

__version__ = "0.1.0"

from .clt import (
    BatchMeansEstimate,
    CltReport,
    TestFunction,
    batch_means,
    ks_normality,
    remainder_diagnostic,
    run_clt_experiment,
)
from .conditions import check_C1, check_H, check_nar_conditions, ula_constants
from .core import FiniteChain, FiniteKernel, Kernel, Metric, Trajectory, finite_stationary, run_batch, simulate
from .discretize import discretize_kernel
from .exceptions import (
    ConfigurationError,
    DomainError,
    NonUniqueStationaryError,
    NumericalError,
    VerdictRefused,
    WasserCLTError,
)
from .martingale import asymptotic_variance, ma_decompose, mw_condition_sum, poisson_solve, resolvent_solve
from .models import (
    EIMALA,
    ULA,
    BernoulliAR1,
    LogisticTarget,
    NonlinearAR,
    Noise,
    Nonlinearity,
    QuadraticTarget,
)
from .rng import RngStream
from .wasserstein import RateFunction, classify_rate, estimate_contraction, rate_partial_sum, w1_empirical_1d
