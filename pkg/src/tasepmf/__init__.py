"""TASEP master equation, exact l-point dynamics and order-m mean-field models."""
from ._backend import BACKEND
from .correlations import CorrelationVector, embed, lift, vector_field_f
from .dynamics import (
    SolverReport,
    Trajectory,
    boundary_escape_test,
    density_profile,
    integrate,
    order_m_comparison,
    steady_state,
)
from .errors import (
    ConsistencyError,
    IntegrationError,
    InvalidInputError,
    SingularSystemError,
    TasepError,
)
from .lattice import BitPattern, IndexLayout, LatticeParams
from .master import build_generator, evolve_master, production_rate, stationary_master
from .meanfield import cluster_extend, project, vector_field_g
from .ssa import SsaConfig, SsaEstimate, simulate

__version__ = "0.1.0"
