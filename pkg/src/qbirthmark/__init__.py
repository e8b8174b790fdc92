"""Block random matrices, diagonal ensembles and stadium wavepackets.

Numerical tools for measuring how strongly a quantum system remembers its
initial state at infinite time, compared with the random-matrix baseline.
"""

__version__ = "0.1.0"

from ._accel import BACKEND
from .errors import (ConfigError, CutoffError, InsufficientDataError, InvalidCouplingError,
                     InvalidDimensionError, NumericalError, OutputError, PropagationError,
                     QBirthmarkError, SolverError, ValidationError)
from .rng import RandomStream
from .ensembles import (BlockStructure, Hamiltonian, build_model_a, build_model_b,
                        dump_hamiltonian, load_hamiltonian, sample_goe, sample_gue)
from .spectral import (EigenSystem, SpacingSeries, density_of_states, eigensolve,
                       heisenberg_time, in_out_ratio, ks_to_wigner, level_spacings,
                       semicircle_deviation)
from .dynamics import (InfiniteTimeProfile, TimeSeries, basis_state, cross_probability, evolve,
                       infinite_time_joint, infinite_time_profile, ipr, ipr_series,
                       participation_number_direct, participation_number_integral,
                       participation_number_purity, rho_av, survival_probability)
from .birthmark import (QbPrediction, SymmetryClass, ThoulessEstimate, detect_saturation,
                        qb_prediction, rmt_factor, running_average, thouless_time)
from .stadium import (DensityGrid, GridSpec, StadiumSpec, WavepacketSpec, build_domain,
                      canonical_launches, contrast, init_wavepacket, propagate_and_accumulate,
                      step, symmetry_error)
from .experiments import ExperimentConfig, ensemble_average, run
