"""Frequency-domain checks for m-fold compound cocycles of scalar delay equations."""

from __future__ import annotations

__version__ = "0.1.0"

from .dde import (ConstraintKind, LinearDelaySystem, SolutionTable, aligned_step, basis_solution,
                  fourier_mode, fundamental_solution, integrate)
from .errors import (BoundaryError, BracketError, CompoundFreqError, ConfigurationError,
                     ContractError, DomainError, IncompleteSpectrumError,
                     InsufficientSpectrumError, NotFoundError, NumericError, PreconditionError,
                     VerificationError)
from .linalg import (hermitian_eigenvalues, hermitian_symmetrize, largest_singular_value,
                     singular_values, smallest_hermitian_eigenvalue)
from .models import (MackeyGlassParams, SuarezSchopfParams, build_system, hopf_crossing_delay,
                     mackey_glass_system, mg_hopf_crossing_delay, mg_paper_tau0,
                     ss_attractor_radius, ss_sum_region_bound, suarez_schopf_system)
from .scheme import (KernelTable, Path, SchemeConfig, alpha, build_WTN, measurement_kernel,
                     solve_tables, tail_gap, wedge_eval)
from .spectrum import Box, Spectrum, characteristic_value, compound_spectral_bound, count_roots_in, leading_roots
from .sweep import (FrequencySweepReport, Verdict, check_precondition, convergence_report,
                    frequency_sweep, region_scan)
