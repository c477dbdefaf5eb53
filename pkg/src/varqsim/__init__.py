"""Statevector toolkit for variational quantum time evolution: exact and
stochastic circuit derivatives, the quantum geometric tensor, regularized
McLachlan evolution, metric-preconditioned optimizers, and dense reference
oracles."""

__version__ = "0.1.0"

from .circuit import (Gate, ParameterizedCircuit, build_ansatz, fidelity,
                      initial_parameters)
from .deriv import (QGT, EstimatorState, PerturbationSpec, energy_gradient,
                    estimator_update, evolution_gradient, grad_finite_diff,
                    grad_parameter_shift, grad_reverse, grad_spsa_sample,
                    psd_project, qgt_hessian_form, qgt_reverse,
                    qgt_spsa_sample)
from .evolve import (BuresMetrics, DualParams, EvolutionConfig,
                     EvolutionTrace, SaqiteParams, bures_metrics,
                     dualqte_evolve, evolve, realtime_error_bound,
                     saqite_evolve, varqte_evolve)
from .optimize import (OptimizerConfig, OptimizerTrace, blackbox_loss,
                       make_energy, make_fidelity, run_gd, run_qng,
                       run_qnspsa, run_spsa)
from .oracle import (exact_imag_evolve, exact_real_evolve, gibbs_state,
                     thermal_average, trotter_circuit)
from .pauli import (Graph, PauliString, PauliSum, build_model,
                    diagonal_eigenvalue, diagonalizing_basis, split_diagonal)
from .rng import substream
from .solve import SolverConfig, solve_regularized
from .state import (DensityOperator, NormDriftError, ReadoutModel,
                    Statevector, apply_gate, bures_distance, counters,
                    expectation, fidelity_states, partial_trace,
                    sample_counts, sampled_expectation, trace_distance)
