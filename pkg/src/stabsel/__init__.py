"""Stability-selection calibration via a binomial stability score, for lasso
regression and (multi-block) graphical lasso, with simulation models and a
benchmark harness."""

from .metrics import ConfusionCounts, confusion, precision_recall_f1
from .multiblock import (BlockStructure, MultiBlockResult, assemble_penalty,
                         calibrate_blockwise, calibrate_multiparameter,
                         make_block_structure)
from .pipeline import StabilityRun, calibrate_glasso, calibrate_lasso
from .resampling import (ResamplingPlan, SelectionProportionArray,
                         draw_indices, selection_proportions)
from .simulate import (GraphSpec, SimulatedGraphDataset,
                       SimulatedRegressionDataset, fill_precision,
                       sample_mvn, simulate_ba_graph, simulate_er_graph,
                       simulate_graph_dataset, simulate_regression, tune_u)
from .solvers import (CovarianceMatrix, DesignMatrix, KKTReport, LassoFit,
                      PenaltyMatrix, PrecisionEstimate, check_kkt_glasso,
                      check_kkt_lasso, empirical_covariance, fit_glasso,
                      fit_lasso, glasso_lambda_max, lasso_lambda_max,
                      lasso_path)
from .stability import (CalibrationGrid, CalibrationResult,
                        StabilityScoreSurface, build_lambda_grid_glasso,
                        build_lambda_grid_lasso, build_pi_grid, calibrate,
                        information_criteria, pfer_mb, pfer_ss, score_surface,
                        stability_score)

__version__ = "0.1.0"
