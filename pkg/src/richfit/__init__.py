"""Richards-curve count regression for epidemic incidence series."""

from .growth import (RichardsParams, peak_time, richards, richards_diff,
                     richards_gradient, richards_hessian)
from .model import (MeanTrajectory, ModelSpec, ParamLayout, from_unconstrained,
                    mean_daily, mean_gradient, to_unconstrained)
from .series import CountSeries
from .likelihoods import (Family, loglik, loglik_gradient, loglik_hessian,
                          pearson_residuals, sample_counts)
from .estimator import (FitConfig, FitResult, GaConfig, compare_models, fit,
                        information_criteria, observed_information,
                        parameter_intervals)
from .uncertainty import (BootstrapEnsemble, PeakEstimate, PredictionBand,
                          cumulative_band, draw_ensemble, peak_interval,
                          prediction_band)
from .diagnostics import (acf, empirical_coverage, normality_test, pseudo_r2,
                          weekday_residual_summary)
from .data import (extract_series, load_bundled_series,
                   merge_autonomous_provinces, parse_dpc, weekday_design)
from .evaluation import (backtest_grid, peak_backtest, rmspe,
                         smoothed_true_peak)

__version__ = "0.1.0"
