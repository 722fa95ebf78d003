"""Probabilistic robustness certification for black-box classifiers under
random parametric input transformations, with empirical Chernoff bounds,
Clopper-Pearson baselines and a concentration-bound toolbox."""

from .baselines import CPOutcome, clopper_pearson_upper, cp_certify_sample, era
from .classifier import (BridgeClassifier, BuiltinClassifier, NetworkDescription,
                         load_weights, predict, save_weights, softmax)
from .concentration import (DiscreteDensity, MomentSummary, berry_esseen_rhs,
                            exp_uniform_moments, fft_error_bound, fft_mean_density,
                            minimize_yup, yup)
from .core import (BoundRecord, CertConfig, LabeledSample, default_t_grid,
                   linf_discrepancy, predicted_class, top2_gap)
from .data import Dataset, load_cifar10_bin, load_mnist_idx, subset, synthetic_dataset
from .engine import (certify_dataset, certify_sample, discrepancy_samples,
                     empirical_chernoff, min_samples_n0, theorem1_rhs)
from .errors import BridgeError, CCError, FormatError, NumericError
from .metrics import (CertificationReport, SampleResult, cpca, emit_report,
                      epsilon_sweep, parse_report_csv, parse_report_json, pca)
from .transforms import (AwgnSpec, BrightnessSpec, CompositionSpec, ContrastSpec,
                         GaussianBlurSpec, RotationSpec, ScaleSpec, TransformParams,
                         TranslationSpec, apply, grid_params, sample_params)

__version__ = "0.1.0"
