from .net import (InputSpec, SpecNormNet, PowerIterResult, spectral_norm,
                  normalize_layers, assemble_features, feature_names,
                  FeatureDimensionError, ZeroWeightLayerError)
from .training import (TrainingSet, SGDConfig, TrainResult, train,
                       loss_and_grads, build_input_spec, CertificateError,
                       EmptyDataError, NonFiniteLossError)
from .labels import extract_labels, build_feature_matrix, TooShortLogError
from .audit import LipschitzAudit, audit_lipschitz
from .steady_fit import FittedSteadyModel, fit_steady_model, rmse

__all__ = [
    "InputSpec", "SpecNormNet", "PowerIterResult", "spectral_norm",
    "normalize_layers", "assemble_features", "feature_names",
    "FeatureDimensionError", "ZeroWeightLayerError",
    "TrainingSet", "SGDConfig", "TrainResult", "train", "loss_and_grads",
    "build_input_spec", "CertificateError", "EmptyDataError",
    "NonFiniteLossError",
    "extract_labels", "build_feature_matrix", "TooShortLogError",
    "LipschitzAudit", "audit_lipschitz",
    "FittedSteadyModel", "fit_steady_model", "rmse",
]
