import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

BENCHMARK_CONFIG = {
    "seed": int(os.getenv("PROGNOSIS_SEED", 0)),
    "epsilon": float(os.getenv("PROGNOSIS_EPSILON", 30.0)),
    "test_fraction": 0.3,
    "eta": 0.1,
    "cv_folds": int(os.getenv("PROGNOSIS_CV_FOLDS", 5)),
    "gamma_grid": {"low": 1e-4, "high": 1e2, "num": 30},
    "n_jobs": int(os.getenv("PROGNOSIS_N_JOBS", 1)),
    "output_dir": os.getenv("PROGNOSIS_OUTPUT_DIR", "./runs"),
    "alpha": 0.05,
    "top_covariates": 20,
    "top_tests": 6,
}

SOLVER_CONFIG = {
    "tol": 1e-8,
    "max_iter": 5000,
    "backtrack": 0.5,
    "grad_tol": 1e-5,
    "power_iterations": 10,
}

EM_CONFIG = {
    "tol": 1e-8,
    "max_iter": 500,
    "max_restarts": 5,
    "collapse": 1e-12,
    "inner_max_iter": 200,
    "cluster_threshold": 0.5,
}

LONGITUDINAL_CONFIG = {
    "window_hours": 48.0,
    "coverage_threshold": 0.5,
    "gp_min_points": 3,
    "gp_starts": 8,
    "gp_max_eval": 500,
    "gp_jitter": 1e-10,
    # log-uniform start ranges
    "variance_start": (1e-3, 1e1),
    "length_start": (1.0, 96.0),
    # search box, in natural units
    "variance_bounds": (1e-8, 1e4),
    "length_bounds": (1.0, 1e3),
}

SYNTH_CONFIG = {
    "n": 400,
    "d": 20,
    "sparsity": 5,
    "rate_high": 1.0 / 5.0,
    "rate_low": 1.0 / 80.0,
    "censor_rate": 0.3,
    "seed": 0,
}

# Elastic-Net strengths tuned on the reference cohort, eta = 0.1 for all
REFERENCE_GAMMAS = {
    "logistic": 42.81,
    "svm": 0.05,
    "cmix": 0.03,
    "cure": 0.008,
    "cox": 0.014,
}

MODEL_KINDS = ["logistic", "svm", "cox", "cure", "cmix"]
BINARY_KINDS = ["logistic", "svm"]
SURVIVAL_KINDS = ["cox", "cure", "cmix"]

LOGGING_CONFIG = {
    "level": os.getenv("PROGNOSIS_LOG_LEVEL", "INFO"),
}
