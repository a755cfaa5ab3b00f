"""
Defaults for the market simulation and the learning pipeline.

Values marked "config default" are not taken from published figures; scenario files
and command-line flags override them.
"""

TOOL_VERSION = "0.3.0"

NS_PER_SECOND = 1_000_000_000
NS_PER_MINUTE = 60 * NS_PER_SECOND
NS_PER_HOUR = 60 * NS_PER_MINUTE

# Simulated time is measured from midnight of each trading day.
SESSION_OPEN_NS = 9 * NS_PER_HOUR + 30 * NS_PER_MINUTE
SESSION_CLOSE_NS = 16 * NS_PER_HOUR

TICK_DOLLARS = 0.01
L2_DEPTH = 5

# Latency between New York and Seattle, one way, at two thirds of the speed of light.
NY_SEATTLE_KM = 3866.0
SIGNAL_SPEED_KM_S = 200_000.0
DEFAULT_COMPUTATION_DELAY_NS = 50

EXCHANGE_ID = 0

# Agent counts per preset. The small preset is a desk-scale market for CI runs.
PRESETS = {
    "default": {
        "noise": 5000,
        "value": 100,
        "market_maker": 3,
        "twap": 3,
        "vwap": 3,
        "momentum": 5,
        "mean_reversion": 5,
    },
    "small": {
        "noise": 500,
        "value": 20,
        "market_maker": 1,
        "twap": 3,
        "vwap": 3,
        "momentum": 1,
        "mean_reversion": 1,
    },
}

# Section overrides applied on top of a preset's counts. Small-preset TWAP children are 60 shares.
PRESET_SETTINGS = {
    "default": {},
    "small": {"market_taker": {"parent_qty": 1440}},
}

AGENT_DEFAULTS = {
    "noise": {"q_min": 10, "q_max": 100},
    "value": {"lambda_a_ns": 60 * NS_PER_SECOND, "delta_s": 1, "q": 100, "xi": 0.5, "sigma_n": 50.0},
    "market_maker": {"lambda_a_ns": 10 * NS_PER_SECOND, "q_max": 200, "delta_s": 5},
    "market_taker": {
        "parent_qty": 2000,
        "window_ns": 2 * NS_PER_HOUR,
        "n_slots": 24,
        "first_start_offset_ns": 15 * NS_PER_MINUTE,
    },
    "directional": {
        "short_window": 20,
        "long_window": 50,
        "cadence_ns": NS_PER_MINUTE,
        "q_max": 50,
    },
}

FUNDAMENTAL_DEFAULTS = {
    "source": "ou",
    "mean_ticks": 10_000,
    "reversion_rate": 1.0 / 3600.0,
    "vol": 0.5,
    "dt_ns": NS_PER_SECOND,
    "csv_paths": [],
    "volume_profile_csv": None,
}

OPENING_BOOK_DEFAULTS = {"levels": 5, "qty": 100}

DEFAULT_DAYS = 5
DEFAULT_TRAIN_DAYS = 3
DEFAULT_TEST_DAYS = 2

HYPERPARAMS = {
    "hidden_sizes": [256, 1024, 1024, 1024],
    "activations": ["relu", "relu", "relu", "sigmoid"],
    "dropout": 0.2,
    "learning_rate": 1e-3,
    "batch_size": 128,
    "beta1": 0.9,
    "beta2": 0.999,
    "epsilon": 1e-8,
    "epochs": 200,
}

# Cloner defaults (config default): a narrower regressor of the same kind, one per archetype.
CLONER_HYPERPARAMS = {
    "hidden_sizes": [256, 256],
    "activations": ["relu", "sigmoid"],
    "dropout": 0.0,
    "batch_size": 256,
    "epochs": 100,
}

SEARCH_BATCH_SIZES = [32, 64, 128, 256]
SEARCH_LEARNING_RATE_RANGE = (1e-4, 1e-2)
SEARCH_DROPOUT_RANGE = (0.0, 0.5)

BASELINE_DEFAULTS = {
    "knn": {"k": 5},
    "linear_svm": {"epochs": 20, "learning_rate": 0.01, "regularization": 1e-4},
    "decision_tree": {"max_depth": 12},
    "random_forest": {"n_trees": 50, "feat_frac": 0.5, "max_depth": 12},
    "adaboost": {"n_stumps": 50},
    "gaussian_nb": {},
}

MIN_CLONER_SAMPLES = 100

STYLIZED_HORIZONS_MIN = [1, 10]
MID_SAMPLE_STEP_NS = NS_PER_SECOND
HISTOGRAM_BINS = 50
