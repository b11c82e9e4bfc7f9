"""Application-wide constants and defaults."""

# Application identity
APP_NAME = "synthtrace"

# Environment: default worker count only
THREADS_ENV_VAR = "SYNTHTRACE_THREADS"

# Exit codes
EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PARTIAL = 2

# Run-wide defaults
DEFAULT_SEED = 0
LOG_LEVELS = ("quiet", "info", "debug")
DEFAULT_LOG_LEVEL = "info"
LOG_MAX_BYTES = 5 * 1024 * 1024
LOG_BACKUP_COUNT = 3

# CSV formats
MANIFEST_HEADER = ("path", "class", "generator")
SCORES_HEADER = ("path", "score")
RECORDS_HEADER = ("path", "crop_x", "crop_y", "crop_side", "qf", "output_path")
PEAKS_HEADER = ("u", "v", "magnitude", "prominence")
PEAK_SUMMARY_HEADER = ("generator", "n_images", "n_peaks", "max_prominence")
REAL_GENERATOR = "none"

# Residual / denoiser
DENOISER_KINDS = ("gaussian", "wavelet", "external")
DEFAULT_GAUSSIAN_SIGMA = 1.0
GAUSSIAN_TRUNCATE = 4.0  # kernel radius = ceil(truncate * sigma)
DEFAULT_WAVELET_THRESHOLD = 0.02

# Fingerprint analysis
DEFAULT_CROP = 256
SPECTRUM_SCALES = ("linear", "log1p")
DEFAULT_SPECTRUM_SCALE = "log1p"
DEFAULT_PROMINENCE = 5.0
DEFAULT_NEIGHBORHOOD = 9
DC_EXCLUSION_RADIUS = 1  # 3x3 zone around DC
PEAK_FLOOR_RATIO = 1e-9  # bins below this fraction of the spectrum max are background
GRID_COLUMNS = 5

# Laundering
DEFAULT_TARGET_SIDE = 200
DEFAULT_QF_MIN = 65
DEFAULT_QF_MAX = 100
DEFAULT_MIN_CROP_FRAC = 0.625
MIN_LAUNDER_SIDE = 16
JPEG_SUBSAMPLING = 2  # 4:2:0
MANIFEST_FILE_NAME = "manifest.csv"
RECORDS_FILE_NAME = "records.csv"

# Spectral-profile detector
DEFAULT_BINS = 64
DEFAULT_L2 = 1e-3
DEFAULT_ITERATIONS = 500
DEFAULT_LEARNING_RATE = 0.1
MODEL_MAGIC = "synthtrace-logreg"
MODEL_VERSION = 1

# Evaluation
DEFAULT_THRESHOLD = 0.5
ACCURACY_MODES = ("balanced", "raw")
REPORT_FORMATS = ("markdown", "json")
PLATT_MAX_ITERATIONS = 100
PLATT_GRADIENT_TOL = 1e-10
PLATT_MIN_STEP = 1e-10
PLATT_HESSIAN_RIDGE = 1e-12
DEFAULT_CALIBRATION_PER_CLASS = 2
POOLED_KEY = "pooled"
