#!/usr/bin/env python3

import os
from dotenv import load_dotenv

load_dotenv()

THREADS = int(os.getenv('SLSCAN_THREADS', '1'))
LOG_DIR = os.getenv('SLSCAN_LOG_DIR', 'logs')
LOG_LEVEL = os.getenv('SLSCAN_LOG_LEVEL', 'INFO').upper()

# Experimental window schedule: h_1 = 1, h_{i+1} = ceil(GROWTH * h_i)
DEFAULT_GROWTH = 1.1
DEFAULT_LAMBDA1 = 1.0
DEFAULT_ALPHA = 0.05
DEFAULT_CALIBRATION_REPS = 500
DEFAULT_SKEW_THRESHOLD = 1.0

# Heterogeneity warning for pooled AR(1) coefficients
PHI_IQR_WARNING = 0.2

# Floor applied to the sparsity likelihood term when its log argument is not positive
SL_TERM_FLOOR = 1e-10

# Largest window handled by the dense covariance oracle
ORACLE_MAX_WINDOW = 5000

# Columns per block when scanning wide triple sets (bounds N x K temporaries)
SCAN_BLOCK_ELEMENTS = 1 << 22

# Stationary AR(1) coefficients above this use the summed window variance
AR1_NEAR_UNIT_PHI = 0.9
