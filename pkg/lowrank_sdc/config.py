"""Configuration for the benchmark problems and experiment profiles"""

import math

# Spatial domain [-2*pi, 2*pi]^2 with periodic identification
DOMAIN_LEFT = -2.0 * math.pi
DOMAIN_LENGTH = 4.0 * math.pi
MIN_GRID_POINTS = 8

# Problem ids exposed to the CLI
PROBLEM_IDS = ("manufactured", "schrodinger", "anisotropic", "rotation")

# Physical coefficients
MANUFACTURED_DIFFUSION = 1.0 / 5.0
ANISOTROPIC_DIFFUSION = 0.01

# Final times and step-count lists of the published convergence tables
FULL_GRID_SIZE = 200
FULL_FINAL_TIME = {
    "manufactured": math.pi,
    "schrodinger": 2.0,
    "anisotropic": math.pi,
    "rotation": math.pi,
}
FULL_NT_LISTS = {
    "manufactured": [40, 80, 160, 320],
    "schrodinger": [50, 100, 200, 400],
    "anisotropic": [100, 200, 400, 600],
    "rotation": [100, 200, 400, 600],
}

# Reduced profile for laptop runs: coarser grid, halved step counts
DESK_GRID_SIZE = 96
DESK_NT_LISTS = {name: [nt // 2 for nt in nts] for name, nts in FULL_NT_LISTS.items()}
DESK_RATE_TOLERANCE = 0.4

# Every n-th macro step is written to the rank series
FULL_RANK_STRIDE = 5
DESK_RANK_STRIDE = 1

# Reference integration
DEFAULT_REF_REFINE = 16
EXACT_REFERENCE_PROBLEMS = ("manufactured", "rotation")

# Supported scheme orders (K = P = order - 1)
SUPPORTED_ORDERS = (1, 2, 3, 4)

# Output directory for experiment runs (relative to project root)
EXPERIMENT_OUTPUT_DIR = "./runs"
