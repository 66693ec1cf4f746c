import os
from dotenv import load_dotenv

load_dotenv()

# Output location (set in .env file or the environment)
OUTPUT_ROOT = os.getenv("SYNLAT_OUTPUT_ROOT", "results")

# Solver settings with environment variable support
TOLERANCE = float(os.getenv("SYNLAT_TOL", "1e-8"))
MAX_STEPS = int(os.getenv("SYNLAT_MAX_STEPS", str(2 ** 20)))

# Sweep fan-out
WORKERS = int(os.getenv("SYNLAT_WORKERS", "4"))

LOG_LEVEL = os.getenv("SYNLAT_LOG_LEVEL", "INFO")

# Optional replacement for the bundled C3 coefficient table
C3_TABLE_PATH = os.getenv("SYNLAT_C3_TABLE", "")
