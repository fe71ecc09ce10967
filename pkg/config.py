import os
import logging
from dotenv import load_dotenv

# --- CONFIG ---
load_dotenv()

DEFAULT_SIZE_GUARD = 1_000_000
LOG_FORMAT = '%(asctime)s [%(levelname)s] %(message)s'

# Row-stochasticity and distribution checks
STOCHASTIC_TOL = 1e-9
# Simplex
PIVOT_TOL = 1e-10
# ratio-test entries below this fraction of the column's largest entry are skipped
RELATIVE_PIVOT_TOL = 1e-9
# pivots between rebuilds of the tableau from the original rows (at least one per basis row)
REFACTOR_EVERY = 100
FEASIBILITY_TOL = 1e-7
# Scheduler rows read back from an LP solution
EXTRACTION_TOL = 1e-7
# o1 = o2 . K' residual accepted for a refinement witness
REFINEMENT_TOL = 1e-6


def size_guard():
    """Interleaving ceiling; QIF_SIZE_GUARD overrides the default."""
    raw = os.getenv("QIF_SIZE_GUARD")
    if not raw:
        return DEFAULT_SIZE_GUARD
    try:
        return int(float(raw))
    except ValueError:
        logging.getLogger(__name__).warning(f"⚠️ Ignoring malformed QIF_SIZE_GUARD={raw!r}")
        return DEFAULT_SIZE_GUARD


def setup_logging(level=None):
    level = level or os.getenv("QIF_LOG_LEVEL", "INFO")
    handlers = [logging.StreamHandler()]
    log_file = os.getenv("QIF_LOG_FILE")
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level.upper() if isinstance(level, str) else level,
                        format=LOG_FORMAT, handlers=handlers, force=True)
