"""Setup timelyrec logging"""
import logging
import os

LOG_LEVEL_ENV = "TIMELYREC_LOG_LEVEL"


def init_logging(log_dir=None):
    """Setup default timelyrec logger

    Messages go to stderr. If log_dir is given, they are also appended
    to log_dir/timelyrec.log with timestamps.
    """
    logger = logging.getLogger("timelyrec")

    # don't reconfigure logs if handlers are already configured
    # e.g. happens in pytest, which hooks up log handlers for reporting
    # or if this function is called twice
    if logger.hasHandlers():
        return

    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        file_logger = logging.FileHandler(os.path.join(log_dir, "timelyrec.log"))
        file_logger.setFormatter(logging.Formatter("%(asctime)s %(message)s"))
        logger.addHandler(file_logger)

    stderr_logger = logging.StreamHandler()
    stderr_logger.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(stderr_logger)
    logger.setLevel(os.environ.get(LOG_LEVEL_ENV, "INFO").upper())
