import os

from dotenv import load_dotenv

from .logger import Logging

load_dotenv()

logger = Logging(
    log_dir=os.environ.get('AMCMC_LOG_DIR', 'logs'),
    log_level=os.environ.get('AMCMC_LOG_LEVEL', 'INFO'),
).setup_logging()
