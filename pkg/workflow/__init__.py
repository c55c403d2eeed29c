import logging

from .version import __version__

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())
