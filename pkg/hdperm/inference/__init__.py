"""hdperm.inference"""

import importlib.metadata

__version__ = importlib.metadata.version("hdperm.inference")
