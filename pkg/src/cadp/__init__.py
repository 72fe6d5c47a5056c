"""Cooperative multi-agent Q-learning lab.

Agents train centralized with attention-based advice exchange and a
self-pruning objective that drives the exchange toward a no-op, so the
learned policies can execute fully decentralized.
"""

from .backend import active_name as active_backend
from .errors import CadpError, ConfigurationError, NumericError, UsageError

__version__ = "0.1.0"

__all__ = [
    "CadpError",
    "ConfigurationError",
    "NumericError",
    "UsageError",
    "active_backend",
    "__version__",
]
