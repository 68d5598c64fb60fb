"""Fair exchange of medical files, bills and insurance claims on a simulated ledger."""

from .errors import Revert
from .ledger import DEFAULT_TTL, Ledger, OfflineBus, Purpose
from .suite import Suite

__all__ = ["DEFAULT_TTL", "Ledger", "OfflineBus", "Purpose", "Revert", "Suite"]
__version__ = "0.1.0"
