"""Contextual-bandit lending-fee pricing with offline replay evaluation."""

__version__ = "0.1.0"

from .domain import (  # noqa: E402
    ARMS,
    ArmId,
    ArmQuote,
    ArmQuotes,
    BookingRequest,
    ContextVector,
    LogRecord,
    RewardComponents,
    SpoofConfig,
    validate_request,
)

__all__ = [
    "ARMS", "ArmId", "ArmQuote", "ArmQuotes", "BookingRequest", "ContextVector", "LogRecord",
    "RewardComponents", "SpoofConfig", "__version__", "validate_request",
]
