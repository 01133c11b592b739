"""Relational-event trust inference and trust-preserved shared autonomy."""

from remsa.events import (
    AttributeSet,
    EventHistory,
    RateModel,
    RelationalEvent,
    StatisticSpec,
)

__all__ = [
    "AttributeSet",
    "EventHistory",
    "RateModel",
    "RelationalEvent",
    "StatisticSpec",
]

__version__ = "0.1.0"
