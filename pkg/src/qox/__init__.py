"""QoX: shared quality-of-service and quality-of-consumption ratings for cloud services."""

__version__ = "0.1.0"
