"""
TempoForge - event-driven training of time-to-first-spike spiking neural networks.
"""

__version__ = "1.0.0"
__title__ = "TempoForge"
__description__ = "Exact event-driven training of temporally coded spiking neural networks"
__author__ = "TempoForge Team"
