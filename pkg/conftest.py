"""
Root pytest configuration
Two-stage statistical reconstruction
"""

from __future__ import annotations

import logging
import os

from hypothesis import HealthCheck, settings

from tsr.config import LOG_FORMAT

# ------------------------------------------------------------------------------
# Logging
# ------------------------------------------------------------------------------
logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)

# ------------------------------------------------------------------------------
# Hypothesis profiles (select with TSR_HYPOTHESIS_PROFILE)
# ------------------------------------------------------------------------------
settings.register_profile(
    "dev",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile(
    "ci",
    max_examples=200,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.getenv("TSR_HYPOTHESIS_PROFILE", "dev"))
