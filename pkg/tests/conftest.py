"""Shared test configuration.

Hypothesis runs with a bounded example count and no deadline so the
property tests stay fast and do not flake on slow CI machines.
"""

import logging

from hypothesis import HealthCheck, settings

settings.register_profile(
    "fast",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("fast")

# Recovery tests exercise degraded clusters on purpose; keep the
# expected protection warnings out of the test output.
logging.getLogger("ftmr").setLevel(logging.ERROR)
