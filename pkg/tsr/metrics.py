"""
Process metrics

Responsibilities:
- Count pipeline runs and failures
- Accumulate annealing proposals and accepted moves
- Expose a snapshot with resident memory for observability
"""

from __future__ import annotations

from typing import Dict

import psutil

# ------------------------------------------------------------------------------
# In-memory metrics storage
# ------------------------------------------------------------------------------
_metrics: Dict[str, float] = {
    "runs_total": 0,
    "runs_failed": 0,
    "anneal_proposals_total": 0,
    "anneal_accepted_total": 0,
    "clusters_synthesized_total": 0,
}


# ------------------------------------------------------------------------------
# Metrics helpers
# ------------------------------------------------------------------------------
def record_run(success: bool) -> None:
    _metrics["runs_total"] += 1
    if not success:
        _metrics["runs_failed"] += 1


def record_anneal(proposals: int, accepted: int) -> None:
    _metrics["anneal_proposals_total"] += proposals
    _metrics["anneal_accepted_total"] += accepted


def record_synthesis(clusters: int) -> None:
    _metrics["clusters_synthesized_total"] += clusters


def get_metrics() -> Dict[str, float]:
    """Snapshot of the counters plus current resident set size."""
    snapshot = _metrics.copy()
    snapshot["process_rss_bytes"] = float(psutil.Process().memory_info().rss)
    return snapshot


def reset_metrics() -> None:
    for key in _metrics:
        _metrics[key] = 0
