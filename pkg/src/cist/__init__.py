"""Concurrent interpolation search tree with lock-free updates."""

from .dcss import DcssResult, dcss, dcss_read
from .invariants import InvariantViolation, assert_valid, audit
from .multicounter import MultiCounter
from .reclaim import ReclaimDomain
from .tree import DepthStats, Ist, TreeConfig, interpolation_search


def create(config=None):
    return Ist(config)


__all__ = [
    "DcssResult", "DepthStats", "InvariantViolation", "Ist", "MultiCounter",
    "ReclaimDomain", "TreeConfig", "assert_valid", "audit", "create", "dcss",
    "dcss_read", "interpolation_search",
]
