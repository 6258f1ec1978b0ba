"""
Equilibrium service that solves each initial law once and serves the result to all endpoints.
Solving a continuous law runs many discretization levels, so results are cached.
"""
import hashlib
import json
import logging
import os
import threading
import time
from typing import Any, Dict, Optional, Tuple

from equilibrium import DEFAULT_MAX_LEVEL, ConvergenceReport, EquilibriumLaw, solve
from measures import DISCRETIZATION_TOL, Measure, resolve_measure

logger = logging.getLogger(__name__)

MAX_CACHE_ENTRIES = 128


class EquilibriumService:
    """Service that solves and caches equilibria keyed on the request spec."""

    def __init__(self, cache_ttl: Optional[int] = None, max_entries: Optional[int] = None):
        if cache_ttl is None:
            cache_ttl = int(os.environ.get('CONTEST_CACHE_TTL', 300))
        if max_entries is None:
            max_entries = int(os.environ.get('CONTEST_CACHE_SIZE', MAX_CACHE_ENTRIES))
        self.cache_ttl = cache_ttl
        self.max_entries = max_entries
        self._cache = {}
        self._cache_lock = threading.Lock()

    def _get_cache_key(self, spec: Dict[str, Any], tol: float, max_level: int) -> str:
        """Generate cache key from the canonical JSON of the request."""
        canonical = json.dumps({'measure': spec, 'tol': tol, 'max_level': max_level},
                               sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def _is_cache_valid(self, cache_entry: dict) -> bool:
        """Check if cache entry is still valid."""
        if not cache_entry:
            return False
        return time.time() - cache_entry.get('timestamp', 0) < self.cache_ttl

    def _evict(self):
        """Drop expired entries, then the oldest ones beyond the size cap. Caller holds the lock."""
        expired = [key for key, entry in self._cache.items() if not self._is_cache_valid(entry)]
        for key in expired:
            del self._cache[key]
        while self._cache and len(self._cache) >= self.max_entries:
            oldest = min(self._cache, key=lambda key: self._cache[key]['timestamp'])
            del self._cache[oldest]
        if expired:
            logger.debug(f"Evicted {len(expired)} expired equilibria")

    def get_equilibrium(self, spec: Dict[str, Any], tol: float = DISCRETIZATION_TOL,
                        max_level: int = DEFAULT_MAX_LEVEL) -> Tuple[Measure, EquilibriumLaw, ConvergenceReport]:
        """Resolve the spec and return (mu, equilibrium law, convergence report)."""
        mu = resolve_measure(spec)
        cache_key = self._get_cache_key(spec, tol, max_level)

        with self._cache_lock:
            cache_entry = self._cache.get(cache_key, {})
            if self._is_cache_valid(cache_entry):
                logger.info(f"Returning cached equilibrium {cache_key[:8]}")
                return mu, cache_entry['law'], cache_entry['report']

        # Solve outside the lock; a concurrent duplicate solve yields the same law
        logger.info(f"Solving equilibrium {cache_key[:8]}")
        law, report = solve(mu, tol=tol, max_level=max_level)

        with self._cache_lock:
            self._evict()
            self._cache[cache_key] = {
                'law': law,
                'report': report,
                'timestamp': time.time(),
            }
        return mu, law, report

    def clear_cache(self, spec: Optional[Dict[str, Any]] = None, tol: float = DISCRETIZATION_TOL,
                    max_level: int = DEFAULT_MAX_LEVEL):
        """Clear one cached equilibrium, or all of them."""
        with self._cache_lock:
            if spec is None:
                self._cache.clear()
            else:
                self._cache.pop(self._get_cache_key(spec, tol, max_level), None)


# Global instance
equilibrium_service = EquilibriumService()
