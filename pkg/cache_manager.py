import threading
import time
from typing import Any, Dict, NamedTuple, Optional


class _Entry(NamedTuple):
    value: Dict[str, Any]
    stored_at: float


class CacheManager:
    """In-process TTL cache of finished runs, keyed by config content hash.

    Sweep workers share one instance, so every access holds the lock.
    Identical sweep members are served from it instead of being solved again.
    """

    def __init__(self, max_size: int = 1000, ttl: int = 3600):
        self.max_size = max_size
        self.ttl = ttl  # seconds
        self.hits = 0
        self.misses = 0
        self._entries: Dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def _evict_expired(self, now: float) -> None:
        stale = [key for key, entry in self._entries.items() if now - entry.stored_at > self.ttl]
        for key in stale:
            del self._entries[key]

    def get(self, key: str) -> Optional[Dict[str, Any]]:
        """Record of an earlier identical run, or None if absent or expired."""
        with self._lock:
            self._evict_expired(time.time())
            entry = self._entries.get(key)
            if entry is None:
                self.misses += 1
                return None
            self.hits += 1
            return entry.value

    def set(self, key: str, value: Dict[str, Any]) -> None:
        with self._lock:
            now = time.time()
            self._evict_expired(now)
            if key not in self._entries and len(self._entries) >= self.max_size:
                oldest = min(self._entries, key=lambda k: self._entries[k].stored_at)
                del self._entries[oldest]
            self._entries[key] = _Entry(value, time.time())

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)
