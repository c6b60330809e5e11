import concurrent.futures
import logging
import threading
from dataclasses import dataclass
from typing import Any, Callable

logger = logging.getLogger(__name__)


@dataclass
class TaskResult:
    label: str
    value: Any = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


class BatchRunner:
    """
    Runs a list of independent solves, optionally on a thread pool.
    Results come back in the order of the operation list, whatever the completion order.
    """

    def __init__(self, operations: list[tuple[str, Callable[[], Any]]], jobs: int = 1,
                 progress: Callable[[int, int], None] | None = None,
                 error: Callable[[str], None] | None = None):
        """
        :param operations: List of (label, zero-argument callable) tuples
        :param jobs: maximum number of concurrent solves
        """
        self.operations = operations
        self.jobs = max(1, int(jobs))
        self.progress = progress
        self.error = error
        self._abort = threading.Event()
        self._lock = threading.Lock()
        self._done = 0

    def _run_one(self, label: str, fn: Callable[[], Any]) -> TaskResult:
        if self._abort.is_set():
            return TaskResult(label, error="aborted")
        try:
            result = TaskResult(label, value=fn())
        except Exception as e:  # noqa: BLE001
            msg = f"{label}: {type(e).__name__}: {e}"
            logger.warning("task failed: %s", msg)
            if self.error:
                self.error(msg)
            result = TaskResult(label, value=getattr(e, "last", None), error=msg)
        with self._lock:
            self._done += 1
            done = self._done
        if self.progress:
            self.progress(done, len(self.operations))
        logger.info("[%d/%d] %s %s", done, len(self.operations), label, "ok" if result.ok else "FAILED")
        return result

    def run(self) -> list[TaskResult]:
        total = len(self.operations)
        if self.jobs == 1 or total <= 1:
            return [self._run_one(label, fn) for label, fn in self.operations]
        with concurrent.futures.ThreadPoolExecutor(max_workers=min(self.jobs, total)) as pool:
            futures = [pool.submit(self._run_one, label, fn) for label, fn in self.operations]
            return [f.result() for f in futures]

    def abort(self):
        self._abort.set()
