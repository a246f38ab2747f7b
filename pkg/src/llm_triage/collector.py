"""Parallel worker pool with a single ordered writer.

The scan's per-file work (hash, then parse) runs on a thread pool:

* **Workers** call ``work(item)`` for items pulled off the submission
  list. Hashing is I/O plus ``hashlib``, which releases the GIL on large
  updates, so threads scale well here.

* **Writer** is one thread that drains a result queue and calls
  ``sink(index, item, result)``. Results are released to the sink in
  submission order through a reorder buffer, so the findings list and the
  custody log come out identical whatever the worker count.

Cancellation is cooperative: the ``threading.Event`` is checked before
each item (workers) and each queue ``get`` (writer). Exceptions in either
side are re-raised on the caller's thread, first failure wins.
"""

from __future__ import annotations

import logging
import os
import queue
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Generic, TypeVar

log = logging.getLogger(__name__)

WORKERS_ENV = "LLMTRIAGE_WORKERS"
DEFAULT_MAX_WORKERS = 8

T = TypeVar("T")
R = TypeVar("R")


def resolve_worker_count() -> int:
    """``min(8, cpu_count())`` unless ``LLMTRIAGE_WORKERS`` says otherwise."""
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if raw:
        try:
            value = int(raw)
            if value > 0:
                return value
            log.warning("non-positive %s=%r, using auto-detected count", WORKERS_ENV, raw)
        except ValueError:
            log.warning("invalid %s=%r, using auto-detected count", WORKERS_ENV, raw)

    cpu = os.cpu_count() or 4
    return min(DEFAULT_MAX_WORKERS, cpu)


# Signals "no more work" to the writer thread.
_WRITER_DONE = object()


class _Failed:
    __slots__ = ("exc",)

    def __init__(self, exc: BaseException) -> None:
        self.exc = exc


class ParallelCollector(Generic[T, R]):
    """Runs ``work`` over items on a pool and feeds results to ``sink`` in order.

    Usage::

        collector = ParallelCollector(hash_and_parse, record, num_workers=4)
        written = collector.collect(candidates)
    """

    def __init__(
        self,
        work: Callable[[T], R],
        sink: Callable[[int, T, R], None],
        *,
        num_workers: int | None = None,
        stop_event: threading.Event | None = None,
        result_queue_max: int = 32,
    ) -> None:
        self.work = work
        self.sink = sink
        self.num_workers = num_workers if num_workers is not None else resolve_worker_count()
        self.stop_event = stop_event if stop_event is not None else threading.Event()
        self._results: queue.Queue[Any] = queue.Queue(maxsize=result_queue_max)

    def collect(self, items: Sequence[T]) -> int:
        """Process ``items``; returns how many results reached the sink."""
        if self.stop_event.is_set():
            log.info("collector: stop already set, skipping")
            return 0
        if not items:
            return 0

        log.info("collector: %d item(s), %d worker(s)", len(items), self.num_workers)
        t0 = time.monotonic()

        written = [0]
        writer_exc: list[BaseException] = []
        writer = threading.Thread(
            target=self._writer_loop,
            args=(items, written, writer_exc),
            name="collector-writer",
        )
        writer.start()

        try:
            with ThreadPoolExecutor(
                max_workers=self.num_workers,
                thread_name_prefix="collector-worker",
            ) as pool:
                for index, item in enumerate(items):
                    if self.stop_event.is_set():
                        break
                    pool.submit(self._worker_task, index, item)
        finally:
            self._results.put(_WRITER_DONE)
            writer.join()

        if writer_exc:
            raise writer_exc[0]

        log.info("collector: %d result(s) in %.1f s", written[0], time.monotonic() - t0)
        return written[0]

    def _worker_task(self, index: int, item: T) -> None:
        if self.stop_event.is_set():
            return
        try:
            result: Any = self.work(item)
        except BaseException as exc:  # noqa: BLE001 - re-raised on the caller's thread
            log.exception("worker failed on item %d", index)
            result = _Failed(exc)
        self._results.put((index, result))

    def _writer_loop(
        self,
        items: Sequence[T],
        written: list[int],
        exc_holder: list[BaseException],
    ) -> None:
        pending: dict[int, Any] = {}
        next_index = 0
        while True:
            entry = self._results.get()
            if entry is _WRITER_DONE:
                return
            if exc_holder or self.stop_event.is_set():
                # keep draining so workers never block on a full queue
                continue
            index, result = entry
            pending[index] = result
            while next_index in pending:
                result = pending.pop(next_index)
                if isinstance(result, _Failed):
                    exc_holder.append(result.exc)
                    break
                try:
                    self.sink(next_index, items[next_index], result)
                except BaseException as exc:  # noqa: BLE001
                    exc_holder.append(exc)
                    break
                written[0] += 1
                next_index += 1
