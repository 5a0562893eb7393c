# coding: utf-8
"""Thread pool used to run independent Markov chains and replicates.

Note:
    Jobs go to worker threads through a bounded queue, and results come
    back in submission order. The numerical kernels spend most of their
    time in `numpy` and `scipy` routines that release the GIL, so threads
    keep several cores busy. The pool never starts more threads than
    there are tasks, when the number of tasks is known.

"""

import collections
import operator
import os
import queue
import threading
import typing

import psutil

__all__ = ["imap_ordered", "available_cpus"]

_T = typing.TypeVar("_T")
_R = typing.TypeVar("_R")

# seconds between two checks of the abort flag by a blocked thread
_POLL = 0.05


def available_cpus(cpus: int = 0) -> int:
    """Resolve a requested number of threads, ``0`` meaning automatic."""
    if cpus < 0:
        raise ValueError("`cpus` must be positive or null, not {!r}".format(cpus))
    return cpus if cpus > 0 else psutil.cpu_count(logical=False) or os.cpu_count() or 1


class _Job(typing.Generic[_T, _R]):
    """A task waiting for a worker, and its result once done."""

    __slots__ = ("task", "done", "result")

    def __init__(self, task: _T) -> None:
        self.task = task
        self.done = threading.Event()
        self.result: typing.Optional[_R] = None

    def finish(self, result: _R) -> None:
        self.result = result
        self.done.set()


class _Abort:
    """A flag shared by the pool, holding the first error of any worker.

    Once raised, the flag stays up: workers stop pulling jobs, and the
    calling thread stops waiting on jobs that no one will run.

    """

    def __init__(self) -> None:
        self.flag = threading.Event()
        self.error: typing.Optional[BaseException] = None
        self._lock = threading.Lock()

    def record(self, error: BaseException) -> None:
        with self._lock:
            if self.error is None:
                self.error = error
        self.flag.set()

    def stop(self) -> None:
        self.flag.set()

    def check(self) -> None:
        """Re-raise the first recorded error, if any."""
        if self.flag.is_set() and self.error is not None:
            raise self.error


class _Pool(typing.Generic[_T, _R]):

    def __init__(
        self,
        function: typing.Callable[[_T], _R],
        cpus: int,
        callback: typing.Optional[typing.Callable[[_T, int], None]],
    ) -> None:
        self.function = function
        self.callback = callback
        self.cpus = cpus
        self.loaded = 0
        self.abort = _Abort()
        self.jobs: "queue.Queue[typing.Optional[_Job[_T, _R]]]" = queue.Queue(maxsize=cpus)

    def _work(self) -> None:
        while not self.abort.flag.is_set():
            try:
                job = self.jobs.get(timeout=_POLL)
            except queue.Empty:
                continue
            if job is None:
                return
            try:
                result = self.function(job.task)
                if self.callback is not None:
                    self.callback(job.task, self.loaded)
            except BaseException as err:
                self.abort.record(err)
                return
            job.finish(result)

    def _submit(self, item: typing.Optional[_Job[_T, _R]]) -> None:
        while True:
            self.abort.check()
            try:
                self.jobs.put(item, timeout=_POLL)
                return
            except queue.Full:
                continue

    def _collect(self, job: _Job[_T, _R]) -> _R:
        while not job.done.wait(_POLL):
            self.abort.check()
        return typing.cast(_R, job.result)

    def inline(self, tasks: typing.Iterable[_T]) -> typing.Iterator[_R]:
        for task in tasks:
            self.loaded += 1
            result = self.function(task)
            if self.callback is not None:
                self.callback(task, self.loaded)
            yield result

    def threaded(self, tasks: typing.Iterable[_T]) -> typing.Iterator[_R]:
        workers = [threading.Thread(target=self._work, daemon=True) for _ in range(self.cpus)]
        for worker in workers:
            worker.start()
        pending: typing.Deque[_Job[_T, _R]] = collections.deque()
        try:
            for task in tasks:
                self.loaded += 1
                job: _Job[_T, _R] = _Job(task)
                self._submit(job)
                pending.append(job)
                while pending and pending[0].done.is_set():
                    yield typing.cast(_R, pending.popleft().result)
            for _ in workers:
                self._submit(None)
            while pending:
                yield self._collect(pending.popleft())
            self.abort.check()
        finally:
            # also reached on `KeyboardInterrupt` or when the caller
            # closes the generator early
            self.abort.stop()


def imap_ordered(
    function: typing.Callable[[_T], _R],
    tasks: typing.Iterable[_T],
    *,
    cpus: int = 0,
    callback: typing.Optional[typing.Callable[[_T, int], None]] = None,
) -> typing.Iterator[_R]:
    """Apply ``function`` to every task using a pool of threads.

    Arguments:
        function (callable): The function to apply to each task. It is
            called concurrently from several threads, so it must not
            mutate shared state.
        tasks (iterable): The tasks to process.
        cpus (`int`): The number of threads. ``1`` runs everything in the
            calling thread, ``0`` uses one thread per physical core.
        callback (callable): Called after each task with the task and the
            number of tasks submitted so far, to report progress.

    Yields:
        `object`: The result of each task, in the order of ``tasks``.

    Raises:
        `BaseException`: The first exception raised by ``function`` in
            any thread. Tasks still queued at that point are abandoned.

    Example:
        >>> list(imap_ordered(abs, [-3, 1, -2], cpus=2))
        [3, 1, 2]

    """
    cpus = available_cpus(cpus)
    hint = operator.length_hint(tasks, -1)
    if hint >= 0:
        cpus = max(1, min(cpus, hint))
    pool: _Pool[_T, _R] = _Pool(function, cpus, callback)
    return pool.inline(tasks) if cpus == 1 else pool.threaded(tasks)
