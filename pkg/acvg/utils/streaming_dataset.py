import queue
import threading
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from acvg.errors import DataError
from acvg.utils.dataset import ActionNormalizer, ClipBatch, SequenceRecord, build_clip_batch, collate, valid_offsets
from acvg.utils.utils import rng_for

MAX_ITEMS_IN_QUEUE = 8
DONE = "DONE"


def sample_batch(
    clips: Sequence[SequenceRecord], batch_size: int, history: int, horizon: int, rng: np.random.Generator
) -> ClipBatch:
    """Uniform (clip, offset) per batch element."""
    elements = []
    for _ in range(batch_size):
        clip = clips[int(rng.integers(len(clips)))]
        offset = int(rng.integers(valid_offsets(clip, history, horizon)))
        elements.append(build_clip_batch(clip, history, horizon, offset, ActionNormalizer(clip.ranges)))
    return collate(elements)


class BatchStream:
    """Infinite, reproducible stream of training batches.

    Batch i is drawn from its own stream keyed on (seed, phase, i), so the
    sequence is the same whether batches are built inline or by
    `num_workers` background threads. Worker w builds batches i = w (mod
    num_workers) into its own bounded queue; the consumer reads the queues
    round-robin.
    """

    def __init__(
        self,
        clips: Sequence[SequenceRecord],
        batch_size: int,
        history: int,
        horizon: int,
        seed: int,
        phase_key: int = 0,
        num_workers: int = 0,
    ):
        usable = [clip for clip in clips if valid_offsets(clip, history, horizon) > 0]
        if not usable:
            raise DataError(f"no clip holds a window of {history}+{horizon} frames")
        self.clips = usable
        self.batch_size = batch_size
        self.history = history
        self.horizon = horizon
        self.seed = seed
        self.phase_key = phase_key
        self.num_workers = num_workers
        self.index = 0
        self._stop = threading.Event()
        self._queues: list[queue.Queue] = []
        self._threads: list[threading.Thread] = []
        if num_workers > 0:
            self._start()

    def make(self, index: int) -> ClipBatch:
        rng = rng_for(self.seed, self.phase_key, index)
        return sample_batch(self.clips, self.batch_size, self.history, self.horizon, rng)

    def _produce(self, worker: int, out: queue.Queue) -> None:
        index = worker
        while not self._stop.is_set():
            batch = self.make(index)
            while not self._stop.is_set():
                try:
                    out.put(batch, timeout=0.1)
                    break
                except queue.Full:
                    continue
            index += self.num_workers
        try:
            out.put_nowait(DONE)
        except queue.Full:
            pass

    def _start(self) -> None:
        for worker in range(self.num_workers):
            out: queue.Queue = queue.Queue(maxsize=MAX_ITEMS_IN_QUEUE)
            thread = threading.Thread(target=self._produce, args=(worker, out), daemon=True)
            self._queues.append(out)
            self._threads.append(thread)
            thread.start()
        logger.debug(f"Started {self.num_workers} batch prefetch threads.")

    def __iter__(self) -> Iterator[ClipBatch]:
        return self

    def __next__(self) -> ClipBatch:
        if self.num_workers > 0:
            batch = self._queues[self.index % self.num_workers].get()
            if isinstance(batch, str) and batch == DONE:
                raise StopIteration
        else:
            batch = self.make(self.index)
        self.index += 1
        return batch

    def close(self) -> None:
        self._stop.set()
        for out in self._queues:
            # Drain so a blocked producer can observe the stop flag.
            while not out.empty():
                out.get_nowait()
        for thread in self._threads:
            thread.join(timeout=1.0)
        self._threads.clear()

    def __enter__(self) -> "BatchStream":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
