import multiprocessing as mp
import os
from dataclasses import replace
from typing import Sequence

from loguru import logger

from acvg.environment.world import simulate_sequence
from acvg.errors import ConfigError, SequenceLengthError
from acvg.utils.config import WorldConfig
from acvg.utils.storage import save_sequence, split_names, write_manifest
from acvg.utils.utils import seed_sequence, timer

NUM_CORES = mp.cpu_count()


def sequence_dir_name(index: int) -> str:
    return f"seq_{index:05d}"


def simulate_sequences(indices: Sequence[int], cfg: WorldConfig, length: int, out_dir: str) -> None:
    """Worker body: each sequence gets its own seed stream and directory."""
    for i in indices:
        record = replace(simulate_sequence(cfg, seed_sequence(cfg.seed, i), length), name=sequence_dir_name(i))
        save_sequence(out_dir, record)
        logger.debug(f"WP {os.getpid()} wrote {record.name}.")


@timer(logger)
def generate_dataset(cfg: WorldConfig, count: int, length: int, out_dir: str, workers: int = 0) -> list[str]:
    """Simulate `count` sequences into `out_dir` and write the 20:5 manifest.

    With `workers` > 1 the sequences are split round-robin across processes;
    the files are identical to a serial run.
    """
    if length < 2:
        raise SequenceLengthError(f"sequences need at least 2 frames, got {length}")
    if count < 1:
        raise ConfigError(f"at least one sequence is needed, got {count}")
    os.makedirs(out_dir, exist_ok=True)

    indices = list(range(count))
    workers = min(workers, NUM_CORES, count)
    if workers > 1:
        context = mp.get_context("fork")
        processes = [
            context.Process(target=simulate_sequences, args=(indices[w::workers], cfg, length, out_dir))
            for w in range(workers)
        ]
        for i, process in enumerate(processes):
            logger.info(f"Starting worker {i}")
            process.start()
        for process in processes:
            process.join()
        failed = [p.exitcode for p in processes if p.exitcode != 0]
        if failed:
            raise RuntimeError(f"{len(failed)} generation workers failed (exit codes {failed})")
    else:
        simulate_sequences(indices, cfg, length, out_dir)

    names = [sequence_dir_name(i) for i in indices]
    write_manifest(out_dir, split_names(names))
    logger.info(f"Finished generating {count} sequences of {length} frames in {out_dir}.")
    return names
