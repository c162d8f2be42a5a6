"""Epoch orchestration in sequential and system-level-pipelined modes.

Both modes run the identical batch sequence through host_stage and the
accelerator kernel in order, so the numeric results are bit-identical; the
modes differ only in overlap. Pipelined mode really overlaps the two stages
(producer thread + depth-1 queue) and additionally books an analytic
latency model, since measured host wall-times are machine-dependent while
the accelerator side is modeled in cycles.
"""

import queue
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import checkpoint as ckpt_mod
from .accelmodel import ResourceBudget, cycles_to_seconds, estimate_pass
from .adam import AdamHyper
from .dataio import load_idx_images, load_idx_labels, make_batches, synthetic_dataset
from .dims import DEFAULT_DIMS, ModelDims
from .hoststage import host_stage
from .neuralcore import ModelState, accel_kernel, accuracy

SEQUENTIAL = "sequential"
PIPELINED = "pipelined"
MODES = (SEQUENTIAL, PIPELINED)


@dataclass
class StageLatency:
    """Per-batch stage costs: measured host seconds, modeled accel cycles."""

    index: int
    host_seconds: float
    accel_cycles: int

    def host_cycles_equiv(self, budget: ResourceBudget):
        return self.host_seconds / (budget.clock_ns * 1e-9)


def sequential_seconds(host_times, accel_times):
    """Total when each stage waits for the other: plain sum."""
    return sum(host_times) + sum(accel_times)


def two_stage_pipeline_seconds(host_times, accel_times):
    """Completion time of a two-stage pipeline with a depth-1 hand-off buffer.

    The producer starts batch k+1 as soon as batch k is in the buffer; the
    buffer accepts a batch once the consumer has taken the previous one.
    Reduces to n*max(h,a) + min(h,a) for constant stage times.
    """
    if len(host_times) != len(accel_times):
        raise ValueError("per-batch time lists differ in length")
    if not host_times:
        return 0.0
    host_start = 0.0
    prev_take = prev_done = 0.0
    for k, (h, a) in enumerate(zip(host_times, accel_times)):
        ready = host_start + h
        place = ready if k == 0 else max(ready, prev_take)
        take = max(place, prev_done)
        done = take + a
        host_start = place  # producer moves on once the batch is buffered
        prev_take, prev_done = take, done
    return prev_done


@dataclass
class EpochResult:
    n_batches: int
    mean_loss: float
    accuracy: float
    host_seconds: float            # measured, sum over batches
    accel_cycles: int              # modeled, sum over batches
    accel_seconds: float           # accel_cycles at the budget clock
    sequential_seconds: float      # analytic: host + accel
    pipelined_seconds: float       # analytic: two-stage overlap
    wall_seconds: float            # actually elapsed
    mode: str
    stage_latencies: list = field(default_factory=list)


def _host_worker(batches, out_q, stop):
    try:
        for batch in batches:
            if stop.is_set():
                break
            t0 = time.perf_counter()
            conv = host_stage(batch)
            dt = time.perf_counter() - t0
            out_q.put(("batch", conv, dt))
        out_q.put(("done", None, 0.0))
    except BaseException as exc:  # surface in the consumer thread
        out_q.put(("error", exc, 0.0))


def run_epoch(batches, state: ModelState, mode, is_training,
              budget: ResourceBudget, dims: ModelDims = DEFAULT_DIMS):
    """Run every batch through host stage + accelerator kernel, in order.

    Weight updates happen in batch order in both modes; only the latency
    accounting and the real overlap differ.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if not batches:
        raise ValueError("empty batch sequence")

    per_batch_cycles = estimate_pass(
        "training" if is_training else "inference", budget, dims).total_cycles
    accel_secs = cycles_to_seconds(per_batch_cycles, budget)

    losses = []
    accs = []
    latencies = []
    wall_start = time.perf_counter()

    if mode == SEQUENTIAL:
        for batch in batches:
            t0 = time.perf_counter()
            conv = host_stage(batch)
            host_dt = time.perf_counter() - t0
            trace, state = accel_kernel(conv, state, is_training)
            losses.append(trace.loss)
            accs.append(accuracy(trace.h2, conv.out_actual))
            latencies.append(StageLatency(batch.index, host_dt, per_batch_cycles))
    else:
        q = queue.Queue(maxsize=1)
        stop = threading.Event()
        worker = threading.Thread(target=_host_worker, args=(batches, q, stop),
                                  daemon=True)
        worker.start()
        try:
            while True:
                tag, payload, host_dt = q.get()
                if tag == "done":
                    break
                if tag == "error":
                    raise payload
                conv = payload
                trace, state = accel_kernel(conv, state, is_training)
                losses.append(trace.loss)
                accs.append(accuracy(trace.h2, conv.out_actual))
                latencies.append(StageLatency(conv.index, host_dt,
                                              per_batch_cycles))
        finally:
            # tell the producer to wind down, and keep draining so one
            # blocked on the full queue can finish
            stop.set()
            while worker.is_alive():
                try:
                    q.get_nowait()
                except queue.Empty:
                    pass
                worker.join(timeout=0.005)

    wall = time.perf_counter() - wall_start
    host_times = [l.host_seconds for l in latencies]
    accel_times = [accel_secs] * len(latencies)
    result = EpochResult(
        n_batches=len(latencies),
        mean_loss=sum(losses) / len(losses),
        accuracy=sum(accs) / len(accs),
        host_seconds=sum(host_times),
        accel_cycles=per_batch_cycles * len(latencies),
        accel_seconds=accel_secs * len(latencies),
        sequential_seconds=sequential_seconds(host_times, accel_times),
        pipelined_seconds=two_stage_pipeline_seconds(host_times, accel_times),
        wall_seconds=wall,
        mode=mode,
        stage_latencies=latencies,
    )
    return state, result


@dataclass
class RunConfig:
    """Everything a run needs; defaults reproduce the reference setup."""

    data_dir: str = None          # directory with IDX files; None -> synthetic
    synthetic_train: int = 2048   # used only when data_dir is None
    synthetic_test: int = 512
    epochs: int = 1
    batch_size: int = 32
    seed: int = 0
    mode: str = PIPELINED
    dims: ModelDims = DEFAULT_DIMS
    hyper: AdamHyper = field(default_factory=AdamHyper)
    budget: ResourceBudget = field(default_factory=ResourceBudget)
    checkpoint_path: str = None
    report_path: str = None

    def as_dict(self):
        return {
            "data_dir": self.data_dir,
            "synthetic_train": self.synthetic_train,
            "synthetic_test": self.synthetic_test,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "mode": self.mode,
            "dims": {
                "batch": self.dims.batch,
                "image_x": self.dims.image_x,
                "image_y": self.dims.image_y,
                "kernel_x": self.dims.kernel_x,
                "kernel_y": self.dims.kernel_y,
                "pool_map": self.dims.pool_map,
                "hidden": self.dims.hidden,
                "classes": self.dims.classes,
            },
            "adam": {"beta1": self.hyper.beta1, "beta2": self.hyper.beta2,
                     "eta": self.hyper.eta, "eps": self.hyper.eps},
            "budget": {
                "max_multipliers": self.budget.max_multipliers,
                "max_adders": self.budget.max_adders,
                "pipeline_depth": self.budget.pipeline_depth,
                "clock_ns": self.budget.clock_ns,
                "interface_cycles_per_word": self.budget.interface_cycles_per_word,
            },
            "checkpoint_path": self.checkpoint_path,
            "report_path": self.report_path,
        }


_IDX_NAMES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def _find_idx(data_dir, stem):
    for name in (stem, stem + ".gz"):
        path = Path(data_dir) / name
        if path.exists():
            return path
    raise FileNotFoundError(
        f"{stem}[.gz] not found in data dir {data_dir}")


def load_datasets(cfg: RunConfig):
    """(train_batches, test_batches) from IDX files or the synthetic fixture."""
    dims = cfg.dims
    if cfg.data_dir is not None:
        if not Path(cfg.data_dir).is_dir():
            raise FileNotFoundError(f"data dir does not exist: {cfg.data_dir}")
        tri = load_idx_images(_find_idx(cfg.data_dir, _IDX_NAMES["train_images"]),
                              dims.image_x, dims.image_y)
        trl = load_idx_labels(_find_idx(cfg.data_dir, _IDX_NAMES["train_labels"]),
                              dims.classes)
        tei = load_idx_images(_find_idx(cfg.data_dir, _IDX_NAMES["test_images"]),
                              dims.image_x, dims.image_y)
        tel = load_idx_labels(_find_idx(cfg.data_dir, _IDX_NAMES["test_labels"]),
                              dims.classes)
    else:
        tri, trl = synthetic_dataset(cfg.seed + 1, cfg.synthetic_train,
                                     dims.image_x, dims.image_y, dims.classes)
        tei, tel = synthetic_dataset(cfg.seed + 2, cfg.synthetic_test,
                                     dims.image_x, dims.image_y, dims.classes)
    return (make_batches(tri, trl, cfg.batch_size),
            make_batches(tei, tel, cfg.batch_size))


@dataclass
class RunReport:
    config: dict
    epochs: list
    latency_model: dict
    schedule_reports: list

    def as_dict(self):
        return {"config": self.config, "epochs": self.epochs,
                "latency_model": self.latency_model,
                "schedule_reports": self.schedule_reports}


def _epoch_entry(epoch, train: EpochResult, test: EpochResult):
    entry = {"epoch": epoch}
    if train is not None:
        entry.update({
            "train_loss": train.mean_loss,
            "train_accuracy": train.accuracy,
            "train_host_seconds": train.host_seconds,
            "train_accel_seconds_modeled": train.accel_seconds,
            "train_sequential_seconds": train.sequential_seconds,
            "train_pipelined_seconds": train.pipelined_seconds,
            "train_wall_seconds": train.wall_seconds,
        })
    entry.update({
        "test_loss": test.mean_loss,
        "test_accuracy": test.accuracy,
        "test_host_seconds": test.host_seconds,
        "test_accel_seconds_modeled": test.accel_seconds,
        "test_sequential_seconds": test.sequential_seconds,
        "test_pipelined_seconds": test.pipelined_seconds,
    })
    return entry


def run_training(cfg: RunConfig) -> RunReport:
    """Train for the configured epoch count, scoring the test set after each
    epoch (test inference is always booked sequentially). Saves a checkpoint
    when a path is configured."""
    train_batches, test_batches = load_datasets(cfg)
    state = ModelState.initial(cfg.seed, cfg.dims, cfg.hyper)

    entries = []
    train_totals = {"host_seconds": 0.0, "accel_seconds": 0.0,
                    "sequential_seconds": 0.0, "pipelined_seconds": 0.0}
    if cfg.epochs == 0:
        state, test_res = run_epoch(test_batches, state, SEQUENTIAL, False,
                                    cfg.budget, cfg.dims)
        entries.append(_epoch_entry(0, None, test_res))
    for epoch in range(1, cfg.epochs + 1):
        state, train_res = run_epoch(train_batches, state, cfg.mode, True,
                                     cfg.budget, cfg.dims)
        state, test_res = run_epoch(test_batches, state, SEQUENTIAL, False,
                                    cfg.budget, cfg.dims)
        entries.append(_epoch_entry(epoch, train_res, test_res))
        train_totals["host_seconds"] += train_res.host_seconds
        train_totals["accel_seconds"] += train_res.accel_seconds
        train_totals["sequential_seconds"] += train_res.sequential_seconds
        train_totals["pipelined_seconds"] += train_res.pipelined_seconds

    train_est = estimate_pass("training", cfg.budget, cfg.dims)
    infer_est = estimate_pass("inference", cfg.budget, cfg.dims)
    latency_model = {
        "clock_ns": cfg.budget.clock_ns,
        "per_batch_cycles_training": train_est.total_cycles,
        "per_batch_cycles_inference": infer_est.total_cycles,
        "train_totals": train_totals,
        "speedup": speedup_summary(train_totals),
    }
    report = RunReport(
        config=cfg.as_dict(),
        epochs=entries,
        latency_model=latency_model,
        schedule_reports=[r.as_dict() for r in train_est.reports],
    )
    if cfg.checkpoint_path:
        ckpt_mod.save_checkpoint(cfg.checkpoint_path, state)
    return report


def speedup_summary(totals):
    """Derived ratios for a phase's latency totals; zero-safe."""
    host = totals.get("host_seconds", 0.0)
    accel = totals.get("accel_seconds", 0.0)
    seq = totals.get("sequential_seconds", 0.0)
    pipe = totals.get("pipelined_seconds", 0.0)
    return {
        "sequential_over_pipelined": (seq / pipe) if pipe > 0 else None,
        "host_over_accel": (host / accel) if accel > 0 else None,
        "bottleneck": ("host" if host >= accel else "accelerator")
                      if (host or accel) else None,
    }
