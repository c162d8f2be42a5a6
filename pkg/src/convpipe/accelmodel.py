"""Cycle/resource model of the accelerator: loop-nest schedules under
unroll + pipeline directives, cyclic-partition port checking, and per-pass
cycle estimates under a shared multiplier/adder cap.

Nothing in this module reads or writes numeric weights or activations;
it only analyses loop structure, so functional results can never depend
on it.

Scheduling semantics
--------------------
A nest is scheduled as `tiles * (II * (K - 1) + depth)` cycles:

* loops outside the pipelined level contribute ceil(trip/unroll) "tiles",
  each of which restarts (and therefore refills) the pipeline;
* loops at or inside the pipelined level contribute K = prod ceil(trip/unroll)
  pipelined body launches per tile;
* the initiation interval II is 1 unless the unrolled body over-subscribes
  the multiplier cap, the adder cap, or a memory bank port, in which case
  launches are spaced by the worst ceil(demand/capacity);
* `depth` covers the launch-to-result latency of the last body.

Ragged edges (unroll not dividing the trip count) are padded: a partial
tile reserves the same resources and cycles as a full one.
"""

import math
from dataclasses import dataclass, field

from .dims import DEFAULT_DIMS

F64_INTERFACE_WORDS = 2  # one float64 crosses the interface as two 32-bit words


@dataclass(frozen=True)
class ResourceBudget:
    max_multipliers: int = 25
    max_adders: int = 25
    pipeline_depth: int = 8
    clock_ns: float = 10.0
    interface_cycles_per_word: int = 2

    def __post_init__(self):
        for name in ("max_multipliers", "max_adders", "pipeline_depth",
                     "clock_ns", "interface_cycles_per_word"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ArrayAccess:
    """One reference to an array inside the unrolled loop body.

    stride_pattern lists the offsets touched along accessed_dim by the body
    replicas of a single launch, e.g. (0, 1, 2, 3) for a 4x unrolled
    stride-1 reference.
    """

    array_name: str
    dim_sizes: tuple
    accessed_dim: int
    stride_pattern: tuple
    kind: str  # "read" | "write"

    def __post_init__(self):
        if self.kind not in ("read", "write"):
            raise ValueError(f"kind must be read or write, got {self.kind!r}")
        if not 0 <= self.accessed_dim < len(self.dim_sizes):
            raise ValueError(f"accessed_dim {self.accessed_dim} out of range "
                             f"for dims {self.dim_sizes}")
        size = self.dim_sizes[self.accessed_dim]
        for off in self.stride_pattern:
            if not 0 <= off < size:
                raise ValueError(f"offset {off} outside dim of size {size} "
                                 f"({self.array_name})")


@dataclass(frozen=True)
class PartitionSpec:
    """Bank split of one array dimension. Cyclic assigns index i to bank
    i mod factor; complete gives every index its own bank."""

    array_name: str
    dim: int
    factor: int
    style: str = "cyclic"  # "cyclic" | "complete"
    ports_per_bank: int = 2  # 2 = dual port (1 read + 1 write), 1 = single

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"partition factor must be >= 1, got {self.factor}")
        if self.style not in ("cyclic", "complete"):
            raise ValueError(f"unknown partition style {self.style!r}")
        if self.ports_per_bank not in (1, 2):
            raise ValueError("ports_per_bank must be 1 or 2")


@dataclass(frozen=True)
class LoopNestSpec:
    name: str
    trip_counts: tuple
    unroll_factors: tuple
    pipelined_level: int
    accesses: tuple = ()
    mults_per_body: int = 0
    adds_per_body: int = 0

    def __post_init__(self):
        if len(self.trip_counts) != len(self.unroll_factors):
            raise ValueError("trip_counts and unroll_factors differ in length")
        if not self.trip_counts:
            raise ValueError("empty loop nest")
        if any(t <= 0 for t in self.trip_counts):
            raise ValueError(f"zero or negative trip count in {self.trip_counts}")
        if any(u < 1 for u in self.unroll_factors):
            raise ValueError(f"unroll factors must be >= 1: {self.unroll_factors}")
        if not 0 <= self.pipelined_level < len(self.trip_counts):
            raise ValueError(f"pipelined_level {self.pipelined_level} out of range")

    def clamped_unrolls(self):
        # unroll beyond the trip count buys nothing; clamp it
        return tuple(min(u, t) for u, t in zip(self.unroll_factors,
                                               self.trip_counts))


@dataclass(frozen=True)
class BankConflict:
    array_name: str
    dim: int
    bank: int
    kind: str
    excess: int  # accesses beyond what the bank's ports serve in one cycle


@dataclass
class ConflictReport:
    conflicts: list
    stall_cycles: int  # cycles needed to serialize the worst bank, >= 1


@dataclass
class ScheduleReport:
    name: str
    cycles: int
    effective_ii: int
    tiles: int
    launches_per_tile: int
    multipliers_demanded: int
    adders_demanded: int
    multipliers_used: int
    adders_used: int
    stall_events: list = field(default_factory=list)

    def as_dict(self):
        return {
            "name": self.name,
            "cycles": self.cycles,
            "effective_ii": self.effective_ii,
            "tiles": self.tiles,
            "launches_per_tile": self.launches_per_tile,
            "multipliers_demanded": self.multipliers_demanded,
            "adders_demanded": self.adders_demanded,
            "multipliers_used": self.multipliers_used,
            "adders_used": self.adders_used,
            "stall_events": [
                {"array": c.array_name, "dim": c.dim, "bank": c.bank,
                 "kind": c.kind, "excess": c.excess}
                for c in self.stall_events
            ],
        }


@dataclass(frozen=True)
class StorageAssignment:
    array_name: str
    storage_class: str  # "fast-uram" | "block-ram" | "interface-register"
    words: int          # float64 element count


@dataclass
class StoragePlan:
    assignments: dict  # array_name -> StorageAssignment

    def totals(self):
        out = {}
        for a in self.assignments.values():
            out[a.storage_class] = out.get(a.storage_class, 0) + a.words
        return out


def cyclic_bank(index, factor):
    """Map a flat index to (bank, offset-within-bank) under cyclic split."""
    if factor < 1:
        raise ValueError(f"partition factor must be >= 1, got {factor}")
    if index < 0:
        raise ValueError(f"index must be >= 0, got {index}")
    return index % factor, index // factor


def _partition_lookup(partitions):
    by_dim = {}
    arrays = set()
    for p in partitions:
        arrays.add(p.array_name)
        by_dim[(p.array_name, p.dim)] = p
    return by_dim, arrays


def check_port_conflicts(accesses, partitions) -> ConflictReport:
    """Count same-bank accesses of each kind within one body launch.

    Accesses are grouped by (array, dimension): references that spread along
    the same partitioned dimension contend for the same banks and their
    pattern offsets are assumed base-aligned. Dual-port banks serve one read
    and one write per cycle; single-port banks serve one access total.
    """
    by_dim, arrays = _partition_lookup(partitions)
    groups = {}
    for acc in accesses:
        if acc.array_name not in arrays:
            raise ValueError(f"array {acc.array_name!r} referenced but has no "
                             f"partition spec (factor 1 is allowed)")
        part = by_dim.get((acc.array_name, acc.accessed_dim))
        if part is not None and part.style == "complete" \
                and part.factor != acc.dim_sizes[part.dim]:
            raise ValueError(
                f"complete partition of {acc.array_name} dim {part.dim} has "
                f"factor {part.factor} != dim size {acc.dim_sizes[part.dim]}")
        groups.setdefault((acc.array_name, acc.accessed_dim), []).append(acc)

    conflicts = []
    worst = 1
    for (name, dim), group in sorted(groups.items()):
        part = by_dim.get((name, dim))
        factor = part.factor if part is not None else 1
        ports = part.ports_per_bank if part is not None else 2
        if ports == 2:
            kinds = ("read", "write")
        else:
            kinds = ("access",)  # single port: reads and writes share it
        for kind in kinds:
            counts = {}
            for acc in group:
                if ports == 2 and acc.kind != kind:
                    continue
                for off in acc.stride_pattern:
                    bank, _ = cyclic_bank(off, factor)
                    counts[bank] = counts.get(bank, 0) + 1
            for bank in sorted(counts):
                n = counts[bank]
                worst = max(worst, n)
                if n > 1:
                    conflicts.append(BankConflict(name, dim, bank, kind, n - 1))
    return ConflictReport(conflicts, worst)


def schedule(nest: LoopNestSpec, partitions, budget: ResourceBudget) -> ScheduleReport:
    """Cycle estimate for one nest under the budget. See the module docstring
    for the exact semantics; tests hold this to exact agreement with an
    event-driven simulation."""
    unrolls = nest.clamped_unrolls()
    body_copies = math.prod(unrolls)
    mult_demand = nest.mults_per_body * body_copies
    add_demand = nest.adds_per_body * body_copies

    if nest.accesses:
        report = check_port_conflicts(nest.accesses, partitions)
        stall = report.stall_cycles
        events = report.conflicts
    else:
        stall, events = 1, []

    ii = max(1,
             math.ceil(mult_demand / budget.max_multipliers),
             math.ceil(add_demand / budget.max_adders),
             stall)

    per_level = [math.ceil(t / u) for t, u in zip(nest.trip_counts, unrolls)]
    tiles = math.prod(per_level[:nest.pipelined_level]) if nest.pipelined_level else 1
    launches = math.prod(per_level[nest.pipelined_level:])
    cycles = tiles * (ii * (launches - 1) + budget.pipeline_depth)

    return ScheduleReport(
        name=nest.name,
        cycles=cycles,
        effective_ii=ii,
        tiles=tiles,
        launches_per_tile=launches,
        multipliers_demanded=mult_demand,
        adders_demanded=add_demand,
        multipliers_used=min(mult_demand, budget.max_multipliers),
        adders_used=min(add_demand, budget.max_adders),
        stall_events=events,
    )


def model_transfer(words, budget: ResourceBudget):
    """Interface cost: every 32-bit word pays the same per-word cycle price."""
    if words < 0:
        raise ValueError(f"words must be >= 0, got {words}")
    return words * budget.interface_cycles_per_word


def f64_words(count):
    return count * F64_INTERFACE_WORDS


def cycles_to_seconds(cycles, budget: ResourceBudget):
    return cycles * budget.clock_ns * 1e-9


# ---------------------------------------------------------------------------
# Default nest/partition/storage configuration for the reference model.
#
# Unroll/partition choices: the batch, feature and hidden dimensions are
# unrolled and cyclically partitioned by 4; the class dimension is fully
# unrolled and completely partitioned. Per-body op counts are coarse
# (divide/sqrt/exp are billed to the multiplier class).
# ---------------------------------------------------------------------------

BATCH_UNROLL = 4
HIDDEN_UNROLL = 4

# arrays whose second dimension is the class axis (completely partitioned)
_CLASS_DIM_ARRAYS = {"W2", "h2", "outActual", "dZ", "gW2", "mW2", "vW2"}


def _pipeline_level(unrolls):
    # innermost loop left un-unrolled; if all are unrolled, the innermost
    last_plain = [i for i, u in enumerate(unrolls) if u == 1]
    return last_plain[-1] if last_plain else len(unrolls) - 1


def default_partitions(dims=DEFAULT_DIMS):
    """Partition specs for every array the default nests touch."""
    b, p, h, c = 4, 4, 4, dims.classes
    specs = []

    def cyc(name, *factors):
        for d, f in enumerate(factors):
            style = "complete" if name in _CLASS_DIM_ARRAYS and d == 1 \
                and f == dims.classes else "cyclic"
            specs.append(PartitionSpec(name, d, f, style))

    cyc("v", b, p)
    cyc("W1", p, h)
    cyc("h1", b, h)
    cyc("W2", h, c)
    cyc("h2", b, c)
    cyc("outActual", b, c)
    cyc("dZ", b, c)
    cyc("dH1", b, h)
    cyc("gW1", p, h)
    cyc("gW2", h, c)
    cyc("mW1", p, h)
    cyc("vW1", p, h)
    cyc("mW2", h, c)
    cyc("vW2", h, c)
    return specs


def _rw(name, dim_sizes, dim, unroll):
    offs = tuple(range(unroll))
    return (ArrayAccess(name, dim_sizes, dim, offs, "read"),
            ArrayAccess(name, dim_sizes, dim, offs, "write"))


def _rd(name, dim_sizes, dim, unroll):
    return (ArrayAccess(name, dim_sizes, dim, tuple(range(unroll)), "read"),)


def fc_forward_nest(dims=DEFAULT_DIMS, unroll=(BATCH_UNROLL, HIDDEN_UNROLL)):
    """Hidden-layer matmul: batch x hidden x feature, MAC body."""
    ub, uh = unroll
    v_dims = (dims.batch, dims.pool_map)
    w1_dims = (dims.pool_map, dims.hidden)
    h1_dims = (dims.batch, dims.hidden)
    unrolls = (ub, uh, 1)
    return LoopNestSpec(
        name="fc_forward",
        trip_counts=(dims.batch, dims.hidden, dims.pool_map),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd("v", v_dims, 0, ub),
                  *_rd("W1", w1_dims, 1, uh),
                  *_rw("h1", h1_dims, 0, ub),
                  *_rw("h1", h1_dims, 1, uh)),
        mults_per_body=1,
        adds_per_body=1,
    )


def out_forward_nest(dims=DEFAULT_DIMS):
    """Output-layer matmul: batch x class x hidden, MAC body; the class loop
    is fully unrolled."""
    ub, uc = BATCH_UNROLL, dims.classes
    h1_dims = (dims.batch, dims.hidden)
    w2_dims = (dims.hidden, dims.classes)
    h2_dims = (dims.batch, dims.classes)
    unrolls = (ub, uc, 1)
    return LoopNestSpec(
        name="out_forward",
        trip_counts=(dims.batch, dims.classes, dims.hidden),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd("h1", h1_dims, 0, ub),
                  *_rd("W2", w2_dims, 1, uc),
                  *_rw("h2", h2_dims, 0, ub),
                  *_rw("h2", h2_dims, 1, uc)),
        mults_per_body=1,
        adds_per_body=1,
    )


def softmax_loss_nest(dims=DEFAULT_DIMS):
    """Elementwise normalization + loss accumulation over the output block."""
    ub, uc = BATCH_UNROLL, dims.classes
    h2_dims = (dims.batch, dims.classes)
    unrolls = (ub, uc)
    return LoopNestSpec(
        name="softmax_loss",
        trip_counts=(dims.batch, dims.classes),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rw("h2", h2_dims, 0, ub),
                  *_rw("h2", h2_dims, 1, uc),
                  *_rd("outActual", h2_dims, 0, ub),
                  *_rd("outActual", h2_dims, 1, uc)),
        mults_per_body=2,  # exp + normalize divide
        adds_per_body=2,   # exponential-sum and loss accumulators
    )


def delta_out_nest(dims=DEFAULT_DIMS):
    ub, uc = BATCH_UNROLL, dims.classes
    d = (dims.batch, dims.classes)
    unrolls = (ub, uc)
    return LoopNestSpec(
        name="delta_out",
        trip_counts=(dims.batch, dims.classes),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd("h2", d, 0, ub), *_rd("h2", d, 1, uc),
                  *_rd("outActual", d, 0, ub), *_rd("outActual", d, 1, uc),
                  ArrayAccess("dZ", d, 0, tuple(range(ub)), "write"),
                  ArrayAccess("dZ", d, 1, tuple(range(uc)), "write")),
        mults_per_body=1,  # scale by 1/batch
        adds_per_body=1,   # subtract
    )


def grad_w2_nest(dims=DEFAULT_DIMS):
    uh, uc = HIDDEN_UNROLL, dims.classes
    h1_dims = (dims.batch, dims.hidden)
    dz_dims = (dims.batch, dims.classes)
    g_dims = (dims.hidden, dims.classes)
    unrolls = (uh, uc, 1)
    return LoopNestSpec(
        name="grad_w2",
        trip_counts=(dims.hidden, dims.classes, dims.batch),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd("h1", h1_dims, 1, uh),
                  *_rd("dZ", dz_dims, 1, uc),
                  *_rw("gW2", g_dims, 0, uh),
                  *_rw("gW2", g_dims, 1, uc)),
        mults_per_body=1,
        adds_per_body=1,
    )


def delta_hidden_nest(dims=DEFAULT_DIMS):
    ub, uh = BATCH_UNROLL, HIDDEN_UNROLL
    dz_dims = (dims.batch, dims.classes)
    w2_dims = (dims.hidden, dims.classes)
    dh_dims = (dims.batch, dims.hidden)
    unrolls = (ub, uh, 1)
    return LoopNestSpec(
        name="delta_hidden",
        trip_counts=(dims.batch, dims.hidden, dims.classes),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd("dZ", dz_dims, 0, ub),
                  *_rd("W2", w2_dims, 0, uh),
                  *_rd("h1", dh_dims, 0, ub),  # activation mask
                  *_rd("h1", dh_dims, 1, uh),
                  *_rw("dH1", dh_dims, 0, ub),
                  *_rw("dH1", dh_dims, 1, uh)),
        mults_per_body=1,
        adds_per_body=1,
    )


def grad_w1_nest(dims=DEFAULT_DIMS):
    up, uh = 4, HIDDEN_UNROLL
    v_dims = (dims.batch, dims.pool_map)
    dh_dims = (dims.batch, dims.hidden)
    g_dims = (dims.pool_map, dims.hidden)
    unrolls = (up, uh, 1)
    return LoopNestSpec(
        name="grad_w1",
        trip_counts=(dims.pool_map, dims.hidden, dims.batch),
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd("v", v_dims, 1, up),
                  *_rd("dH1", dh_dims, 1, uh),
                  *_rw("gW1", g_dims, 0, up),
                  *_rw("gW1", g_dims, 1, uh)),
        mults_per_body=1,
        adds_per_body=1,
    )


def _adam_nests_for(layer, trips, unrolls, g, m, v, w, dims):
    sizes = trips
    moments = LoopNestSpec(
        name=f"adam_moments_{layer}",
        trip_counts=trips,
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd(g, sizes, 0, unrolls[0]), *_rd(g, sizes, 1, unrolls[1]),
                  *_rw(m, sizes, 0, unrolls[0]), *_rw(m, sizes, 1, unrolls[1]),
                  *_rw(v, sizes, 0, unrolls[0]), *_rw(v, sizes, 1, unrolls[1])),
        mults_per_body=5,  # two decays, two blends, one square
        adds_per_body=2,
    )
    apply_ = LoopNestSpec(
        name=f"adam_apply_{layer}",
        trip_counts=trips,
        unroll_factors=unrolls,
        pipelined_level=_pipeline_level(unrolls),
        accesses=(*_rd(m, sizes, 0, unrolls[0]), *_rd(m, sizes, 1, unrolls[1]),
                  *_rd(v, sizes, 0, unrolls[0]), *_rd(v, sizes, 1, unrolls[1]),
                  *_rw(w, sizes, 0, unrolls[0]), *_rw(w, sizes, 1, unrolls[1])),
        mults_per_body=5,  # two corrections, sqrt, divide, learning-rate scale
        adds_per_body=2,
    )
    return [moments, apply_]


def inference_nests(dims=DEFAULT_DIMS, fc_unroll=None):
    fc = fc_forward_nest(dims) if fc_unroll is None \
        else fc_forward_nest(dims, fc_unroll)
    return [fc, out_forward_nest(dims), softmax_loss_nest(dims)]


def training_nests(dims=DEFAULT_DIMS):
    nests = [delta_out_nest(dims), grad_w2_nest(dims), delta_hidden_nest(dims),
             grad_w1_nest(dims)]
    nests += _adam_nests_for("w2", (dims.hidden, dims.classes),
                             (HIDDEN_UNROLL, dims.classes),
                             "gW2", "mW2", "vW2", "W2", dims)
    nests += _adam_nests_for("w1", (dims.pool_map, dims.hidden),
                             (4, HIDDEN_UNROLL),
                             "gW1", "mW1", "vW1", "W1", dims)
    return nests


def default_storage_plan(dims=DEFAULT_DIMS, mode="training") -> StoragePlan:
    """Storage classes: weights in the fast RAM tier, on-chip intermediates in
    block RAM, host-transferred blocks in interface registers."""
    b, p, h, c = dims.batch, dims.pool_map, dims.hidden, dims.classes
    entries = [
        StorageAssignment("W1", "fast-uram", p * h),
        StorageAssignment("W2", "fast-uram", h * c),
        StorageAssignment("h1", "block-ram", b * h),
        StorageAssignment("h2", "block-ram", b * c),
        StorageAssignment("v", "interface-register", b * p),
        StorageAssignment("outActual", "interface-register", b * c),
    ]
    if mode == "training":
        entries += [
            StorageAssignment("dZ", "block-ram", b * c),
            StorageAssignment("dH1", "block-ram", b * h),
            StorageAssignment("gW1", "block-ram", p * h),
            StorageAssignment("gW2", "block-ram", h * c),
            StorageAssignment("mW1", "block-ram", p * h),
            StorageAssignment("vW1", "block-ram", p * h),
            StorageAssignment("mW2", "block-ram", h * c),
            StorageAssignment("vW2", "block-ram", h * c),
        ]
    return StoragePlan({e.array_name: e for e in entries})


@dataclass
class PassEstimate:
    mode: str
    reports: list            # ScheduleReport per nest, in execution order
    transfer_cycles: int
    compute_cycles: int
    total_cycles: int
    peak_multipliers: int
    peak_adders: int
    storage: StoragePlan
    storage_totals: dict

    def seconds(self, budget: ResourceBudget):
        return cycles_to_seconds(self.total_cycles, budget)

    def as_dict(self):
        return {
            "mode": self.mode,
            "transfer_cycles": self.transfer_cycles,
            "compute_cycles": self.compute_cycles,
            "total_cycles": self.total_cycles,
            "peak_multipliers": self.peak_multipliers,
            "peak_adders": self.peak_adders,
            "storage_totals": dict(self.storage_totals),
            "nests": [r.as_dict() for r in self.reports],
        }


def estimate_pass(mode, budget: ResourceBudget, dims=DEFAULT_DIMS,
                  fc_unroll=None) -> PassEstimate:
    """Per-batch accelerator cycles for one inference or training pass.

    Sums the constituent nest schedules plus the interface transfers for the
    feature block and label block in and the output block back out.
    """
    if mode not in ("inference", "training"):
        raise ValueError(f"mode must be inference or training, got {mode!r}")
    nests = inference_nests(dims, fc_unroll)
    if mode == "training":
        nests += training_nests(dims)
    partitions = default_partitions(dims)
    reports = [schedule(nest, partitions, budget) for nest in nests]

    words = f64_words(dims.batch * dims.pool_map)   # features in
    words += f64_words(dims.batch * dims.classes)   # labels in
    words += f64_words(dims.batch * dims.classes)   # probabilities out
    transfer = model_transfer(words, budget)

    compute = sum(r.cycles for r in reports)
    plan = default_storage_plan(dims, mode)
    return PassEstimate(
        mode=mode,
        reports=reports,
        transfer_cycles=transfer,
        compute_cycles=compute,
        total_cycles=compute + transfer,
        peak_multipliers=max(r.multipliers_used for r in reports),
        peak_adders=max(r.adders_used for r in reports),
        storage=plan,
        storage_totals=plan.totals(),
    )
