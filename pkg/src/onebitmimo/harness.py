"""Seeded Monte Carlo BER and channel-MSE sweeps over SNR.

Every trial derives its own generator from (master_seed, SNR bits, trial
index), so results are reproducible and independent of execution order or the
number of workers. Within a trial all receiver chains consume the same
channel, pilots, noise, and payload, which makes chain comparisons paired.
Aggregation is a fixed-order reduction over trial indices, so the exported
CSV is byte-identical for any worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import chest, detect
from .airlink import (
    SystemConfig,
    draw_channel,
    modulate,
    noise_from_snr,
    random_payload_bits,
    transmit,
)
from .chest import ChestParams, generate_pilots
from .detect import DetectorParams

CHAIN_ZF_ZF_1BIT = "ZF-CHEST+ZF-DET (1-bit)"
CHAIN_ZF_ZF_INF = "ZF-CHEST+ZF-DET (infinite-resolution)"
CHAIN_ZF_1BOX = "ZF-CHEST+1BOX"
CHAIN_NGD_1BOX = "NGD-CHEST+1BOX"
CHAIN_PERFECT_1BOX = "perfect-CSI+1BOX"
CHAIN_NGD_1BOX_FP = "NGD-CHEST+1BOX-fixed-point"

ALL_CHAINS = (
    CHAIN_ZF_ZF_1BIT,
    CHAIN_ZF_ZF_INF,
    CHAIN_ZF_1BOX,
    CHAIN_NGD_1BOX,
    CHAIN_PERFECT_1BOX,
    CHAIN_NGD_1BOX_FP,
)

ESTIMATOR_PERFECT = "perfect-CSI"
ESTIMATOR_ZF_RAW = "ZF-CHEST raw"
ESTIMATOR_ZF = "ZF-CHEST+TDMLE"
ESTIMATOR_NGD = "NGD-CHEST+TDMLE"

ALL_ESTIMATORS = (ESTIMATOR_PERFECT, ESTIMATOR_ZF_RAW, ESTIMATOR_ZF, ESTIMATOR_NGD)

CSV_HEADER = "chain,snr_db,bits,errors,ber,mse,trials,seed"


@dataclass(frozen=True)
class SweepSpec:
    """Everything needed to reproduce one Monte Carlo experiment."""

    system: SystemConfig = field(default_factory=SystemConfig)
    snr_points_db: tuple[float, ...] = tuple(np.arange(-10.0, 15.1, 2.5))
    trials: int = 200
    chains: tuple[str, ...] = ALL_CHAINS
    detector: DetectorParams = field(default_factory=DetectorParams)
    detector_fp: DetectorParams = field(default_factory=detect.hardware_params)
    chest: ChestParams = field(default_factory=ChestParams)
    data_symbols: int | None = None
    master_seed: int = 0

    def __post_init__(self):
        if self.trials < 0:
            raise ValueError("trials must be >= 0")
        unknown = set(self.chains) - set(ALL_CHAINS)
        if unknown:
            raise ValueError(f"unknown chains: {sorted(unknown)}")

    @property
    def frames_per_trial(self) -> int:
        n = self.system.data_symbols if self.data_symbols is None else self.data_symbols
        return max(n, 1)


def trial_rng(master_seed: int, snr_db: float, trial_index: int) -> np.random.Generator:
    """Deterministic per-trial generator keyed by seed, SNR value, and trial."""
    snr_key = int(np.float64(snr_db).view(np.uint64))
    return np.random.default_rng(np.random.SeedSequence([master_seed, snr_key, trial_index]))


@dataclass
class ChainCount:
    errors: int = 0
    bits: int = 0
    mse_sum: float = 0.0
    mse_trials: int = 0
    wall_seconds: float = 0.0

    def add(self, other: "ChainCount") -> None:
        self.errors += other.errors
        self.bits += other.bits
        self.mse_sum += other.mse_sum
        self.mse_trials += other.mse_trials
        self.wall_seconds += other.wall_seconds


def _relative_mse(estimate: np.ndarray, truth: np.ndarray,
                  cfg: SystemConfig) -> float:
    """Per-antenna squared error over channel energy, on the used subcarriers.

    Estimators only produce the rows the detectors consume, so guard rows are
    excluded from both numerator and reference.
    """
    used = cfg.used_indices
    err = np.linalg.norm(estimate[:, used] - truth[:, used], axis=(1, 2)) ** 2
    ref = np.linalg.norm(truth[:, used], axis=(1, 2)) ** 2
    return float(np.mean(err / ref))


def _needed_estimators(chains) -> set[str]:
    needed = set()
    for chain in chains:
        if chain in (CHAIN_ZF_ZF_1BIT, CHAIN_ZF_1BOX):
            needed.add("zf_1bit")
        if chain == CHAIN_ZF_ZF_INF:
            needed.add("zf_inf")
        if chain in (CHAIN_NGD_1BOX, CHAIN_NGD_1BOX_FP):
            needed.add("ngd")
    return needed


def run_trial(spec: SweepSpec, snr_db: float, trial_index: int) -> dict[str, ChainCount]:
    """One channel realization: training, estimation, and paired detection.

    Returns per-chain error counts; chain failures are recorded as fully
    erroneous bits for that chain without aborting the others.
    """
    cfg = spec.system
    rng = trial_rng(spec.master_seed, snr_db, trial_index)
    n0 = noise_from_snr(snr_db, cfg)
    sigma = math.sqrt(n0)

    channel = draw_channel(cfg, rng)
    pilots = generate_pilots(cfg, rng)
    while not chest.pilots_usable(pilots, cfg):  # collinear pilot columns: redraw
        pilots = generate_pilots(cfg, rng)
    train_unquantized, train_bits = transmit(
        pilots.frames.transpose(1, 2, 0), channel, n0, rng)
    payload = random_payload_bits(cfg, rng, spec.frames_per_trial)
    frames = [modulate(payload[n], cfg) for n in range(spec.frames_per_trial)]
    data = [transmit(f.symbols, channel, n0, rng) for f in frames]

    estimators: dict[str, np.ndarray] = {}
    est_wall: dict[str, float] = {}
    for name in _needed_estimators(spec.chains):
        start = time.perf_counter()
        if name == "zf_1bit":
            estimators[name] = chest.estimate_channel(
                train_bits, pilots, sigma, cfg, "zf", spec.chest)
        elif name == "zf_inf":
            estimators[name] = chest.estimate_channel(
                train_unquantized, pilots, sigma, cfg, "zf", spec.chest)
        else:
            estimators[name] = chest.estimate_channel(
                train_bits, pilots, sigma, cfg, "ngd", spec.chest)
        est_wall[name] = time.perf_counter() - start

    chain_setup = {
        CHAIN_ZF_ZF_1BIT: ("zf_1bit", "zf", False),
        CHAIN_ZF_ZF_INF: ("zf_inf", "zf", False),
        CHAIN_ZF_1BOX: ("zf_1bit", "onebox", False),
        CHAIN_NGD_1BOX: ("ngd", "onebox", False),
        CHAIN_PERFECT_1BOX: (None, "onebox", False),
        CHAIN_NGD_1BOX_FP: ("ngd", "onebox", True),
    }

    out: dict[str, ChainCount] = {}
    for chain in spec.chains:
        est_name, detector_kind, fixed_point = chain_setup[chain]
        count = ChainCount()
        start = time.perf_counter()
        est = channel.per_antenna if est_name is None else estimators[est_name]
        if est_name is None:
            count.mse_sum += 0.0
        else:
            count.mse_sum += _relative_mse(est, channel.per_antenna, cfg)
        count.mse_trials += 1
        for n in range(spec.frames_per_trial):
            unquantized, bits_rx = data[n]
            try:
                if detector_kind == "zf":
                    rx = unquantized if chain == CHAIN_ZF_ZF_INF else bits_rx
                    result = detect.zf_detect(rx, est, cfg)
                else:
                    params = spec.detector_fp if fixed_point else spec.detector
                    result = detect.onebox_detect(bits_rx, est, sigma, cfg, params)
                errors = int(np.count_nonzero(result.bits ^ payload[n]))
            except Exception:
                errors = int(payload[n].size)
            count.errors += errors
            count.bits += int(payload[n].size)
        count.wall_seconds = time.perf_counter() - start + est_wall.get(est_name, 0.0)
        out[chain] = count
    return out


def estimator_trial(spec: SweepSpec, snr_db: float, trial_index: int) -> dict[str, ChainCount]:
    """One realization of the channel-estimation comparison."""
    cfg = spec.system
    rng = trial_rng(spec.master_seed, snr_db, trial_index)
    n0 = noise_from_snr(snr_db, cfg)
    sigma = math.sqrt(n0)
    channel = draw_channel(cfg, rng)
    pilots = generate_pilots(cfg, rng)
    while not chest.pilots_usable(pilots, cfg):  # collinear pilot columns: redraw
        pilots = generate_pilots(cfg, rng)
    train_unquantized, train_bits = transmit(
        pilots.frames.transpose(1, 2, 0), channel, n0, rng)

    raw_params = replace(spec.chest, denoise=False)
    out: dict[str, ChainCount] = {}
    for name in ALL_ESTIMATORS:
        count = ChainCount()
        start = time.perf_counter()
        if name == ESTIMATOR_PERFECT:
            est = channel.per_antenna
        elif name == ESTIMATOR_ZF_RAW:
            est = chest.estimate_channel(train_bits, pilots, sigma, cfg, "zf", raw_params)
        elif name == ESTIMATOR_ZF:
            est = chest.estimate_channel(train_bits, pilots, sigma, cfg, "zf", spec.chest)
        else:
            est = chest.estimate_channel(train_bits, pilots, sigma, cfg, "ngd", spec.chest)
        count.mse_sum = _relative_mse(est, channel.per_antenna, cfg)
        count.mse_trials = 1
        count.wall_seconds = time.perf_counter() - start
        out[name] = count
    return out


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    chain: str
    snr_db: float
    bits: int
    errors: int
    ber: float | None
    mse: float | None
    trials: int
    seed: int
    wall_seconds: float = 0.0


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[ResultRow, ...]
    spec: SweepSpec
    kind: str  # "ber" or "chest-mse"

    def row(self, chain: str, snr_db: float) -> ResultRow:
        for row in self.rows:
            if row.chain == chain and row.snr_db == snr_db:
                return row
        raise KeyError((chain, snr_db))

    def series(self, chain: str) -> tuple[np.ndarray, np.ndarray]:
        """(snr, ber-or-mse) arrays for one chain, in sweep order."""
        rows = [r for r in self.rows if r.chain == chain]
        values = [r.ber if self.kind == "ber" else r.mse for r in rows]
        return (np.array([r.snr_db for r in rows]),
                np.array([math.nan if v is None else v for v in values]))


def _run_grid(spec: SweepSpec, names, trial_fn, workers: int):
    """Fixed-order reduction of per-trial counts over the (snr, trial) grid."""
    rows = []
    if spec.trials == 0:  # an empty sweep has no rows, only the header
        return rows
    for snr_db in spec.snr_points_db:
        totals = {name: ChainCount() for name in names}
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(
                    lambda t: trial_fn(spec, snr_db, t), range(spec.trials)))
        else:
            results = [trial_fn(spec, snr_db, t) for t in range(spec.trials)]
        for per_chain in results:  # trial order, so float sums are reproducible
            for name in names:
                totals[name].add(per_chain[name])
        for name in names:
            c = totals[name]
            rows.append(ResultRow(
                chain=name, snr_db=float(snr_db), bits=c.bits, errors=c.errors,
                ber=(c.errors / c.bits) if c.bits else None,
                mse=(c.mse_sum / c.mse_trials) if c.mse_trials else None,
                trials=spec.trials, seed=spec.master_seed,
                wall_seconds=c.wall_seconds))
    return rows


def ber_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Aggregate run_trial over all SNR points and trials."""
    rows = _run_grid(spec, spec.chains, run_trial, workers)
    return SweepResult(rows=tuple(rows), spec=spec, kind="ber")


def chest_mse_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    """Aggregate estimator_trial over all SNR points and trials."""
    rows = _run_grid(spec, ALL_ESTIMATORS, estimator_trial, workers)
    return SweepResult(rows=tuple(rows), spec=spec, kind="chest-mse")


# ---------------------------------------------------------------------------
# Statistics helpers
# ---------------------------------------------------------------------------

def wilson_interval(errors: int, bits: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial rate."""
    if bits <= 0:
        return (0.0, 1.0)
    p = errors / bits
    denom = 1.0 + z * z / bits
    center = (p + z * z / (2 * bits)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / bits + z * z / (4 * bits * bits))
    return (max(0.0, center - half), min(1.0, center + half))


def snr_at_ber(snrs: np.ndarray, bers: np.ndarray, target: float) -> float | None:
    """First SNR at which the BER curve crosses below target (log interpolation)."""
    snrs = np.asarray(snrs, dtype=float)
    bers = np.asarray(bers, dtype=float)
    for i in range(len(snrs)):
        if not math.isfinite(bers[i]) or bers[i] <= 0:
            continue
        if bers[i] <= target:
            if i == 0 or bers[i - 1] <= 0 or not math.isfinite(bers[i - 1]):
                return float(snrs[i])
            lo, hi = math.log10(bers[i - 1]), math.log10(bers[i])
            if lo == hi:
                return float(snrs[i])
            frac = (math.log10(target) - lo) / (hi - lo)
            return float(snrs[i - 1] + frac * (snrs[i] - snrs[i - 1]))
    return None


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_results(result: SweepResult, path) -> None:
    """Write the delimited results plus a sidecar echoing the full spec.

    The data file carries no timestamps: re-exporting an identical result is
    byte-identical. The sidecar is `<path>.meta.toml`.
    """
    from .config import spec_to_toml  # deferred: config imports this module

    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for row in result.rows:
                fh.write(",".join([
                    row.chain, _fmt(row.snr_db), _fmt(row.bits), _fmt(row.errors),
                    _fmt(row.ber), _fmt(row.mse), _fmt(row.trials), _fmt(row.seed),
                ]) + "\n")
        with open(f"{path}.meta.toml", "w", newline="\n") as fh:
            fh.write(spec_to_toml(result.spec))
    except OSError as exc:
        raise OSError(f"failed to write results to {path}: {exc}") from exc


def read_results(path) -> list[dict]:
    """Parse a results file back into dict rows with exact numeric fields."""
    with open(path, "r", newline="\n") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"{path} is not a results file")
    names = CSV_HEADER.split(",")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        row = dict(zip(names, parts))
        row["snr_db"] = float(row["snr_db"])
        for key in ("bits", "errors", "trials", "seed"):
            row[key] = int(row[key])
        for key in ("ber", "mse"):
            row[key] = float(row[key]) if row[key] else None
        rows.append(row)
    return rows
