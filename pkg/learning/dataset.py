"""
Dataset Module.

This module turns the raw logs of a simulation run into the supervised dataset: one 23-feature
sample per submitted order (the five best levels of each book side just before the order, plus
the order's direction, price and size), labelled with the archetype of the submitting agent.
It also provides class balancing, day-based splits, z-score normalization and the dataset files.
"""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from config import DEFAULT_TEST_DAYS, DEFAULT_TRAIN_DAYS, L2_DEPTH
from errors import DatasetError
from market.agents import ARCHETYPES, ArchetypeLabel
from market.exchange import BUY, ORDER_LOG_HEADER, SIDE_NAMES, L2Snapshot, l2_header

logger = logging.getLogger(__name__)

N_L2_FEATURES = 4 * L2_DEPTH
N_FEATURES = N_L2_FEATURES + 3
DIRECTION, PRICE, SIZE = N_L2_FEATURES, N_L2_FEATURES + 1, N_L2_FEATURES + 2
ASK_PRICES = slice(0, L2_DEPTH)
BID_PRICES = slice(2 * L2_DEPTH, 3 * L2_DEPTH)
FEATURE_NAMES = ([f"{column}_{i}" for column in ("ask_price", "ask_volume", "bid_price", "bid_volume")
                  for i in range(1, L2_DEPTH + 1)]
                 + ["direction", "price", "size"])
DATASET_HEADER = [f"f{i:02d}" for i in range(N_FEATURES)] + ["label", "day", "time_ns"]
SIDE_VALUES = {name: side for side, name in SIDE_NAMES.items()}
CLASS_NAMES = [label.value for label in ARCHETYPES]


@dataclass(frozen=True)
class OrderRow:
    time: int
    agent_id: int
    archetype: str
    action: str
    side: int
    price: int
    qty: int


@dataclass
class Sample:
    features: np.ndarray
    label: int
    day: int
    time: int


@dataclass
class SampleSet:
    """
    Column-wise container of samples: x is (n, 23), y, day and time are length n.
    """

    x: np.ndarray
    y: np.ndarray
    day: np.ndarray
    time: np.ndarray

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def empty(cls, width: int = N_FEATURES) -> "SampleSet":
        return cls(np.zeros((0, width)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                   np.zeros(0, dtype=np.int64))

    @classmethod
    def from_samples(cls, samples: list) -> "SampleSet":
        if not samples:
            return cls.empty()
        return cls(np.vstack([s.features for s in samples]).astype(float),
                   np.array([s.label for s in samples], dtype=np.int64),
                   np.array([s.day for s in samples], dtype=np.int64),
                   np.array([s.time for s in samples], dtype=np.int64))

    @classmethod
    def concat(cls, sets: list) -> "SampleSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls.empty()
        return cls(np.vstack([s.x for s in sets]), np.concatenate([s.y for s in sets]),
                   np.concatenate([s.day for s in sets]), np.concatenate([s.time for s in sets]))

    def subset(self, index) -> "SampleSet":
        return SampleSet(self.x[index], self.y[index], self.day[index], self.time[index])

    def class_counts(self, n_classes: int = len(ARCHETYPES)) -> list:
        return np.bincount(self.y, minlength=n_classes).tolist()


def read_order_log(path) -> list:
    """
    Reads an order-event log written by the exchange.

    Raises:
        DatasetError: If the file is missing or its header differs from the order-log schema.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"order log {path} does not exist", field="orders")
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        if next(reader, None) != ORDER_LOG_HEADER:
            raise DatasetError(f"{path}: header does not match {','.join(ORDER_LOG_HEADER)}", field="orders")
        for row in reader:
            rows.append(OrderRow(int(row[0]), int(row[1]), row[2], row[3], SIDE_VALUES[row[4]], int(row[5]),
                                 int(row[6])))
    return rows


def read_l2_log(path, depth: int = L2_DEPTH) -> list:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"L2 log {path} does not exist", field="l2")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        if next(reader, None) != l2_header(depth):
            raise DatasetError(f"{path}: header does not match the {depth}-level L2 schema", field="l2")
        return [L2Snapshot.from_row(row, depth) for row in reader]


def impute_pads(snapshot: L2Snapshot) -> tuple:
    """
    Replaces sentinel (empty) levels with the last trade price and zero volume.

    Before the first trade, the deepest present price of the same side stands in, then the deepest
    present price of the other side.

    Returns:
        tuple: (ask_prices, ask_volumes, bid_prices, bid_volumes) as float arrays.
    """
    asks = np.array(snapshot.ask_prices, dtype=float)
    bids = np.array(snapshot.bid_prices, dtype=float)
    ask_volumes = np.array(snapshot.ask_volumes, dtype=float)
    bid_volumes = np.array(snapshot.bid_volumes, dtype=float)
    present_asks = asks[ask_volumes > 0]
    present_bids = bids[bid_volumes > 0]
    for prices, volumes, own, other in ((asks, ask_volumes, present_asks, present_bids),
                                        (bids, bid_volumes, present_bids, present_asks)):
        if snapshot.last_trade > 0:
            fill = float(snapshot.last_trade)
        elif len(own):
            fill = float(own[-1])
        elif len(other):
            fill = float(other[-1])
        else:
            fill = 0.0
        prices[volumes == 0] = fill
    return asks, ask_volumes, bids, bid_volumes


def extract_samples(order_log: list, l2_log: list, day: int = 0) -> tuple:
    """
    Builds one sample per LIMIT or MARKET order from the latest snapshot strictly before it.

    Args:
        order_log (list): OrderRow records of one day.
        l2_log (list): L2Snapshot records of the same day, in time order.
        day (int): Day index stored on every sample.

    Returns:
        tuple: (samples, skipped) where skipped counts orders with no earlier snapshot.
    """
    times = np.array([snapshot.time for snapshot in l2_log], dtype=np.int64)
    samples, skipped = [], 0
    for row in order_log:
        if row.action not in ("LIMIT", "MARKET"):
            continue
        index = int(np.searchsorted(times, row.time, side="left")) - 1
        if index < 0:
            skipped += 1
            continue
        snapshot = l2_log[index]
        asks, ask_volumes, bids, bid_volumes = impute_pads(snapshot)
        if row.action == "MARKET":
            price = asks[0] if row.side == BUY else bids[0]
        else:
            price = float(row.price)
        features = np.concatenate([asks, ask_volumes, bids, bid_volumes, [row.side, price, row.qty]])
        label = ARCHETYPES.index(ArchetypeLabel(row.archetype))
        samples.append(Sample(features, label, day, row.time))
    if skipped:
        logger.warning(f"Day {day}: skipped {skipped} orders placed before the first L2 snapshot")
    return samples, skipped


def balance_downsample(samples: SampleSet, seed: int, n_classes: int = len(ARCHETYPES)) -> SampleSet:
    """
    Reduces every class to the size of the smallest one by seeded sampling without replacement.

    Raises:
        DatasetError: If a class has no samples.
    """
    counts = samples.class_counts(n_classes)
    for label, count in enumerate(counts):
        if count == 0:
            raise DatasetError(f"class {CLASS_NAMES[label]} has no samples", field="label")
    target = min(counts)
    rng = np.random.default_rng(seed)
    chosen = []
    for label in range(n_classes):
        members = np.flatnonzero(samples.y == label)
        chosen.append(rng.choice(members, size=target, replace=False))
    index = np.sort(np.concatenate(chosen))
    logger.info(f"Balanced {counts} down to {target} samples per class")
    return samples.subset(index)


class ZScoreParams(BaseModel):
    mean: list[float]
    std: list[float]
    kept: list[int]
    dropped: list[int]


def zscore_fit(x: np.ndarray, min_std: float = 1e-12, drop_constant: bool = True) -> ZScoreParams:
    """
    Fits per-column mean and population standard deviation.

    Constant columns are dropped, or kept with unit scale when drop_constant is False (regression
    targets must keep their width).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise DatasetError("z-score fit needs a non-empty two-dimensional matrix")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    if not drop_constant:
        std = np.where(std > min_std, std, 1.0)
    kept = [int(i) for i in np.flatnonzero(std > min_std)]
    dropped = [int(i) for i in np.flatnonzero(std <= min_std)]
    if dropped:
        logger.warning(f"Dropped constant features {dropped}")
    return ZScoreParams(mean=mean[kept].tolist(), std=std[kept].tolist(), kept=kept, dropped=dropped)


def zscore_apply(params: ZScoreParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x[:, params.kept] - np.array(params.mean)) / np.array(params.std)


def zscore_invert(params: ZScoreParams, z: np.ndarray) -> np.ndarray:
    """Maps normalized values of the kept columns back to the original scale."""
    return np.asarray(z, dtype=float) * np.array(params.std) + np.array(params.mean)


def split_by_day(samples: SampleSet, train_days: int = DEFAULT_TRAIN_DAYS, test_days: int = DEFAULT_TEST_DAYS) -> tuple:
    """
    Chronological split: the first train_days distinct days train, the following test_days test.

    Raises:
        DatasetError: If fewer than train_days + test_days distinct days are present.
    """
    days = sorted(set(samples.day.tolist()))
    if len(days) < train_days + test_days:
        raise DatasetError(f"need {train_days + test_days} days of samples, found {len(days)}", field="days")
    train_set = days[:train_days]
    test_set = days[train_days:train_days + test_days]
    return (samples.subset(np.isin(samples.day, train_set)),
            samples.subset(np.isin(samples.day, test_set)))


def validation_split(train: SampleSet) -> tuple:
    """Holds out the last training day for validation."""
    days = sorted(set(train.day.tolist()))
    if len(days) < 2:
        raise DatasetError("validation needs at least two training days", field="days")
    last = days[-1]
    return train.subset(train.day != last), train.subset(train.day == last)


def book_mid(samples: SampleSet) -> np.ndarray:
    """Mid of the best ask and best bid features of each sample."""
    return (samples.x[:, ASK_PRICES.start] + samples.x[:, BID_PRICES.start]) / 2


def cloning_inputs(samples: SampleSet) -> np.ndarray:
    """The book features a cloner conditions on, every price taken relative to the book mid."""
    x = samples.x[:, :N_L2_FEATURES].copy()
    mid = book_mid(samples)[:, None]
    x[:, ASK_PRICES] -= mid
    x[:, BID_PRICES] -= mid
    return x


def cloning_targets(samples: SampleSet) -> np.ndarray:
    """Order price and signed size (direction times size) per sample."""
    return np.column_stack([samples.x[:, PRICE], samples.x[:, DIRECTION] * samples.x[:, SIZE]])


def cloning_offsets(samples: SampleSet) -> np.ndarray:
    """What a cloner regresses: the order price minus the book mid, and the signed size."""
    offsets = cloning_targets(samples)
    offsets[:, 0] -= book_mid(samples)
    return offsets


def write_dataset_csv(samples: SampleSet, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(DATASET_HEADER)
        for features, label, day, time_ns in zip(samples.x, samples.y, samples.day, samples.time):
            writer.writerow([repr(float(v)) for v in features] + [int(label), int(day), int(time_ns)])
    logger.info(f"Wrote {len(samples)} samples to {path}")
    return path


def read_dataset_csv(path) -> SampleSet:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset {path} does not exist", field="dataset")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        if next(reader, None) != DATASET_HEADER:
            raise DatasetError(f"{path}: header does not match the dataset schema", field="dataset")
        rows = list(reader)
    if not rows:
        return SampleSet.empty()
    x = np.array([[float(v) for v in row[:N_FEATURES]] for row in rows])
    tail = np.array([[int(v) for v in row[N_FEATURES:]] for row in rows], dtype=np.int64)
    return SampleSet(x, tail[:, 0], tail[:, 1], tail[:, 2])


class DatasetManifest(BaseModel):
    train_days: list[int]
    test_days: list[int]
    counts_before: dict[str, list[int]]
    counts_after: dict[str, list[int]]
    skipped_orders: int
    seed: int
    zscore_params: str
    class_names: list[str] = CLASS_NAMES
    feature_names: list[str] = FEATURE_NAMES


def build_dataset(day_dirs: list, out_dir, seed: int, train_days: int = DEFAULT_TRAIN_DAYS,
                  test_days: int = DEFAULT_TEST_DAYS) -> DatasetManifest:
    """
    Extracts, splits and balances the samples of a run and writes the dataset files.

    Writes train.csv and test.csv (balanced within each split), train_full.csv and test_full.csv
    (every sample, for the cloners), zscore.json fit on the balanced training split, and
    dataset.json describing the split.

    Args:
        day_dirs (list): The day directories of a simulation run, in day order.
        out_dir (str | Path): Destination directory.
        seed (int): Seed of the balancing draws.
        train_days (int): Number of leading days used for training.
        test_days (int): Number of following days used for testing.

    Returns:
        DatasetManifest: The split description.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_day, skipped = [], 0
    for day, day_dir in enumerate(day_dirs):
        samples, day_skipped = extract_samples(read_order_log(Path(day_dir) / "orders.csv"),
                                               read_l2_log(Path(day_dir) / "l2.csv"), day)
        logger.info(f"Day {day}: extracted {len(samples)} samples")
        per_day.append(SampleSet.from_samples(samples))
        skipped += day_skipped

    train_full, test_full = split_by_day(SampleSet.concat(per_day), train_days, test_days)
    train = balance_downsample(train_full, seed)
    test = balance_downsample(test_full, seed + 1)
    params = zscore_fit(train.x)

    write_dataset_csv(train_full, out_dir / "train_full.csv")
    write_dataset_csv(test_full, out_dir / "test_full.csv")
    write_dataset_csv(train, out_dir / "train.csv")
    write_dataset_csv(test, out_dir / "test.csv")
    (out_dir / "zscore.json").write_text(params.model_dump_json(indent=2))

    manifest = DatasetManifest(
        train_days=sorted(set(train_full.day.tolist())), test_days=sorted(set(test_full.day.tolist())),
        counts_before={"train": train_full.class_counts(), "test": test_full.class_counts()},
        counts_after={"train": train.class_counts(), "test": test.class_counts()},
        skipped_orders=skipped, seed=seed, zscore_params="zscore.json")
    (out_dir / "dataset.json").write_text(manifest.model_dump_json(indent=2))
    return manifest


def load_zscore(path) -> ZScoreParams:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"z-score parameters {path} do not exist", field="zscore")
    return ZScoreParams.model_validate_json(path.read_text())
