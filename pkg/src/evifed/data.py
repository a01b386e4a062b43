"""Dataset ingestion, vertical partitioning, and deterministic batching.

Supported inputs: the big-endian IDX image/label format (magic 0x00000803 /
0x00000801) and comma-delimited CSV with a header row.  Pixel features are
mapped to [0, 1]; tabular features are z-scored per column using statistics
from the training split only (variance floor 1e-12 for constant columns).
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Malformed IDX file; the message carries the failing byte offset."""


@dataclass
class VerticalDataset:
    party_blocks: list[np.ndarray]  # each (N, d_k)
    labels: np.ndarray              # one-hot, (N, C)
    split_tag: str = "train"

    def __post_init__(self):
        n = self.labels.shape[0]
        for k, block in enumerate(self.party_blocks):
            if block.shape[0] != n:
                raise ValueError(f"party {k} block has {block.shape[0]} rows, "
                                 f"labels have {n}")

    @property
    def num_samples(self) -> int:
        return self.labels.shape[0]

    @property
    def num_parties(self) -> int:
        return len(self.party_blocks)

    @property
    def num_classes(self) -> int:
        return self.labels.shape[1]

    def sample(self, i: int) -> list[np.ndarray]:
        return [block[i] for block in self.party_blocks]

    def subset(self, indices, split_tag: str | None = None) -> "VerticalDataset":
        indices = np.asarray(indices)
        return VerticalDataset([b[indices] for b in self.party_blocks],
                               self.labels[indices],
                               split_tag or self.split_tag)


def _read_exact(f, count: int, offset: int, what: str) -> bytes:
    data = f.read(count)
    if len(data) != count:
        raise IdxFormatError(f"truncated {what} at byte offset {offset}: "
                             f"wanted {count} bytes, got {len(data)}")
    return data


def load_idx_images(image_path, label_path) -> tuple[np.ndarray, np.ndarray]:
    """Images scaled to [0, 1] as (N, rows, cols); labels as integers."""
    with open(image_path, "rb") as f:
        header = _read_exact(f, 16, 0, "image header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise IdxFormatError(f"bad image magic {magic:#010x} at byte offset 0")
        payload = _read_exact(f, n * rows * cols, 16, "image payload")
    images = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows, cols)
    with open(label_path, "rb") as f:
        header = _read_exact(f, 8, 0, "label header")
        magic, n_labels = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise IdxFormatError(f"bad label magic {magic:#010x} at byte offset 0")
        payload = _read_exact(f, n_labels, 8, "label payload")
    labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if n_labels != n:
        raise IdxFormatError(f"image/label count mismatch: {n} vs {n_labels}")
    return images.astype(np.float64) / 255.0, labels


def write_idx_images(image_path, label_path, images: np.ndarray,
                     labels: np.ndarray) -> None:
    """Inverse of load_idx_images for synthetic fixtures and replay."""
    images = np.asarray(images)
    n, rows, cols = images.shape
    pixels = np.clip(np.round(images * 255.0), 0, 255).astype(np.uint8)
    with open(image_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        f.write(pixels.tobytes())
    with open(label_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def quadrant_partition(images: np.ndarray) -> list[np.ndarray]:
    """Four 14x14 blocks per 28x28 image: TL, TR, BL, BR, row-major flattened."""
    images = np.asarray(images)
    if images.shape[1:] != (28, 28):
        raise ValueError(f"expected (N, 28, 28) images, got {images.shape}")
    n = images.shape[0]
    return [
        images[:, :14, :14].reshape(n, 196),
        images[:, :14, 14:].reshape(n, 196),
        images[:, 14:, :14].reshape(n, 196),
        images[:, 14:, 14:].reshape(n, 196),
    ]


def reassemble_quadrants(blocks: list[np.ndarray]) -> np.ndarray:
    """Inverse of quadrant_partition (test oracle)."""
    n = blocks[0].shape[0]
    tl, tr, bl, br = (b.reshape(n, 14, 14) for b in blocks)
    top = np.concatenate([tl, tr], axis=2)
    bottom = np.concatenate([bl, br], axis=2)
    return np.concatenate([top, bottom], axis=1)


def load_tabular_csv(path, feature_columns: list[str], label_column: str,
                     label_map: dict[str, int] | None = None
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Raw (unstandardized) features and binary {0,1} labels.

    Standardization happens after the train/test split (`standardize`), so
    test rows never contaminate the statistics.
    """
    rows = []
    labels = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: missing header row")
        for col in feature_columns + [label_column]:
            if col not in reader.fieldnames:
                raise ValueError(f"{path}: column {col!r} not in header")
        for row_idx, record in enumerate(reader, start=2):
            values = []
            for col in feature_columns:
                try:
                    values.append(float(record[col]))
                except (TypeError, ValueError):
                    raise ValueError(
                        f"{path}: non-numeric cell at row {row_idx}, "
                        f"column {col!r}: {record[col]!r}") from None
            raw_label = record[label_column]
            if label_map is not None:
                if raw_label not in label_map:
                    raise ValueError(f"{path}: unknown label {raw_label!r} "
                                     f"at row {row_idx}")
                labels.append(label_map[raw_label])
            else:
                lab = int(float(raw_label))
                if lab not in (0, 1):
                    raise ValueError(f"{path}: unknown label {raw_label!r} "
                                     f"at row {row_idx}")
                labels.append(lab)
            rows.append(values)
    return np.array(rows, dtype=np.float64), np.array(labels, dtype=np.int64)


def standardize(train_features: np.ndarray, *other: np.ndarray
                ) -> tuple[np.ndarray, ...]:
    """Z-score all splits using the training split's column statistics."""
    mean = train_features.mean(axis=0)
    var = train_features.var(axis=0)
    std = np.sqrt(np.maximum(var, 1e-12))
    out = [(train_features - mean) / std]
    out.extend((x - mean) / std for x in other)
    return tuple(out)


def vertical_split(features: np.ndarray, widths: list[int]) -> list[np.ndarray]:
    """Contiguous column ranges, in file order, one per party."""
    if sum(widths) != features.shape[1]:
        raise ValueError(f"party widths {widths} do not sum to "
                         f"{features.shape[1]} columns")
    edges = np.cumsum([0] + list(widths))
    return [features[:, edges[k]:edges[k + 1]] for k in range(len(widths))]


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def balanced_subsample(features: np.ndarray, labels: np.ndarray, rng
                       ) -> tuple[np.ndarray, np.ndarray]:
    """All minority samples plus an equal-size uniform draw of the majority."""
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be non-empty")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    drawn = rng.choice(majority, size=len(minority), replace=False)
    keep = np.concatenate([minority, drawn])
    keep = keep[rng.permutation(len(keep))]
    return features[keep], labels[keep]


def train_test_split(dataset: VerticalDataset, test_fraction: float,
                     seed: int) -> tuple[VerticalDataset, VerticalDataset]:
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must be in (0, 1)")
    n = dataset.num_samples
    n_test = int(round(n * test_fraction))
    if n_test == 0 or n_test == n:
        raise ValueError("split leaves an empty train or test set")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5911]))
    perm = rng.permutation(n)
    return (dataset.subset(perm[n_test:], "train"),
            dataset.subset(perm[:n_test], "test"))


def batch_indices(num_samples: int, batch_size: int, seed: int, epoch: int):
    """Deterministic per-epoch shuffle; the last partial batch is kept."""
    if num_samples == 0:
        raise ValueError("empty split")
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    perm = rng.permutation(num_samples)
    for start in range(0, num_samples, batch_size):
        yield perm[start:start + batch_size]


def split_and_batch(dataset: VerticalDataset, test_fraction: float,
                    batch_size: int, seed: int):
    """Split, then return (per-epoch batch iterator factory, test set)."""
    train_set, test_set = train_test_split(dataset, test_fraction, seed)

    def epoch_batches(epoch: int):
        for idx in batch_indices(train_set.num_samples, batch_size, seed, epoch):
            yield train_set.subset(idx)

    return train_set, epoch_batches, test_set
