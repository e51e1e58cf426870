"""Dataset manifests and deterministic stratified splitting.

A manifest is a text file of ``path,label`` lines. Blank lines and lines
starting with ``#`` are ignored. Labels come from the two-class lesion
vocabulary: NV (nevus) and BCC (basal cell carcinoma).
"""

from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass, field

from .errors import InputError, ParameterError, ParseError, ValidationError

LABELS = ("NV", "BCC")

__all__ = [
    "LABELS",
    "ManifestEntry",
    "DatasetManifest",
    "SplitSpec",
    "load_manifest",
    "write_manifest",
    "stratified_split",
]


def check_label(label):
    if label not in LABELS:
        raise ValidationError(f"unknown class label: {label!r}")
    return label


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str

    def __post_init__(self):
        if not self.path:
            raise ValidationError("manifest entry has an empty path")
        check_label(self.label)


@dataclass
class DatasetManifest:
    """An ordered list of labeled sample paths, paths unique."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for entry in self.entries:
            if entry.path in seen:
                raise ValidationError(f"duplicate path in manifest: {entry.path}")
            seen.add(entry.path)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def counts(self):
        """Per-class sample counts, including zero counts."""
        out = {label: 0 for label in LABELS}
        for entry in self.entries:
            out[entry.label] += 1
        return out


def load_manifest(path):
    """Parse a manifest file. Raises ParseError with the offending line."""
    entries = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "," not in line:
                raise ParseError(
                    f"line {lineno}: expected 'path,label', got {line!r}",
                    line=lineno,
                )
            sample_path, label = line.rsplit(",", 1)
            sample_path = sample_path.strip()
            label = label.strip()
            if label not in LABELS:
                raise ParseError(
                    f"line {lineno}: unknown label {label!r}", line=lineno
                )
            if not sample_path:
                raise ParseError(f"line {lineno}: empty path", line=lineno)
            entries.append(ManifestEntry(sample_path, label))
    return DatasetManifest(entries)


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as handle:
        for entry in manifest.entries:
            handle.write(f"{entry.path},{entry.label}\n")


@dataclass(frozen=True)
class SplitSpec:
    """Fractions for a train/validation/test split plus the shuffle seed."""

    train_fraction: float = 0.8
    val_fraction: float = 0.1
    test_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        for value in fractions:
            if value < 0:
                raise ParameterError("split fractions must be >= 0")
        if sum(fractions) > 1.0 + 1e-9:
            raise ParameterError("split fractions must sum to at most 1")


def _floor_count(fraction, n):
    # floor(fraction * n) on the mathematical product; the epsilon absorbs
    # binary representation error in decimals like 0.3 * 10.
    return int(math.floor(fraction * n + 1e-9))


def stratified_split(manifest, spec=None):
    """Split a manifest per class into train/validation/test manifests.

    Within each class the entries are shuffled with random.Random(seed),
    then counts floor(fraction * n) go to each partition; leftovers from
    flooring go to train. Classes are processed in label order with a
    single generator, so the outcome is a pure function of the manifest
    and the seed. A class with no samples is skipped with a warning.
    """
    if spec is None:
        spec = SplitSpec()
    if len(manifest) == 0:
        raise InputError("cannot split an empty manifest")
    rng = random.Random(spec.seed)
    parts = {"train": [], "val": [], "test": []}
    for label in LABELS:
        group = [entry for entry in manifest if entry.label == label]
        if not group:
            warnings.warn(f"class {label} has no samples; skipping", stacklevel=2)
            continue
        rng.shuffle(group)
        n = len(group)
        n_val = _floor_count(spec.val_fraction, n)
        n_test = _floor_count(spec.test_fraction, n)
        n_train = n - n_val - n_test
        parts["train"].extend(group[:n_train])
        parts["val"].extend(group[n_train : n_train + n_val])
        parts["test"].extend(group[n_train + n_val :])
    return (
        DatasetManifest(parts["train"]),
        DatasetManifest(parts["val"]),
        DatasetManifest(parts["test"]),
    )
