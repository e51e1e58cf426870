"""Classifier backends and single-image inference.

A backend maps a preprocessed image to a probability distribution over
the two lesion classes. Two kinds exist:

``model_file``
    A TorchScript module on disk. The file receives a normalized
    (1, C, H, W) float32 tensor and returns logits (default) or
    probabilities over (NV, BCC).

``mock``
    A deterministic test backend driven by a small text config, either a
    lookup table keyed by image content hash or a seeded noisy oracle
    that derives the true class from mean intensity and flips it with a
    configured error rate.

Backends are immutable once loaded and cached per source path.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass

import numpy as np

from .datasetio import LABELS
from .errors import BackendError, ConfigurationError, InputError, ParseError

__all__ = [
    "BackendDescriptor",
    "ModelPrediction",
    "argmax_label",
    "validate_probs",
    "image_key",
    "predict",
    "predict_all",
    "load_roster",
]

PROB_SUM_TOL = 1e-6


def validate_probs(probs):
    """Check a class-probability mapping: full vocabulary, sums to 1."""
    if set(probs) != set(LABELS):
        raise InputError(f"probabilities must cover exactly {LABELS}")
    for label, value in probs.items():
        if not (0.0 <= value <= 1.0):
            raise InputError(f"probability for {label} outside [0, 1]: {value}")
    total = sum(probs.values())
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise InputError(f"probabilities sum to {total}, expected 1")
    return dict(probs)


def argmax_label(probs):
    """Most probable label; an exact tie resolves to the first in LABELS."""
    best = LABELS[0]
    best_p = probs[best]
    for label in LABELS[1:]:
        if probs[label] > best_p:
            best = label
            best_p = probs[label]
    return best


@dataclass(frozen=True)
class ModelPrediction:
    """One backend's distribution over classes plus its argmax."""

    model_id: str
    probs: dict
    predicted: str

    @classmethod
    def from_probs(cls, model_id, probs):
        clean = validate_probs(probs)
        return cls(model_id=model_id, probs=clean, predicted=argmax_label(clean))

    def to_dict(self):
        return {
            "model_id": self.model_id,
            "probs": dict(self.probs),
            "predicted": self.predicted,
        }

    @classmethod
    def from_dict(cls, data):
        return cls.from_probs(data["model_id"], data["probs"])


@dataclass(frozen=True)
class BackendDescriptor:
    """Where a backend lives and how to feed it.

    input_shape is (H, W, C); None accepts any shape. normalization, when
    given, is a (mean, std) pair of per-channel tuples applied before the
    forward pass; the default is the identity. output applies only to
    model files: "logits" (softmax applied here) or "probs".
    """

    model_id: str
    kind: str
    source: str = ""
    input_shape: tuple | None = (224, 224, 3)
    normalization: tuple | None = None
    output: str = "logits"

    def __post_init__(self):
        if not self.model_id:
            raise ConfigurationError("backend needs a model_id")
        if self.kind not in ("model_file", "mock"):
            raise ConfigurationError(f"unknown backend kind: {self.kind!r}")
        if self.output not in ("logits", "probs"):
            raise ConfigurationError(f"unknown output mode: {self.output!r}")


def image_key(img):
    """Content hash of an image: sha256 over shape and float64 bytes."""
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.float64))
    digest = hashlib.sha256()
    digest.update(str(arr.shape).encode("ascii"))
    digest.update(b"|")
    digest.update(arr.tobytes())
    return digest.hexdigest()


def _check_input_shape(arr, descriptor):
    shape = arr.shape if arr.ndim == 3 else arr.shape + (1,)
    want = descriptor.input_shape
    if want is not None and tuple(shape) != tuple(want):
        raise InputError(
            f"backend {descriptor.model_id} expects input shape {tuple(want)}, "
            f"got {tuple(shape)}"
        )


# ---------------------------------------------------------------------------
# Mock backends

_MOCK_KEYS = {"mode", "fallback", "seed", "error_rate"}


class _TableMock:
    def __init__(self, table, fallback):
        self.table = table
        self.fallback = fallback

    def predict(self, descriptor, arr):
        key = image_key(arr)
        probs = self.table.get(key)
        if probs is None:
            if self.fallback is None:
                raise BackendError(
                    f"no mock entry for image {key[:12]} and no fallback",
                    model_id=descriptor.model_id,
                )
            probs = self.fallback
        return ModelPrediction.from_probs(descriptor.model_id, probs)


class _NoisyOracleMock:
    """Derives truth from mean intensity, then flips it at the error rate.

    Mean intensity above 0.5 reads as BCC. The flip draw is seeded from
    (seed, model_id, image hash), so distinct model ids err independently
    while every run reproduces the same decisions.
    """

    def __init__(self, seed, error_rates):
        self.seed = seed
        self.error_rates = error_rates

    def predict(self, descriptor, arr):
        truth = "BCC" if float(arr.mean()) > 0.5 else "NV"
        other = "NV" if truth == "BCC" else "BCC"
        key = image_key(arr)
        material = f"{self.seed}|{descriptor.model_id}|{key}".encode("ascii")
        draw_seed = int.from_bytes(hashlib.sha256(material).digest()[:8], "big")
        rng = random.Random(draw_seed)
        rate = self.error_rates.get(truth, self.error_rates.get(None, 0.0))
        label = other if rng.random() < rate else truth
        margin = rng.uniform(0.7, 0.99)
        probs = {label: margin, ("NV" if label == "BCC" else "BCC"): 1.0 - margin}
        return ModelPrediction.from_probs(descriptor.model_id, probs)


def _parse_distribution(text, lineno):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ParseError(f"line {lineno}: expected two probabilities", line=lineno)
    try:
        p_nv, p_bcc = float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad probability: {exc}", line=lineno)
    return {"NV": p_nv, "BCC": p_bcc}


def _parse_error_rates(text, lineno):
    rates = {}
    if ":" not in text:
        try:
            rates[None] = float(text)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad error_rate: {exc}", line=lineno)
        return rates
    for piece in text.split(","):
        label, _, value = piece.partition(":")
        label = label.strip()
        if label not in LABELS:
            raise ParseError(f"line {lineno}: unknown label {label!r}", line=lineno)
        try:
            rates[label] = float(value)
        except ValueError as exc:
            raise ParseError(f"line {lineno}: bad error_rate: {exc}", line=lineno)
    return rates


def _load_mock(path):
    mode = "table"
    fallback = None
    seed = 0
    error_rates = {None: 0.0}
    table = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, eq, value = line.partition("=")
            if eq and key.strip() in _MOCK_KEYS:
                key = key.strip()
                value = value.strip()
                if key == "mode":
                    if value not in ("table", "noisy_oracle"):
                        raise ParseError(
                            f"line {lineno}: unknown mode {value!r}", line=lineno
                        )
                    mode = value
                elif key == "fallback":
                    fallback = validate_probs(_parse_distribution(value, lineno))
                elif key == "seed":
                    seed = int(value)
                elif key == "error_rate":
                    error_rates = _parse_error_rates(value, lineno)
                continue
            digest, _, rest = line.partition(",")
            digest = digest.strip()
            if len(digest) != 64:
                raise ParseError(
                    f"line {lineno}: expected a 64-char image hash", line=lineno
                )
            table[digest] = validate_probs(_parse_distribution(rest, lineno))
    if mode == "table":
        return _TableMock(table, fallback)
    return _NoisyOracleMock(seed, error_rates)


# ---------------------------------------------------------------------------
# TorchScript model files


class _TorchScriptBackend:
    def __init__(self, path):
        import warnings

        import torch

        self._torch = torch
        try:
            # torch deprecates the jit loader in favor of torch.export,
            # but TorchScript stays the shape-polymorphic interchange
            # format, so keep it and quiet the advisory.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DeprecationWarning)
                self.module = torch.jit.load(path, map_location="cpu")
        except Exception as exc:
            raise BackendError(f"cannot load model file {path}: {exc}")
        self.module.eval()

    def predict(self, descriptor, arr):
        torch = self._torch
        work = arr if arr.ndim == 3 else arr[:, :, None]
        if descriptor.normalization is not None:
            mean, std = descriptor.normalization
            work = (work - np.asarray(mean)) / np.asarray(std)
        chw = np.ascontiguousarray(np.transpose(work, (2, 0, 1)), dtype=np.float32)
        with torch.no_grad():
            tensor = torch.from_numpy(chw).unsqueeze(0)
            raw = self.module(tensor)
        values = np.asarray(raw.detach().cpu().numpy(), dtype=np.float64).reshape(-1)
        if values.shape[0] != len(LABELS):
            raise BackendError(
                f"model returned {values.shape[0]} outputs, expected {len(LABELS)}",
                model_id=descriptor.model_id,
            )
        if descriptor.output == "logits":
            shifted = values - values.max()
            exp = np.exp(shifted)
            values = exp / exp.sum()
        probs = {label: float(values[i]) for i, label in enumerate(LABELS)}
        return ModelPrediction.from_probs(descriptor.model_id, probs)


_BACKEND_CACHE = {}


def _load_backend(descriptor):
    cache_key = (descriptor.kind, descriptor.source)
    backend = _BACKEND_CACHE.get(cache_key)
    if backend is None:
        if descriptor.kind == "mock":
            backend = _load_mock(descriptor.source)
        else:
            backend = _TorchScriptBackend(descriptor.source)
        _BACKEND_CACHE[cache_key] = backend
    return backend


def clear_backend_cache():
    _BACKEND_CACHE.clear()


def predict(descriptor, img):
    """Run one backend on one preprocessed image."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3) or arr.size == 0:
        raise InputError("expected a non-empty 2d or 3d image")
    _check_input_shape(arr, descriptor)
    backend = _load_backend(descriptor)
    return backend.predict(descriptor, arr)


def predict_all(descriptors, img):
    """Run every backend in roster order.

    Any failure aborts the whole call with a BackendError naming the
    model that failed.
    """
    if not descriptors:
        raise ConfigurationError("backend roster is empty")
    predictions = []
    for descriptor in descriptors:
        try:
            predictions.append(predict(descriptor, img))
        except BackendError as exc:
            if exc.model_id is None:
                raise BackendError(str(exc), model_id=descriptor.model_id) from exc
            raise
        except Exception as exc:
            raise BackendError(
                f"backend {descriptor.model_id} failed: {exc}",
                model_id=descriptor.model_id,
            ) from exc
    return predictions


def load_roster(path):
    """Read a JSON roster file into a list of descriptors."""
    import json

    with open(path, "r", encoding="utf-8") as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"bad roster file {path}: {exc}")
    if not isinstance(data, dict) or "backends" not in data:
        raise ConfigurationError("roster file needs a top-level 'backends' list")
    descriptors = []
    for item in data["backends"]:
        shape = item.get("input_shape", (224, 224, 3))
        normalization = item.get("normalization")
        if normalization is not None:
            normalization = (
                tuple(normalization["mean"]),
                tuple(normalization["std"]),
            )
        descriptors.append(
            BackendDescriptor(
                model_id=item.get("model_id", ""),
                kind=item.get("kind", ""),
                source=item.get("source", ""),
                input_shape=tuple(shape) if shape is not None else None,
                normalization=normalization,
                output=item.get("output", "logits"),
            )
        )
    return descriptors
