"""Two-dimensional projection of the five RQA measures.

One mean feature vector is taken per monitored state (each device during its
on-windows, plus the aggregate), the states' covariance about their common
mean is eigendecomposed, and the two leading eigenvectors become the
projection basis.  Feature rows project to the plane as
``(features - mean) @ basis``.  The covariance uses the plain ``1/n``
normalisation over the five state means; with five states its rank is at
most four.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CompatibilityError, DegenerateModelError, ValidationError
from .rqa import RqaFeatures, RqaFeatureSeries, RqaParams

N_STATES = 5
N_FEATURES = 5

_FORMAT = "pca-v1"


@dataclass(frozen=True)
class Point2D:
    """A projected feature vector."""

    c1: float
    c2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2])


@dataclass(frozen=True)
class PcaModel:
    """Fitted projection: feature mean, 5x2 basis and full eigenspectrum.

    ``model_id`` is a content digest; artifacts derived from a model carry it
    so mismatched combinations can be rejected later.
    """

    psi: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    device_labels: tuple[str, ...]
    params: RqaParams
    model_id: str = ""

    def __post_init__(self) -> None:
        psi = np.ascontiguousarray(self.psi, dtype=np.float64)
        basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        eigenvalues = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        if psi.shape != (N_FEATURES,):
            raise ValidationError("psi must have 5 entries")
        if basis.shape != (N_FEATURES, 2):
            raise ValidationError("basis must be 5x2")
        if eigenvalues.shape != (N_FEATURES,):
            raise ValidationError("eigenvalues must have 5 entries")
        if len(self.device_labels) != N_STATES:
            raise ValidationError("expected exactly 5 state labels")
        for array in (psi, basis, eigenvalues):
            array.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eigenvalues)
        object.__setattr__(self, "device_labels", tuple(self.device_labels))
        if not self.model_id:
            object.__setattr__(self, "model_id", _digest(self))


def _canonical_payload(model: PcaModel) -> dict:
    return {
        "version": _FORMAT,
        "psi": [float(x) for x in model.psi],
        "basis": [[float(x) for x in row] for row in model.basis],
        "eigenvalues": [float(x) for x in model.eigenvalues],
        "labels": list(model.device_labels),
        "rqa_params": model.params.to_dict(),
    }


def _digest(model: PcaModel) -> str:
    text = json.dumps(_canonical_payload(model), sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def fit(feature_sets: Mapping[str, RqaFeatureSeries]) -> PcaModel:
    """Fit the projection from exactly five labelled feature series.

    Every series contributes the mean over its on-windows; a label with no
    on-windows cannot be characterised and is an error, as is any mismatch of
    extraction parameters between the series.
    """
    if len(feature_sets) != N_STATES:
        raise ValidationError(
            f"expected exactly {N_STATES} labelled feature sets, got {len(feature_sets)}"
        )
    labels = tuple(sorted(feature_sets))
    params = feature_sets[labels[0]].params
    if any(feature_sets[l].params != params for l in labels):
        raise CompatibilityError("feature sets were extracted with different parameters")
    means = np.empty((N_STATES, N_FEATURES))
    for row, label in enumerate(labels):
        if feature_sets[label].label != label:
            raise ValidationError(
                f"feature set keyed {label!r} is labelled {feature_sets[label].label!r}"
            )
        on_rows = feature_sets[label].on_features()
        if on_rows.shape[0] == 0:
            raise ValidationError(f"label {label!r} has no on-windows to average")
        means[row] = on_rows.mean(axis=0)
    psi = means.mean(axis=0)
    centered = means - psi
    covariance = (centered.T @ centered) / N_STATES

    eigenvalues, vectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]
    scale = max(1.0, float(np.trace(covariance)))
    if eigenvalues[0] <= 1e-12 * scale:
        raise DegenerateModelError(
            "state means are numerically identical; covariance is zero"
        )
    basis = vectors[:, :2].copy()
    for col in range(2):
        lead = np.argmax(np.abs(basis[:, col]))
        if basis[lead, col] < 0:
            basis[:, col] = -basis[:, col]
    return PcaModel(psi, basis, eigenvalues, labels, params)


def _feature_vector(features: RqaFeatures | np.ndarray) -> np.ndarray:
    if isinstance(features, RqaFeatures):
        vector = features.as_array()
    else:
        vector = np.asarray(features, dtype=np.float64)
    if vector.shape != (N_FEATURES,):
        raise ValidationError("expected a 5-entry feature vector")
    if not np.all(np.isfinite(vector)):
        raise ValidationError("feature vector must be finite")
    return vector


def project_rows(model: PcaModel, rows: np.ndarray) -> np.ndarray:
    """Project an (n, 5) block of feature rows to (n, 2) plane coordinates."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] != N_FEATURES:
        raise ValidationError("expected an (n, 5) feature array")
    if not np.all(np.isfinite(rows)):
        raise ValidationError("feature rows must be finite")
    return (rows - model.psi) @ model.basis


def project(model: PcaModel, features: RqaFeatures | np.ndarray) -> Point2D:
    """Project a single feature vector onto the fitted plane."""
    coords = project_rows(model, _feature_vector(features)[None, :])[0]
    return Point2D(float(coords[0]), float(coords[1]))


def save_model(model: PcaModel, path: str | Path) -> None:
    """Write the model as versioned JSON (format ``pca-v1``)."""
    payload = _canonical_payload(model)
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def load_model(path: str | Path) -> PcaModel:
    """Read a ``pca-v1`` model file; numbers round-trip exactly."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file is not valid JSON: {exc}") from None
    if payload.get("version") != _FORMAT:
        raise CompatibilityError(
            f"unsupported model format {payload.get('version')!r}, expected {_FORMAT!r}"
        )
    return PcaModel(
        np.array(payload["psi"]),
        np.array(payload["basis"]),
        np.array(payload["eigenvalues"]),
        tuple(payload["labels"]),
        RqaParams.from_dict(payload["rqa_params"]),
    )
