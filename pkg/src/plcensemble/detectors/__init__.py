"""Base detectors behind one interface: fit on normal data, signed score per sample.

Scores are >= 0 for samples judged normal and < 0 for anomalies.
"""

from __future__ import annotations

import json
from typing import Union

import numpy as np

from ..errors import ModelFormatError
from .base import DetectorKind
from .iforest import IforestDetector, IforestParams, average_path_length, fit_iforest
from .ocnn import OcnnDetector, OcnnParams, fit_ocnn
from .ocsvm import OcsvmDetector, OcsvmParams, fit_ocsvm

TrainedDetector = Union[OcsvmDetector, OcnnDetector, IforestDetector]

DETECTOR_FORMAT = "plcensemble.detector"
FORMAT_VERSION = 1

_CLASSES = {
    DetectorKind.OCSVM: OcsvmDetector,
    DetectorKind.OCNN: OcnnDetector,
    DetectorKind.IFOREST: IforestDetector,
}


def score(detector: TrainedDetector, data) -> np.ndarray:
    return detector.decision_function(data)


def detector_to_document(detector: TrainedDetector) -> dict:
    doc = {"format": DETECTOR_FORMAT, "version": FORMAT_VERSION, "kind": detector.kind.value}
    doc.update(detector.to_dict())
    return doc


def detector_from_document(doc: dict) -> TrainedDetector:
    if doc.get("format") != DETECTOR_FORMAT:
        raise ModelFormatError(f"not a detector document: format={doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported detector document version {doc.get('version')!r}")
    try:
        kind = DetectorKind(doc["kind"])
        return _CLASSES[kind].from_dict(doc)
    except (KeyError, ValueError, TypeError) as exc:
        raise ModelFormatError(f"malformed detector document: {exc}") from exc


def dumps(detector: TrainedDetector) -> str:
    return json.dumps(detector_to_document(detector), allow_nan=False)


def loads(text: str) -> TrainedDetector:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    return detector_from_document(doc)


__all__ = [
    "DetectorKind",
    "IforestDetector",
    "IforestParams",
    "OcnnDetector",
    "OcnnParams",
    "OcsvmDetector",
    "OcsvmParams",
    "TrainedDetector",
    "average_path_length",
    "detector_from_document",
    "detector_to_document",
    "dumps",
    "fit_iforest",
    "fit_ocnn",
    "fit_ocsvm",
    "loads",
    "score",
]
