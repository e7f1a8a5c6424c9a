"""Perception backends: deterministic mocks plus lazily-loaded real models.

The mock backend is a pure function of the request, so recorded responses
are reproducible fixtures. Real backends import their heavy dependencies on
first use and serialize inference behind a lock: concurrent requests may
wait, but never interleave within one model.
"""

from __future__ import annotations

import hashlib
import threading
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np


class MediaNotFound(Exception):
    pass


class InvalidRequest(Exception):
    pass


class BackendUnavailable(Exception):
    """Real-model dependency or weights missing on this host."""


def hash_to_unit_vector(seed_text: str, dim: int) -> np.ndarray:
    """Seeded hash-to-sphere: deterministic but with nontrivial similarity
    structure, SHA-256 in counter mode."""
    raw = bytearray()
    counter = 0
    while len(raw) < dim * 8:
        raw += hashlib.sha256(f"{seed_text}#{counter}".encode("utf-8")).digest()
        counter += 1
    ints = np.frombuffer(bytes(raw[: dim * 8]), dtype=">u8").astype(np.float64)
    vec = ints / float(2**63) - 1.0
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec = np.ones(dim)
        norm = np.linalg.norm(vec)
    return vec / norm


def _parse_media_uri(media_uri: str) -> tuple[str, dict]:
    parsed = urlparse(media_uri)
    stem = Path(parsed.netloc + parsed.path).stem
    params = {k: v[0] for k, v in parse_qs(parsed.query).items()}
    return stem, params


class MockBackend:
    """No models, no I/O; every response derives from the request alone.

    Fixture URIs may steer content via query parameters: ?caption= and
    ?speech= override the default stem-based texts, ?silent=1 yields no
    speech under VAD filtering, ?audio= seeds the audio embedding, and
    ?noaudio=1 simulates media without an audio stream.
    """

    def __init__(self, dim: int):
        self.dim = dim

    @staticmethod
    def _check_media(media_uri: str) -> tuple[str, dict]:
        stem, params = _parse_media_uri(media_uri)
        if not media_uri.startswith("mock://") and not Path(media_uri).exists():
            raise MediaNotFound(media_uri)
        return stem, params

    def caption(self, media_uri: str, frame_indices: list[int]) -> list[dict]:
        stem, params = self._check_media(media_uri)
        if not frame_indices or any(i < 0 for i in frame_indices):
            raise InvalidRequest("frame_indices must be non-empty and non-negative")
        subject = params.get("caption", stem)
        return [
            {"frame_index": i, "text": f"mock caption {subject} frame {i}"}
            for i in frame_indices
        ]

    def transcribe(
        self, media_uri: str, temperature: float, beam_size: int, vad_filter: bool
    ) -> list[dict]:
        stem, params = self._check_media(media_uri)
        if params.get("silent") == "1" and vad_filter:
            return []
        subject = params.get("speech", stem)
        return [{"start_s": 0.0, "end_s": 2.0, "text": f"mock transcript {subject}"}]

    def audio_embedding(self, media_uri: str) -> np.ndarray:
        stem, params = self._check_media(media_uri)
        if params.get("noaudio") == "1":
            raise InvalidRequest("media has no audio stream")
        return hash_to_unit_vector(params.get("audio", stem), self.dim)

    def text_embeddings(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise InvalidRequest("texts must be non-empty")
        return np.stack([hash_to_unit_vector(t, self.dim) for t in texts])


def _require_local_file(media_uri: str) -> Path:
    path = Path(urlparse(media_uri).path if "://" in media_uri else media_uri)
    if not path.exists():
        raise MediaNotFound(media_uri)
    return path


class Blip2CaptionBackend:
    """Frame captioning with a BLIP-2 checkpoint via transformers."""

    def __init__(self, model_id: str, device: str):
        self.model_id = model_id
        self.device = device
        self._lock = threading.Lock()
        self._model = None
        self._processor = None

    def _load(self):
        if self._model is not None:
            return
        try:
            import torch  # noqa: F401
            from transformers import Blip2ForConditionalGeneration, Blip2Processor
        except ImportError as exc:
            raise BackendUnavailable(f"captioning dependencies missing: {exc}") from exc
        try:
            self._processor = Blip2Processor.from_pretrained(self.model_id)
            self._model = Blip2ForConditionalGeneration.from_pretrained(self.model_id)
            self._model.to(self.device)
        except Exception as exc:
            raise BackendUnavailable(f"cannot load {self.model_id}: {exc}") from exc

    @staticmethod
    def _read_frames(path: Path, frame_indices: list[int]):
        try:
            import cv2
        except ImportError as exc:
            raise BackendUnavailable(f"opencv missing: {exc}") from exc
        capture = cv2.VideoCapture(str(path))
        total = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
        frames = []
        try:
            for index in frame_indices:
                if index < 0 or (total > 0 and index >= total):
                    raise InvalidRequest(f"frame index {index} out of range (total {total})")
                capture.set(cv2.CAP_PROP_POS_FRAMES, index)
                ok, frame = capture.read()
                if not ok:
                    raise InvalidRequest(f"cannot decode frame {index}")
                frames.append(cv2.cvtColor(frame, cv2.COLOR_BGR2RGB))
        finally:
            capture.release()
        return frames

    def caption(self, media_uri: str, frame_indices: list[int]) -> list[dict]:
        if not frame_indices:
            raise InvalidRequest("frame_indices must be non-empty")
        path = _require_local_file(media_uri)
        frames = self._read_frames(path, frame_indices)
        self._load()
        rows = []
        with self._lock:  # inference never interleaves within one model
            for index, frame in zip(frame_indices, frames):
                inputs = self._processor(images=frame, return_tensors="pt").to(self.device)
                output = self._model.generate(**inputs, max_new_tokens=40)
                text = self._processor.decode(output[0], skip_special_tokens=True).strip()
                rows.append({"frame_index": index, "text": text})
        return rows


class FasterWhisperAsrBackend:
    """Speech recognition via faster-whisper."""

    def __init__(self, model_id: str, device: str):
        self.model_id = model_id
        self.device = device
        self._lock = threading.Lock()
        self._model = None

    def _load(self):
        if self._model is not None:
            return
        try:
            from faster_whisper import WhisperModel
        except ImportError as exc:
            raise BackendUnavailable(f"faster-whisper missing: {exc}") from exc
        try:
            self._model = WhisperModel(self.model_id, device=self.device)
        except Exception as exc:
            raise BackendUnavailable(f"cannot load {self.model_id}: {exc}") from exc

    def transcribe(
        self, media_uri: str, temperature: float, beam_size: int, vad_filter: bool
    ) -> list[dict]:
        path = _require_local_file(media_uri)
        self._load()
        with self._lock:
            segments, _ = self._model.transcribe(
                str(path),
                temperature=temperature,
                beam_size=beam_size,
                vad_filter=vad_filter,
            )
            return [
                {"start_s": float(s.start), "end_s": float(s.end), "text": s.text.strip()}
                for s in segments
            ]


class ImageBindAudioBackend:
    """Audio and text embeddings in a joint space via ImageBind."""

    def __init__(self, model_id: str, device: str):
        self.model_id = model_id
        self.device = device
        self._lock = threading.Lock()
        self._model = None

    def _load(self):
        if self._model is not None:
            return
        try:
            import torch  # noqa: F401
            from imagebind.models import imagebind_model
        except ImportError as exc:
            raise BackendUnavailable(f"imagebind missing: {exc}") from exc
        try:
            self._model = imagebind_model.imagebind_huge(pretrained=True)
            self._model.eval()
            self._model.to(self.device)
        except Exception as exc:
            raise BackendUnavailable(f"cannot load imagebind: {exc}") from exc

    @staticmethod
    def _normalize(matrix: np.ndarray) -> np.ndarray:
        return matrix / np.linalg.norm(matrix, axis=-1, keepdims=True)

    def audio_embedding(self, media_uri: str) -> np.ndarray:
        path = _require_local_file(media_uri)
        self._load()
        import torch
        from imagebind import data
        from imagebind.models.imagebind_model import ModalityType

        with self._lock, torch.no_grad():
            inputs = {
                ModalityType.AUDIO: data.load_and_transform_audio_data(
                    [str(path)], self.device
                )
            }
            embedding = self._model(inputs)[ModalityType.AUDIO].cpu().numpy()[0]
        return self._normalize(embedding)

    def text_embeddings(self, texts: list[str]) -> np.ndarray:
        if not texts:
            raise InvalidRequest("texts must be non-empty")
        self._load()
        import torch
        from imagebind import data
        from imagebind.models.imagebind_model import ModalityType

        with self._lock, torch.no_grad():
            inputs = {ModalityType.TEXT: data.load_and_transform_text(texts, self.device)}
            matrix = self._model(inputs)[ModalityType.TEXT].cpu().numpy()
        return self._normalize(matrix)
