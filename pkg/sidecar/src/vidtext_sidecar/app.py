"""HTTP surface of the perception sidecar.

Wire protocol (all JSON):
    POST /v1/caption          {media_uri, frame_indices[]} -> {captions: [...]}
    POST /v1/transcribe       {media_uri, temperature, beam_size, vad_filter}
                              -> {segments: [...]}
    POST /v1/audio_embedding  {media_uri} -> {embedding: [...], dim}
    POST /v1/text_embeddings  {texts: [...]} -> {embeddings: [[...]], dim}
    GET  /v1/health           -> {status, backends}

The sidecar is stateless; all caching lives in the caller.
"""

from __future__ import annotations

import argparse

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .backends import (
    BackendUnavailable,
    Blip2CaptionBackend,
    FasterWhisperAsrBackend,
    ImageBindAudioBackend,
    InvalidRequest,
    MediaNotFound,
    MockBackend,
)
from .config import SidecarConfig


class CaptionRequest(BaseModel):
    media_uri: str
    frame_indices: list[int]


class TranscribeRequest(BaseModel):
    media_uri: str
    temperature: float = Field(default=0.0, ge=0.0)
    beam_size: int = Field(default=5, ge=1)
    vad_filter: bool = True


class AudioEmbeddingRequest(BaseModel):
    media_uri: str


class TextEmbeddingsRequest(BaseModel):
    texts: list[str]


def _http_error(exc: Exception) -> HTTPException:
    if isinstance(exc, MediaNotFound):
        return HTTPException(status_code=404, detail=str(exc))
    if isinstance(exc, InvalidRequest):
        return HTTPException(status_code=422, detail=str(exc))
    if isinstance(exc, BackendUnavailable):
        return HTTPException(status_code=503, detail=str(exc))
    raise exc


def create_app(config: SidecarConfig | None = None) -> FastAPI:
    config = config or SidecarConfig()
    app = FastAPI(title="vidtext perception sidecar")

    if config.mode == "mock":
        mock = MockBackend(dim=config.embedding_dim)
        caption_backend = asr_backend = audio_backend = mock
    else:
        caption_backend = Blip2CaptionBackend(config.caption_backend, config.device)
        asr_backend = FasterWhisperAsrBackend(config.asr_backend, config.device)
        audio_backend = ImageBindAudioBackend(config.audio_backend, config.device)

    @app.post("/v1/caption")
    def caption(request: CaptionRequest):
        try:
            rows = caption_backend.caption(request.media_uri, request.frame_indices)
        except Exception as exc:
            raise _http_error(exc)
        return {"captions": rows}

    @app.post("/v1/transcribe")
    def transcribe(request: TranscribeRequest):
        try:
            segments = asr_backend.transcribe(
                request.media_uri, request.temperature, request.beam_size, request.vad_filter
            )
        except Exception as exc:
            raise _http_error(exc)
        return {"segments": segments}

    @app.post("/v1/audio_embedding")
    def audio_embedding(request: AudioEmbeddingRequest):
        try:
            embedding = audio_backend.audio_embedding(request.media_uri)
        except Exception as exc:
            raise _http_error(exc)
        return {"embedding": embedding.tolist(), "dim": int(embedding.shape[0])}

    @app.post("/v1/text_embeddings")
    def text_embeddings(request: TextEmbeddingsRequest):
        try:
            matrix = audio_backend.text_embeddings(request.texts)
        except Exception as exc:
            raise _http_error(exc)
        return {"embeddings": matrix.tolist(), "dim": int(matrix.shape[1])}

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "backends": {
                "mode": config.mode,
                "caption": "mock" if config.mode == "mock" else config.caption_backend,
                "asr": "mock" if config.mode == "mock" else config.asr_backend,
                "audio": "mock" if config.mode == "mock" else config.audio_backend,
            },
        }

    return app


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Run the perception sidecar.")
    parser.add_argument("--port", type=int, default=8008)
    parser.add_argument("--mode", choices=("real", "mock"), default="mock")
    parser.add_argument("--caption-backend", default="blip2-flan-t5-xxl")
    parser.add_argument("--asr-backend", default="faster-whisper")
    parser.add_argument("--audio-backend", default="imagebind")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--embedding-dim", type=int, default=16)
    args = parser.parse_args(argv)

    import uvicorn

    config = SidecarConfig(
        port=args.port,
        mode=args.mode,
        caption_backend=args.caption_backend,
        asr_backend=args.asr_backend,
        audio_backend=args.audio_backend,
        device=args.device,
        embedding_dim=args.embedding_dim,
    )
    uvicorn.run(create_app(config), host="127.0.0.1", port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
