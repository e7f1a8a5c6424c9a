"""Sidecar configuration."""

from __future__ import annotations

from dataclasses import dataclass

MODES = ("real", "mock")


@dataclass(frozen=True)
class SidecarConfig:
    """Service settings. Mock mode never loads model weights."""

    port: int = 8008
    mode: str = "mock"
    caption_backend: str = "blip2-flan-t5-xxl"
    asr_backend: str = "faster-whisper"
    audio_backend: str = "imagebind"
    device: str = "cpu"
    embedding_dim: int = 16  # mock mode only; real backends declare their own

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.port < 1:
            raise ValueError("port must be positive")
