"""Multimodal emotion-prompt alignment, emotion-conditioned toy TTS, and
objective speech evaluation (WER, CER, MCD, SECS, MOS aggregation) on
deterministic synthetic data."""

__version__ = "0.1.0"
