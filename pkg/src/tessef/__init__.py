"""Transcription-free temporal event detection: state-space encoder,
pairwise interval scoring and exact semi-CRF decoding, with a synthetic
corpus, detection metrics and a training CLI."""

__version__ = "0.1.0"
