"""phone2wave: desk-scale phoneme-to-waveform diffusion synthesis on numpy."""

__version__ = "1.0.0"
