"""Joint layer placement and per-layer quantization planning for
pipelined autoregressive inference on edge clusters."""

__version__ = "0.1.0"
