"""Streaming CNN accelerator model: layer IR, fixed-point arithmetic, reference
execution, throughput balancing and a cycle-level pipeline simulator."""

__version__ = "0.1.0"
