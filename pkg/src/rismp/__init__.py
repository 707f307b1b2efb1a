"""RIS-assisted end-to-end multi-path uplink latency simulator and optimizer."""

__version__ = "0.1.0"
