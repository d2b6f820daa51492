"""Secret-key-rate simulator for repeater-assisted, trust-free MDI-QKD links."""

__version__ = "0.1.0"
