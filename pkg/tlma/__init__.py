"""Two-layer movable-antenna uplink simulation and position optimization."""
