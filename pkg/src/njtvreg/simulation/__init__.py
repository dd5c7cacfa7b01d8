"""Phantom generation, degradation pipeline and the simulation study."""
