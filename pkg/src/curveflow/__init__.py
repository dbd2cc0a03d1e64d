"""Simulation and diagnostics for non-local curvature flows of plane curves."""
