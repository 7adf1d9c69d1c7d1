"""Planar impulse contact simulation with a learned stochastic residual."""
