"""Simulation and verification of tree growth chains with uniform backward dynamics."""
