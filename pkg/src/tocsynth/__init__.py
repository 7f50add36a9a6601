"""Time-optimal bang-bang feedback synthesis for chains of integrators."""
