"""Local-global model reduction for stochastic PDE-constrained optimal control."""
