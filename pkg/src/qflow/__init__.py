"""Newton-Raphson load flow with classical LU and simulated HHL linear solvers."""
