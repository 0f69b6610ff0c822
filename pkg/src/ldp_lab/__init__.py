"""
ldp-lab: executable small-noise large deviations for diffusions

Hypothesis probing, rate-functional evaluation and minimization, tamed
Euler simulation and Monte Carlo checks of exponential bounds.
"""

__version__ = "0.1.0"
