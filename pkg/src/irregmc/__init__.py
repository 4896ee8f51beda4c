"""Monte Carlo toolkit for irregular functionals of uniformly elliptic SDEs.

Modules: randomkit (coupled Brownian increments), sde (Euler-Maruyama and
built-in models), payoff (irregular functionals, Young-function toolkit, rate
tables), maximal (Hardy-Littlewood operators and pointwise estimates),
avikainen (error curves and inequality checks), mlmc (multilevel estimator and
complexity sweeps), diagnostics (terminal-density envelopes), cli (experiment
runner).
"""

__version__ = "0.1.0"
