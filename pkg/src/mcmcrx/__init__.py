"""MCMC-based MIMO receiver processing at desk scale.

Subpackages/modules:

* :mod:`mcmcrx.core` — constellations, Gray mapping, complex-to-real models
* :mod:`mcmcrx.channel` — seeded channel/pilot/noise generators
* :mod:`mcmcrx.engine` — MH acceptance, annealing, parallel chain runner
* :mod:`mcmcrx.estimation` — spike-and-slab Gibbs channel estimation
* :mod:`mcmcrx.detection` — Gibbs / NAG / discrete-Langevin MIMO detectors
* :mod:`mcmcrx.decoding` — MCMC decoding of linear codes, alist I/O, BP
* :mod:`mcmcrx.unified` — joint channel+symbol sampler over a frame
* :mod:`mcmcrx.bench` — experiment configs, metrics, CSV, figures, CLI
"""

from .core import build_constellation, hard_demap, modulate, to_real_model

__all__ = ["build_constellation", "modulate", "hard_demap", "to_real_model"]

__version__ = "0.1.0"
