"""Falsification of black-box control policies and shield-based defense.

Subpackages and modules:

- :mod:`aegis.envsim` -- plant models, rollouts, bundled benchmarks
- :mod:`aegis.specdsl` -- safety specification language and reward semantics
- :mod:`aegis.neuralctl` -- dense nets, DDPG-style trainer, LQR, policies
- :mod:`aegis.gpopt` -- Gaussian-process surrogate and EI box minimization
- :mod:`aegis.attack` -- epsilon selection, random and BO state attacks
- :mod:`aegis.forest` -- from-scratch random forest and feature importance
- :mod:`aegis.detector` -- attack-data labeling and safe/unsafe classifier
- :mod:`aegis.shield` -- auxiliary policy training and shielded execution
- :mod:`aegis.harness` -- experiment pipeline, reports, transferability
"""

__version__ = "0.1.0"
