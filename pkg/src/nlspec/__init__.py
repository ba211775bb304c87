"""Classical engine for nonlinear response functions of kicked spin systems.

Reconstructs order-m response functions of driven spin models from finitely
many shifted-amplitude evaluations of the measured signal, cross-validated
against nested-commutator, finite-difference, and stepwise-subtraction
references, with shot-noise modeling and frequency-domain analysis.
"""

__version__ = "0.1.0"
