"""Numerics for mean-field and classical limits of particle systems.

Submodules: potentials, transport, classical, vlasov, sampling, quantum,
semiclassical and harness.
"""

__version__ = "0.1.0"
