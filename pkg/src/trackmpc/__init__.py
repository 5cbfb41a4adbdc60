"""Model predictive control for tracking references generated by a linear exosystem.

The offline pipeline (:mod:`trackmpc.synthesis`) turns a plant and an
exosystem into a :class:`~trackmpc.synthesis.ControllerDesign`; the online
controller lives in :mod:`trackmpc.mpc` and the closed-loop harness in
:mod:`trackmpc.sim`.
"""

__version__ = "0.1.0"
