"""fidmag: digital twin of an unshielded microscale FID magnetometer.

Synthesises Faraday-polarimeter free-induction-decay records from a
physically grounded field-and-atom model, reconstructs the precession phase
by Hilbert demodulation, and performs dc/ac field estimation with the full
sensitivity and Cramer-Rao calculus, verified by Monte Carlo experiment
harnesses.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
