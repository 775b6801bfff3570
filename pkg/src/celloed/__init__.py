"""Information-optimal current-excitation design for lithium-ion cell
rate-constant identification.

Subpackages cover the reduced-order cell model, rate-constant voltage
sensitivities and Fisher information, the excitation-design environment,
a TD3 designer, a receding-horizon baseline, conventional test profiles,
and least-squares parameter recovery. ``celloed.cli`` ties them together.
"""

from ._kernel import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
