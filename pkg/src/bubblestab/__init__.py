"""Feedback stabilization of a circular Stokes bubble with surface tension.

Modules: ``geometry`` (interface fields and norms), ``stokes_mode`` (per-mode two-phase
Stokes solves), ``steklov`` (traction-to-velocity operator), ``modal_control`` (spectrum
and Riccati feedback), ``evolve`` (linear time stepping), ``extension`` (harmonic
extension), ``nonlinear`` (transformed problem and Picard closed loop), ``cli``.
"""

from .config import BubbleConfig, ConfigError, load_config
from .geometry import FrameField

__all__ = ["BubbleConfig", "ConfigError", "FrameField", "load_config"]
__version__ = "0.1.0"
