"""Named forcing and boundary-concentration presets for physical runs."""
from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

FORCING_PRESETS = ("zero", "vortex", "shear")
CD_PRESETS = ("constant", "affine", "lid")


def forcing(name: str, amplitude: float = 1.0, dim: int = 2):
    """Body force ``f(x)`` for ``x`` of shape (n, d); ``None`` for ``zero``.

    ``vortex`` swirls about the box centre (divergence-free in the plane
    of the first two coordinates); ``shear`` pushes along ``x_1`` with a
    profile in ``x_2``.
    """
    if name == "zero":
        return None
    if name == "vortex":
        def f(x):
            out = np.zeros_like(x)
            s0, s1 = np.sin(np.pi * x[:, 0]), np.sin(np.pi * x[:, 1])
            c0, c1 = np.cos(np.pi * x[:, 0]), np.cos(np.pi * x[:, 1])
            out[:, 0] = amplitude * s0 * s0 * 2 * s1 * c1
            out[:, 1] = -amplitude * 2 * s0 * c0 * s1 * s1
            return out
        return f
    if name == "shear":
        def f(x):
            out = np.zeros_like(x)
            out[:, 0] = amplitude * np.sin(np.pi * x[:, 1])
            return out
        return f
    raise ConfigurationError(f"unknown forcing preset {name!r}; choose one of {FORCING_PRESETS}")


def boundary_concentration(name: str, value: float = 1.0, low: float = 0.0, slope=None):
    """Boundary datum ``c_d``.

    ``constant``: ``value`` everywhere.  ``affine``: ``low + slope . x``
    (default slope ``(value - low)`` along ``x_1``).  ``lid``: ``value`` on
    the face ``x_d = 1`` of the unit box and ``low`` elsewhere.
    """
    if name == "constant":
        return float(value)
    if name == "affine":
        def c_d(x):
            s = np.zeros(x.shape[1])
            if slope is None:
                s[0] = value - low
            else:
                s[:] = slope
            return low + x @ s
        return c_d
    if name == "lid":
        def c_d(x):
            return np.where(x[:, -1] >= 1.0 - 1e-12, value, low)
        return c_d
    raise ConfigurationError(f"unknown c_d preset {name!r}; choose one of {CD_PRESETS}")
