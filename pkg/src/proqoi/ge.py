"""Flow quantities over velocity, pressure and density fields.

All six quantities are written over the variables ``Vx, Vy, Vz, P, D``.
Intermediate quantities (temperature, speed of sound, Mach number) are
substituted inline, so every tree is self-contained.  The 3.5 power in total
pressure is written as ``b^3 * sqrt(b)``.
"""
from __future__ import annotations

import numpy as np

from .expr import QoiExpr
from .parse import parse_qoi

GE_VARIABLES = ("Vx", "Vy", "Vz", "P", "D")

R = 287.1
GAMMA = 1.4
MI = 3.5
MU_R = 1.716e-5
T_R = 273.15
S = 110.4

_VTOT = "sqrt(Vx^2 + Vy^2 + Vz^2)"
_T = f"(P / (D * {R!r}))"
_C = f"sqrt({GAMMA!r} * {R!r} * {_T})"
_MACH = f"(({_VTOT}) / ({_C}))"
_PT_BASE = f"(1 + {GAMMA / 2!r} * {_MACH}^2)"

GE_FORMULAS = {
    "VTOT": _VTOT,
    "T": _T,
    "C": _C,
    "Mach": _MACH,
    "PT": f"P * {_PT_BASE}^3 * sqrt{_PT_BASE}",
    "MU": (
        f"{MU_R!r} * ({_T} / {T_R!r}) * sqrt({_T} / {T_R!r})"
        f" * ({T_R!r} + {S!r}) * (1 / ({_T} + {S!r}))"
    ),
}


def builtin_ge_qois() -> dict[str, QoiExpr]:
    """The six named flow QoIs as trees over ``GE_VARIABLES``."""
    return {name: parse_qoi(text, GE_VARIABLES) for name, text in GE_FORMULAS.items()}


def ge_closed_form(vx, vy, vz, p, d) -> dict[str, np.ndarray]:
    """Direct formula evaluation used to cross-check the trees."""
    vtot = np.sqrt(vx**2 + vy**2 + vz**2)
    t = p / (d * R)
    c = np.sqrt(GAMMA * R * t)
    mach = vtot / c
    pt = p * (1 + GAMMA / 2 * mach * mach) ** MI
    mu = MU_R * (t / T_R) ** 1.5 * (T_R + S) / (t + S)
    return {"VTOT": vtot, "T": t, "C": c, "Mach": mach, "PT": pt, "MU": mu}
