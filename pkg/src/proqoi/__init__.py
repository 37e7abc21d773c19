"""Progressive retrieval of floating-point fields with certified error
bounds on derived quantities of interest."""
from .bounds import *  # noqa: F401,F403
from .bounds import __all__ as _bounds_all
from .codec import *  # noqa: F401,F403
from .codec import __all__ as _codec_all
from .expr import *  # noqa: F401,F403
from .expr import __all__ as _expr_all
from .ge import GE_FORMULAS, GE_VARIABLES, builtin_ge_qois, ge_closed_form
from .parse import QoiSyntaxError, parse_qoi
from .retrieve import *  # noqa: F401,F403
from .retrieve import __all__ as _retrieve_all
from .scan import BACKEND, CompiledQoi, available_backends, scan_qoi

__version__ = "0.1.0"

__all__ = [
    *_expr_all,
    *_bounds_all,
    *_codec_all,
    *_retrieve_all,
    "QoiSyntaxError",
    "parse_qoi",
    "GE_FORMULAS",
    "GE_VARIABLES",
    "builtin_ge_qois",
    "ge_closed_form",
    "BACKEND",
    "CompiledQoi",
    "available_backends",
    "scan_qoi",
]
