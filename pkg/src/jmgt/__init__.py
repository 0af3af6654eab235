"""Pseudo-spectral simulator and verification toolkit for a third-order-in-time
acoustic wave equation with fading memory (JMGT-type, lossy hereditary media).
"""

from .kernels import (
    ExponentialKernel,
    KernelReport,
    MemoryKernel,
    TabulatedKernel,
    ZeroKernel,
    check_assumptions,
    effective_speed_squared,
    eval_kernel,
    load_kernel_table,
    total_mass,
)
from .spectral import Field, Grid
from .state import (
    ClosureMoment,
    HistoryConfig,
    HistoryField,
    State,
    SystemParams,
    classify_regime,
    init_state,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "ExponentialKernel", "KernelReport", "MemoryKernel", "TabulatedKernel",
    "ZeroKernel", "check_assumptions", "effective_speed_squared",
    "eval_kernel", "load_kernel_table", "total_mass",
    "Field", "Grid",
    "ClosureMoment", "HistoryConfig", "HistoryField", "State", "SystemParams",
    "classify_regime", "init_state", "load_checkpoint", "save_checkpoint",
    "__version__",
]
