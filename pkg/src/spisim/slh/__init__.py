"""Cascaded SLH master-equation engine."""
from .integrate import IntegrationError, Trajectory, TruncationError, integrate
from .liouvillian import Liouvillian, apply_efficiency, assemble_generator
from .model import (CascadedModel, driven_model, long_time_floor, numeric_qbhat, qbhat_numeric,
                    spi_model)
from .operators import HilbertLayout, Op
from .triple import (SLHTriple, ShapedCoupling, coherent_cutoff, coherent_drive_triple, default_layout,
                     emitter_triple, initial_density, series_product, shaped_bandwidth, virtual_source)

__all__ = [
    "CascadedModel", "HilbertLayout", "IntegrationError", "Liouvillian", "Op", "SLHTriple",
    "ShapedCoupling", "Trajectory", "TruncationError", "apply_efficiency", "assemble_generator",
    "coherent_cutoff", "coherent_drive_triple", "default_layout", "driven_model", "emitter_triple",
    "initial_density", "integrate", "long_time_floor", "numeric_qbhat", "qbhat_numeric",
    "series_product", "shaped_bandwidth", "spi_model", "virtual_source",
]
