"""Chern-Ricci flow on compact complex surfaces."""
from .errors import *  # noqa: F401,F403
from .hermitian import (ComplexPoint, HermitianForm, MetricField, chern_ricci_fd,  # noqa: F401
                        complex_hessian_fd, det_g, gauduchon_defect_fd, is_positive, trace_with)

__version__ = "0.1.0"
