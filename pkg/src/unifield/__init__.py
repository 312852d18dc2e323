"""Unified Lagrangian-Hamiltonian formalism for first-order field theories on R^m x R^N."""
from .bundles import (
    JetPoint,
    LagrangianProblem,
    UnifiedPoint,
    coupling,
    hamiltonian_function,
    hamiltonian_section_hat,
    legendre_extended,
    legendre_invert,
    legendre_restricted,
    regularity,
    unified_forms,
    w0_residual,
    w1_residual,
)
from .chart import Chart
from .errors import UnifieldError
from .exterior import Form, MultiVector, VectorField, contract, contract_multi, ext_d, pullback_section, wedge
from .field_eqs import (
    FieldCoeffs,
    SectionExprs,
    build_multivector,
    el_residual,
    fl_relate,
    hdw_residual,
    holonomy_residual,
    semi_holonomy_check,
    solve_g_system,
    unified_residual,
)
from .parser import parse
from .solver import Grid, export_csv, residual_report, solve_dirichlet
from .symbolic import diff, evaluate, fd_check

__version__ = "0.1.0"
