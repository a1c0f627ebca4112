"""Pathwise simulator and experiment harness for a stochastic coupled
atmosphere-ocean model: a 1-D stochastic energy balance equation coupled to
2-D Boussinesq vorticity/heat/salinity flow, integrated as a random
dynamical system via an Ornstein-Uhlenbeck transform."""

__version__ = "0.1.0"

from .grid import (
    BoundarySpec,
    Field1D,
    Field2D,
    Grid2D,
    arakawa_jacobian,
    diffusion_apply,
    poisson_solve_dirichlet,
    trace_top,
)
from .grid import norms as field_norms
from .model import (
    CoupledState,
    ModelParams,
    TransformedState,
    default_params,
    rhs_transformed,
    simulate,
    state_norms,
    step_imex,
    to_u,
    to_v,
)
from .stochastic import (
    NoiseSpectrum,
    OUPath,
    ou_advance,
    stationary_ou_path,
    wiener_increment,
    wiener_shift,
)
from .diagnostics import (
    AbsorbingReport,
    EnergyRecord,
    EnergyRecorder,
    absorbing_radius_r1,
    check_dissipativity,
    energy_ledger,
    poincare_check,
)
from .seeding import seed_split


def norms(obj):
    """Trapezoidal norms of a field or the composite norms of a state."""
    from . import grid as _grid
    from . import model as _model

    if isinstance(obj, (_grid.Field1D, _grid.Field2D)):
        return _grid.norms(obj)
    if isinstance(obj, (_model.CoupledState, _model.TransformedState)):
        n = _model.state_norms(obj)
        return _grid.NormPair(n.h_sq, n.grad_sq)
    raise TypeError(f"norms() expects a field or state, got {type(obj).__name__}")
