"""Reeb-Beltrami correspondence and the Kepler-Euler flow."""

__version__ = "0.1.0"

from .chart_geometry import (Chart, ChartKind, MetricField, conformal_metric, gauss_curvature,
                             regime_metric, stereo_chart)
from .correspondence import (GroupAction, beltrami_to_contact, construct_J, haar_average_metric,
                             kepler_symmetry_action, reeb_to_metric)
from .cotangent_lift import (GeodesicKind, adapted_metric_check, classify_geodesic, lift_metric,
                             liouville_form, reeb_field)
from .dynamics import (IntegratorConfig, Method, OrbitClass, Trajectory, compare_regularized,
                       detect_periodicity, integrate, integrate_regularized)
from .exterior_calculus import (KForm, ScalarField, VectorField, VolumeForm, curl, divergence,
                                exterior_derivative, wedge)
from .kepler_hamiltonians import (Hamiltonian, PhasePoint, kepler_hamiltonian,
                                  mechanical_hamiltonian, regularized_K)
from .reports import VerificationReport

__all__ = [name for name in dir() if not name.startswith("_")]
