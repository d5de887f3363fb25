"""Nonlocal and local energies, first variations and stiffness operators."""
from .energies import (FAMILIES, DualVector, EnergyInfinite, EnergyModel, assemble_stiffness_p2,
                       coo_text, energy_G_heterogeneous, energy_local, energy_total,
                       first_variation, seminorm_const_horizon, seminorm_heterogeneous)
from .load import CompatibilityError, LoadFunctional, load_pairing, load_vector
from .pairs import RadialRule, RowSet

__all__ = [
    "FAMILIES", "DualVector", "EnergyInfinite", "EnergyModel", "assemble_stiffness_p2",
    "coo_text", "energy_G_heterogeneous", "energy_local", "energy_total", "first_variation",
    "seminorm_const_horizon", "seminorm_heterogeneous", "CompatibilityError", "LoadFunctional",
    "load_pairing", "load_vector", "RadialRule", "RowSet",
]
