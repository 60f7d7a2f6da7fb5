"""Variational families and the energy functional."""
from .core import (
    EnergyBreakdown,
    antisymmetrize_product,
    density,
    energy,
    exchange_integral,
    one_and_two_body,
    product_pair_terms,
)
from .states import (
    HartreeProduct,
    PairCorrelated,
    PairFactor,
    SlaterDeterminant,
    TwoBodyFull,
    gaussian_orbital,
    lowdin,
)

__all__ = [
    "EnergyBreakdown",
    "HartreeProduct",
    "PairCorrelated",
    "PairFactor",
    "SlaterDeterminant",
    "TwoBodyFull",
    "antisymmetrize_product",
    "density",
    "energy",
    "exchange_integral",
    "gaussian_orbital",
    "lowdin",
    "one_and_two_body",
    "product_pair_terms",
]
