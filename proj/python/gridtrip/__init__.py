"""Co-simulation and aggregate DER tripping models."""

import os as _os

_data = _os.path.join(_os.path.dirname(__file__), "data")
if _os.path.isdir(_data):
    _os.environ.setdefault("GRIDTRIP_DATA", _data)

from ._core import (  # noqa: E402
    ConfigError,
    DerAParams,
    DerCode,
    Family,
    IoError,
    NumericalError,
    PiParams,
    Side,
    dera_simulate,
    default_model_predict,
    fixtures_dir,
    generate_suite,
    mae,
    pi_simulate,
    pso_minimize,
    read_traces,
    simulate_scenario,
)

__all__ = [
    "ConfigError",
    "DerAParams",
    "DerCode",
    "Family",
    "IoError",
    "NumericalError",
    "PiParams",
    "Side",
    "dera_simulate",
    "default_model_predict",
    "fixtures_dir",
    "generate_suite",
    "mae",
    "pi_simulate",
    "pso_minimize",
    "read_traces",
    "simulate_scenario",
]
