"""Bundled simulation-study DGP fixtures.

Preset names are part of the CLI contract; each maps to the parameter
blocks of a data-generating process at its canonical sample size.  The
competing-model DGP shares the measurement and correlation blocks but
has no factor SV block.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .model import (
    CorrDynParams,
    FactorDataset,
    MeasurementParams,
    ModelState,
    ModelVariant,
    SvParams,
    simulate_odcfmsv,
    simulate_pg,
)

__all__ = ["PRESETS", "preset_blocks", "simulate_preset"]

_B_COL1 = [1.00, 0.30, -0.05, 0.99, 0.99, -0.10, 0.00, 0.56, 0.00, 0.00]
_B_COL2 = [0.00, 1.00, 0.34, 0.00, 0.00, 0.95, 0.95, 0.00, 0.00, 0.30]
_OMEGA = [0.05, 0.10, 0.13, 0.24, 0.35, 0.35, 0.24, 0.13, 0.10, 0.05]


def _study_measurement() -> MeasurementParams:
    B = np.column_stack([_B_COL1, _B_COL2])
    return MeasurementParams(B=B, omega=np.array(_OMEGA))


def _study_sv() -> SvParams:
    return SvParams(
        mu=np.array([-0.2, -0.5]),
        phi=np.array([0.95, 0.98]),
        sigma_eta_sq=np.array([0.01, 0.0729]),
    )


def _study_corr() -> CorrDynParams:
    A = np.linalg.inv(np.array([[1.0, 0.05], [0.05, 1.0]]))
    return CorrDynParams(A=A, d=0.8, k=25.0)


PRESETS: dict[str, dict] = {
    "paper-3.1": {
        "T": 1000,
        "variant": ModelVariant.ODCFMSV,
        "measurement": _study_measurement,
        "sv": _study_sv,
        "corr": _study_corr,
    },
    "paper-3.1-pg": {
        "T": 1000,
        "variant": ModelVariant.PG,
        "measurement": _study_measurement,
        "sv": None,
        "corr": _study_corr,
    },
}


def preset_blocks(name: str) -> dict:
    """Parameter blocks of a named preset, instantiated fresh."""
    try:
        spec = PRESETS[name]
    except KeyError:
        known = ", ".join(sorted(PRESETS))
        raise ConfigError(f"unknown preset {name!r}; available: {known}") from None
    out = {"T": spec["T"], "variant": spec["variant"]}
    out["measurement"] = spec["measurement"]()
    out["sv"] = spec["sv"]() if spec["sv"] is not None else None
    out["corr"] = spec["corr"]()
    return out


def simulate_preset(
    name: str, rng: np.random.Generator, T: int | None = None
) -> tuple[FactorDataset, ModelState]:
    """Simulate a dataset from a named preset, optionally resized."""
    blocks = preset_blocks(name)
    n = blocks["T"] if T is None else int(T)
    if n < 2:
        raise ConfigError(f"preset sample size must be at least 2, got {n}")
    if blocks["variant"] is ModelVariant.PG:
        return simulate_pg(blocks["measurement"], blocks["corr"], n, rng)
    return simulate_odcfmsv(
        blocks["measurement"], blocks["sv"], blocks["corr"], n, rng
    )
