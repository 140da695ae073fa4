"""Built-in states, observable pairs and device specifications."""

from __future__ import annotations

import numpy as np

from .chsh import planar_optimal_observables
from .linalg import PHI_PLUS, ValidationError, X, Z, planar_observable
from .protocol.devices import DeviceModel, planted_highdim_strategy, werner_state

STATE_PRESETS = ("phi-plus", "werner", "maximally-mixed", "classical-z")
PAIR_PRESETS = ("z-x", "zi-xi", "z-z")


def state_preset(name: str, visibility: float | None = None) -> np.ndarray:
    """Density matrix of a named two-qubit preset.

    ``werner`` needs ``visibility``; the other presets ignore it. A name of
    the form ``werner-0.8`` is accepted as shorthand.
    """
    if name.startswith("werner-"):
        try:
            visibility = float(name.split("-", 1)[1])
        except ValueError:
            raise ValidationError("werner preset visibility is a number", name) from None
        name = "werner"
    if name == "phi-plus":
        return np.outer(PHI_PLUS, PHI_PLUS.conj())
    if name == "werner":
        if visibility is None or not 0.0 <= visibility <= 1.0:
            raise ValidationError("werner visibility in [0, 1]", repr(visibility))
        return werner_state(visibility)
    if name == "maximally-mixed":
        return np.eye(4, dtype=complex) / 4.0
    if name == "classical-z":
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1.0
        return rho
    raise ValidationError("state preset is known", f"{name!r} not in {STATE_PRESETS}")


def pair_preset(name: str) -> tuple[np.ndarray, np.ndarray]:
    i2 = np.eye(2)
    pairs = {
        "z-x": (Z, X),
        "zi-xi": (np.kron(Z, i2), np.kron(X, i2)),
        "z-z": (Z, Z),
    }
    if name not in pairs:
        raise ValidationError("observable preset is known", f"{name!r} not in {PAIR_PRESETS}")
    return pairs[name]


_DEVICE_KEYS = {
    "honest-noisy": {"visibility", "key_angle"},
    "collective-iid": {"preset", "visibility", "key_angle"},
    "highdim-blockdiag": {"blocks_a", "blocks_b", "noise", "seed"},
    "coherent-memoryless-mixture": {"blocks_a", "blocks_b", "noise", "seed"},
}


def device_from_spec(doc: dict | None) -> DeviceModel:
    """Build a device model from a config ``device`` section.

    Missing section means noiseless honest devices. The mixture kind is the
    Jordan reduction of the matching high-dimensional device.
    """
    if doc is None:
        return DeviceModel.honest_noisy(1.0)
    if not isinstance(doc, dict) or doc.get("kind") not in _DEVICE_KEYS:
        raise ValidationError("device kind is known", repr(doc.get("kind") if isinstance(doc, dict) else doc))
    kind = doc["kind"]
    unknown = sorted(set(doc) - _DEVICE_KEYS[kind] - {"kind"})
    if unknown:
        raise ValidationError("device section has no unknown fields", ", ".join(unknown))
    key_angle = float(doc.get("key_angle", np.pi / 4))
    if kind == "honest-noisy":
        return DeviceModel.honest_noisy(float(doc.get("visibility", 1.0)), key_angle)
    if kind == "collective-iid":
        preset = doc.get("preset", "phi-plus")
        if preset == "classical-z":
            return DeviceModel.classical_z()
        alice, bob = planar_optimal_observables()
        alice = (alice[0], alice[1], planar_observable(key_angle))
        return DeviceModel.collective_iid(state_preset(preset, doc.get("visibility")), alice, bob, preset)
    rng = np.random.default_rng(int(doc.get("seed", 0)))
    strategy = planted_highdim_strategy(
        int(doc.get("blocks_a", 2)), int(doc.get("blocks_b", 2)), rng, float(doc.get("noise", 0.05))
    )
    device = DeviceModel.highdim_blockdiag(strategy)
    return device if kind == "highdim-blockdiag" else device.reduced()
