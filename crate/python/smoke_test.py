"""Smoke test for the `motc` extension module.

Build and install first, e.g. `maturin develop --release -m crates/python/Cargo.toml`.
"""

import json
import math
import sys

import motc


def check(condition, message):
    if not condition:
        print(f"FAIL {message}")
        sys.exit(1)
    print(f"ok   {message}")


def main():
    system = motc.QuantumSystem.model(levels=5, t_final=20.0, q=256)
    check(system.dim == 5 and system.q == 256, "model system shape")

    field = motc.ControlField.sampled(system, seed=3)
    check(len(field) == system.q, "sampled field length")
    again = motc.ControlField.sampled(system, seed=3)
    check(field.samples == again.samples, "sampled fields are reproducible")

    prop = motc.propagate(system, field)
    check(prop.unitarity_deviation() < 1e-9, "propagators stay unitary")

    state = motc.StateSpec.thermal(system, 1.0, rank=3)
    check(state.rank == 3 and abs(sum(state.eigenvalues) - 1.0) < 1e-12, "truncated thermal state")

    observables = motc.ObservableSet.sampled(seed=7, m=2, levels=5)
    phi = motc.expectations(prop, state, observables)
    grads = motc.gradients(prop, state, observables)
    check(len(phi) == 2 and len(grads) == 2 and len(grads[0]) == system.q, "expectations and gradients")

    # Central difference of the first expectation at one interior sample.
    j, h = system.q // 3, 1e-4
    weights = system.weights()
    shifted = []
    for sign in (1.0, -1.0):
        samples = list(field.samples)
        samples[j] += sign * h
        shifted.append(motc.expectations(motc.propagate(system, motc.ControlField(samples)), state, observables)[0])
    fd = (shifted[0] - shifted[1]) / (2.0 * h * weights[j])
    check(abs(fd - grads[0][j]) <= 1e-4 * (1.0 + abs(fd)), f"gradient matches central difference ({fd:.6e})")

    check(motc.natural_rank(prop, state) <= 25, "natural-basis rank bounded by N^2")
    check(motc.observable_gramian_condition(prop, state, observables) >= 1.0, "observable Gramian condition")
    check(math.isfinite(motc.propagator_gramian_condition(prop)), "propagator Gramian condition")

    theta = observables.observable(0)
    check(motc.kinematic_maximum(state, theta) >= phi[0] - 1e-12, "kinematic maximum bounds the expectation")

    config = {
        "seed": 11,
        "system": {"levels": 3, "t_final": 10.0, "q": 64},
        "state": {"kind": "pure"},
        "states": [{"kind": "pure"}],
        "observables": [2],
        "samples": 4,
    }
    doc = json.loads(motc.run_experiment("gramian-dist", json.dumps(config)))
    check(doc["experiment"] == "gramian-dist" and doc["seed"] == 11, "experiment summary document")
    check(doc["config_hash"] == motc.config_hash(json.dumps(config)), "summary carries the config hash")

    try:
        motc.run_experiment("gramian-dist", json.dumps({"samples": 0}))
    except ValueError:
        check(True, "invalid configuration raises ValueError")
    else:
        check(False, "invalid configuration raises ValueError")

    print("smoke test passed")


if __name__ == "__main__":
    main()
