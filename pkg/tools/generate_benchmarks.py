#!/usr/bin/env python3
"""Regenerate the bundled benchmark JSON files.

Run from the repo root:  python tools/generate_benchmarks.py
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parent.parent / "src" / "aegis" / "benchmarks"


def interval_spec(bounds):
    parts = []
    for i, (lo, hi) in enumerate(bounds):
        parts.append(f"{lo} < x{i} & x{i} < {hi}")
    return " & ".join(parts)


def platoon_matrices(n_cars: int, dt: float):
    """Leader-velocity + (spacing, relative-velocity) chain, exact ZOH.

    State [v0, d1, w1, ..., d_{n-1}, w_{n-1}]; each follower's relative
    velocity is driven by the acceleration difference of the pair.
    """
    dim = 2 * n_cars - 1
    Ac = np.zeros((dim, dim))
    Bc = np.zeros((dim, n_cars))
    Bc[0, 0] = 1.0
    for i in range(1, n_cars):
        d_row = 2 * i - 1
        w_row = 2 * i
        Ac[d_row, w_row] = 1.0
        Bc[w_row, i - 1] = 1.0
        Bc[w_row, i] = -1.0
    # Ac is nilpotent of index 2, so the hold discretization is exact
    Ad = np.eye(dim) + dt * Ac
    Bd = dt * Bc + 0.5 * dt * dt * (Ac @ Bc)
    return Ad, Bd


def make_platoon(n_cars: int, horizon: int, w_bounds):
    dim = 2 * n_cars - 1
    dt = 0.1
    A, B = platoon_matrices(n_cars, dt)
    bounds = [(-2.0, 2.0)]
    for i in range(1, n_cars):
        bounds.append((-0.5, 0.5))
        bounds.append((-w_bounds[i - 1], w_bounds[i - 1]))
    return {
        "name": f"carplatoon{n_cars}",
        "kind": "linear",
        "state_dim": dim,
        "action_dim": n_cars,
        "horizon": horizon,
        "dt": dt,
        "action_limit": 10.0,
        "init_box": [[-0.1, 0.1]] * dim,
        "safety_spec": interval_spec(bounds),
        "has_published_bounds": True,
        "A": A.tolist(),
        "B": B.tolist(),
        "metadata": {"safety_box": [list(b) for b in bounds]},
    }


def make_pendulum():
    bounds = [(-0.5, 0.5), (-0.5, 0.5)]
    return {
        "name": "pendulum",
        "kind": "pendulum",
        "state_dim": 2,
        "action_dim": 1,
        "horizon": 200,
        "dt": 0.05,
        "gravity": 9.81,
        "mass": 1.0,
        "length": 1.0,
        "action_limit": 15.0,
        "init_box": [[-0.3, 0.3], [-0.3, 0.3]],
        "safety_spec": interval_spec(bounds),
        "has_published_bounds": True,
        "metadata": {"safety_box": [list(b) for b in bounds]},
    }


def make_helicopter():
    dim, n_act, dt = 28, 8, 0.05
    blocks = []
    for j in range(dim // 2):
        theta = 0.05 + 0.015 * j
        c, s = np.cos(theta), np.sin(theta)
        blocks.append(np.array([[c, -s], [s, c]]))
    A = np.zeros((dim, dim))
    for j, blk in enumerate(blocks):
        A[2 * j:2 * j + 2, 2 * j:2 * j + 2] = 0.995 * blk
    B = np.zeros((dim, n_act))
    for j in range(dim // 2):
        B[2 * j + 1, j % n_act] = 0.05
    bounds = []
    for i in range(dim):
        if i == 13:
            bounds.append((-10.0, 10.0))
        elif i == 14:
            bounds.append((-9.0, 9.0))
        else:
            bounds.append((-8.0, 8.0))
    init = [[-0.002, 0.002]] * 8 + [[-0.0023, 0.0023]] * 20
    return {
        "name": "helicopter",
        "kind": "linear",
        "state_dim": dim,
        "action_dim": n_act,
        "horizon": 2000,
        "dt": dt,
        "action_limit": 5.0,
        "init_box": init,
        "safety_spec": interval_spec(bounds),
        "has_published_bounds": True,
        "A": A.tolist(),
        "B": B.tolist(),
        "metadata": {"safety_box": [list(b) for b in bounds]},
    }


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    configs = [
        make_pendulum(),
        make_platoon(4, 1000, w_bounds=[0.35, 1.0, 1.0]),
        make_platoon(8, 2000, w_bounds=[1.0] * 7),
        make_helicopter(),
    ]
    for cfg in configs:
        path = OUT / f"{cfg['name']}.json"
        with open(path, "w") as fh:
            json.dump(cfg, fh, indent=1)
            fh.write("\n")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
