"""Smoke test for the nsk Python extension.

Build and install it first:  maturin develop --release -m crates/py/Cargo.toml
"""

import math
import os
import sys
import tempfile

import nsk


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    grid = nsk.Grid.cube(2, 16, 2 * math.pi)
    assert grid.dim == 2 and grid.n == [16, 16] and grid.mode_count == 256

    f = nsk.Field.from_function(grid, lambda x: math.sin(2 * x[0]) * math.cos(x[1]))
    back = nsk.Field.from_samples(grid, f.samples())
    assert max(abs(u - v) for u, v in zip(f.samples(), back.samples())) < 1e-13
    assert abs(f.integral()) < 1e-12
    dx = f.partial(0)
    for x, v in zip(grid.positions(), dx.samples()):
        assert abs(v - 2 * math.cos(2 * x[0]) * math.cos(x[1])) < 1e-11
    n1 = f.besov_norm(0.0, 2.0)
    assert close((3.0 * f).besov_norm(0.0, 2.0), 3.0 * n1, 1e-13)

    params = nsk.LinearParams(mu=1.0, kappa=1.0)
    assert params.regime == "critical"
    g0 = params.green_matrix(0.0, [0.3, -0.4])
    for i, row in enumerate(g0):
        for j, c in enumerate(row):
            assert abs(c - (1.0 if i == j else 0.0)) < 1e-14
    report = params.verify(2, samples=20, seed=1)
    assert report["ode_residual_max"] < 1e-6, report
    c0, _ = params.pointwise_bound(2)
    assert c0 > 0

    box = nsk.Grid.cube(2, 16, 20.0)
    data = nsk.gaussian_data(box, 1e-2, 1.5)
    lin = nsk.simulate(data, params, 0.05, 2.0, linear_only=True)
    exact = params.propagate(data, lin.snapshots[-1].t)
    assert lin.snapshots[-1].relative_difference(exact) < 1e-12

    run = nsk.simulate(data, params, 0.05, 2.0, snapshots=5)
    assert run.abort is None
    assert run.mass_drift < 1e-10
    last = run.snapshots[-1]

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "last.nskfld")
        last.save(path)
        with open(path, "rb") as fh:
            assert fh.read(8) == b"NSKFLD01"
        loaded = nsk.State.load(path)
        assert loaded.t == last.t
        assert loaded.relative_difference(last) == 0.0

    try:
        nsk.LinearParams(mu=-1.0, kappa=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative viscosity accepted")

    acc = nsk.acceptance_suite("fast", 0)
    lines = [f"{c['id']:>2} {c['status']} {c['name']}" for c in acc["criteria"]]
    print("\n".join(lines))
    assert acc["pass"], acc
    print("python smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
