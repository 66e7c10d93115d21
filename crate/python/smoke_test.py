"""Smoke test for the onewave extension module.

Build first: pip install --no-build-isolation -e crates/python
"""

import cmath
import math
import pathlib
import sys
import tempfile

import onewave

ROOT = pathlib.Path(__file__).resolve().parent.parent


def close(a, b, tol=1e-12):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    m = onewave.Medium.homogeneous(1.0, 1.0, -1.0, 4.0, -4.0, 4.0)
    assert m.eval(0.5, 0.0) == (1.0, 1.0)

    tau, s = 10.0, math.sin(math.radians(30.0))
    xi = -s * tau
    b = onewave.eval_b(m, 0.5, 0.0, xi, tau)
    assert close(b, -tau * math.sqrt(1.0 - s * s)), b

    cone = onewave.Cone(45.0, 70.0, 2.0)
    big_b = onewave.eval_big_b(m, 0.5, 0.0, xi, tau, "+", "unitary", cone)
    assert close(big_b.real, b) and abs(big_b.imag) < 1e-12, big_b
    assert onewave.eval_damping(m, 0.5, 0.0, xi, tau, 10.0, cone) == 0.0
    try:
        onewave.Cone(70.0, 45.0, 2.0)
    except ValueError:
        pass
    else:
        raise AssertionError("theta1 >= theta2 accepted")

    # plane wave through a homogeneous slab picks up exp(-i b dz) per unit depth
    n, dx, depth = 64, 0.05, 0.3
    k = 2 * math.pi * 4 / (n * dx)
    u0 = [cmath.exp(1j * k * j * dx) for j in range(n)]
    u1 = onewave.march(m, u0, dx, 0.0, tau, 0.0, depth, 0.01, cone)
    ratio = u1[0] / u0[0]
    assert close(abs(ratio), 1.0, 1e-10), ratio
    assert all(abs(a / c - ratio) < 1e-9 for a, c in zip(u1, u0))

    lin = onewave.Medium.linear_velocity(1.0, 0.5, -0.5, 3.0, -5.0, 5.0)
    ray = onewave.trace_ray(lin, 0.0, 0.0, -0.8 * tau, tau, 20.0, 0.02, True)
    assert ray["termination"] == "turning", ray["termination"]
    assert ray["drift"] < 1e-8
    # turning where v(z) = 1/0.8
    assert abs(ray["z"][-1] - 0.5) < 1e-6, ray["z"][-1]

    with tempfile.TemporaryDirectory() as out:
        run = onewave.run_scenario(str(ROOT / "scenarios" / "symbol_verify.toml"), out)
        assert run["passed"], run["checks"]
        assert "manifest.toml" in {p.name for p in pathlib.Path(out).iterdir()}

    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
