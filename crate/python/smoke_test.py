"""Smoke test for the kinchem Python module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or copy target/release/libkinchem_py.so to kinchem.so on PYTHONPATH.
"""

import json
import math
import sys
import tempfile

import kinchem


def main():
    grid = kinchem.Grid(2, 32, 8.0)
    assert grid.cells == 32 * 32

    # Constant density: S equals rho exactly.
    s = grid.solve_screened_poisson([0.5] * grid.cells)
    assert max(abs(x - 0.5) for x in s) < 1e-12

    # G(2, r) = K0(r)/(2 pi).
    assert abs(kinchem.green_function(2, 1e-3) - 1.1178548) < 1e-6

    f = kinchem.KineticState.from_preset(
        grid, json.dumps({"kind": "sphere", "n_v": 8}), json.dumps({"preset": "gaussian-bump", "M": 1.5, "floor": 0.1})
    )
    assert abs(f.mass() - 1.5) < 1e-12
    kernel = json.dumps({"kind": "symmetric", "g": {"base": 1.0, "slope": 0.3, "chem_weight": 0.2}})
    g, diag = f.run(kernel, 0.02, 0.4, norms=[(2.0, 2.0)])
    assert abs(g.mass() - 1.5) < 1e-11
    norms = diag["f_L2x_L2v"]
    assert all(b <= a + 1e-10 for a, b in zip(norms, norms[1:]))

    report = kinchem.run_check(json.dumps({"check": "strichartz"}))
    assert report["verdict"] == "PASS", report

    with tempfile.TemporaryDirectory() as tmp:
        cfg = {"mode": "verify", "checks": [{"check": "series_convergence", "j_max": 5000}]}
        code, manifest = kinchem.run_config(json.dumps(cfg), tmp)
        assert code == kinchem.EXIT_OK and manifest["status"] == "COMPLETED"
        code, summary = kinchem.emit_report(tmp)
        assert code == kinchem.EXIT_OK and not summary["hash_mismatches"]

    try:
        kinchem.run_config(json.dumps({"mode": "kinetic"}))
    except ValueError as e:
        assert "grid" in str(e)
    else:
        raise AssertionError("invalid config accepted")

    print("kinchem smoke test passed:", ", ".join(kinchem.check_names()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
