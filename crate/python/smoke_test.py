"""Smoke test for the specsurg_py extension.

Build first with `cargo build --release -p specsurg-py`. If the module is not
installed, the freshly built shared library is loaded from target/release.
"""

import cmath
import importlib.util
import json
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load():
    try:
        import specsurg_py

        return specsurg_py
    except ImportError:
        pass
    for name in ("libspecsurg_py.so", "libspecsurg_py.dylib", "specsurg_py.dll"):
        built = ROOT / "target" / "release" / name
        if built.exists():
            break
    else:
        sys.exit("specsurg_py not built; run `cargo build --release -p specsurg-py`")
    tmp = pathlib.Path(tempfile.mkdtemp()) / "specsurg_py.so"
    shutil.copy(built, tmp)
    spec = importlib.util.spec_from_file_location("specsurg_py", tmp)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    ss = load()
    assert {"free", "example89"} <= set(ss.catalog_names())

    p = ss.catalog_problem("example89")
    for k in (0.5, 2.0, 7.0):
        j = ss.jost_matrix(p, complex(k, 0))[0][0]
        assert abs(j - (-k / (k + 1j))) < 1e-6 * abs(j)
        s = ss.scattering_matrix(p, k)[0][0]
        assert abs(s + (k + 1j) / (k - 1j)) < 1e-6

    assert json.loads(ss.bound_states(p))["states"] == []
    result = json.loads(ss.apply_surgery(p, json.dumps({"kind": "add", "kappa": 1.0, "C": [[4.0, 0.0]]})))
    assert result["jost_factor"]["sign"] == -1
    assert result["boundary"]["B"][0] == [-1.0, 0.0]

    states = json.loads(ss.bound_states(json.dumps(result)))["states"]
    assert len(states) == 1 and abs(states[0]["kappa"] - 1.0) < 1e-6

    try:
        ss.apply_surgery(json.dumps(result), json.dumps({"kind": "add", "kappa": 1.0, "C": [[4.0, 0.0]]}))
    except ValueError as e:
        assert "distinct" in str(e)
    else:
        raise AssertionError("colliding add was accepted")

    free = ss.catalog_problem("free", 2, "neumann")
    s = ss.scattering_matrix(free, 1.3)
    assert all(abs(s[i][j] - (1 if i == j else 0)) < 1e-10 for i in range(2) for j in range(2))
    assert cmath.isclose(ss.jost_matrix(free, 2j)[0][0], 2, abs_tol=1e-10)

    report = json.loads(ss.run_suite("battery"))
    assert report["pass"], [c for c in report["checks"] if not c["pass"]]
    print("smoke test passed")


if __name__ == "__main__":
    main()
