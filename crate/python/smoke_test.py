"""Smoke test for the pyhlr extension module.

Build and install with `pip install --no-build-isolation ./crates/python`
(or `maturin develop -m crates/python/Cargo.toml`), then run this script.
"""

import json
import math
import os
import tempfile

import pyhlr


def check(cond, what):
    if not cond:
        raise SystemExit(f"FAIL: {what}")
    print(f"ok: {what}")


check(pyhlr.huber(1.0, 0.5) == 0.125, "huber quadratic branch")
check(pyhlr.huber(1.0, 3.0) == 2.5, "huber linear branch")
check(pyhlr.huber_deriv(1.0, -4.0) == -1.0, "huber derivative is clamped")
check(pyhlr.huber(math.inf, 2.0) == 2.0, "infinite threshold is squared loss")
check(pyhlr.dice({1, 2}, {2, 3}) == 0.5, "dice coefficient")
check(pyhlr.mae([1.0, 2.0], [1.5, 1.5]) == 0.5, "mean absolute error")

ds = pyhlr.gen_linear_uniform(60, 3, [1 / 3] * 3, 0.0, seed=4)
check(len(ds) == 60 and ds.view_dims == [3], "generated dataset shape")
noisy, corrupted = pyhlr.corrupt_sign_flip(ds, 0.1, seed=5)
check(len(corrupted) == 6, "six labels corrupted")

model = pyhlr.fit(noisy, [pyhlr.Kernel.linear()], lambda_=1e-2, gamma=1e-3, delta_xi=0.1, refinements=50)
check(model.xi_history == sorted(model.xi_history, reverse=True), "threshold history decreases")
removed = {i for i, _ in model.removed}
check(pyhlr.dice(corrupted, removed) > 0.5, f"corrupted labels detected, dice={pyhlr.dice(corrupted, removed):.3f}")

query = [[0.2, 0.5, 0.9]]
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "model.json")
    model.save(path)
    back = pyhlr.Model.load(path)
    check(back.predict(query) == model.predict(query), "model save/load is exact")

quad = pyhlr.fit(noisy, [pyhlr.Kernel.linear()], refinements=0)
check(quad.removed == [] and len(quad.xi_history) == 1, "zero refinements keeps every label")

two_view = pyhlr.Dataset(
    [[[i / 10], [math.cos(i / 10), math.sin(i / 10)]] for i in range(12)],
    [i / 5 if i < 8 else None for i in range(12)],
)
m2 = pyhlr.fit(two_view, [pyhlr.Kernel.gaussian(0.5), pyhlr.Kernel.linear()], refinements=2)
check(len(m2.coefficients) == 12 and len(m2.coefficients[0]) == 2, "two-view coefficients shape")

ridge = pyhlr.kernel_ridge(ds, pyhlr.Kernel.polynomial(2), 1e-3)
check(math.isfinite(ridge.predict([0.1, 0.2, 0.3])), "kernel ridge baseline predicts")

try:
    model.predict([[1.0, 2.0]])
    check(False, "dimension mismatch raises")
except pyhlr.DataError as e:
    check(isinstance(e, pyhlr.HlrError), "dimension mismatch raises DataError")

try:
    pyhlr.run_experiment('task = "synth-linear"\nbogus = 1\n')
    check(False, "unknown config key raises")
except pyhlr.ConfigError:
    check(True, "unknown config key raises ConfigError")

report = json.loads(pyhlr.run_experiment('task = "synth-linear"\nrepetitions = 2\n[data]\nn = 50\n'))
check(report["format"] == "hlr-report" and len(report["runs"]) == 2, "experiment report")
print("smoke test passed")
