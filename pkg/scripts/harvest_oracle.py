"""Scalar-integral oracle for the harvesting objective under constant controls.

With sigma = 0 and a constant growth rate ``r`` the state is deterministic,
``X(t) = X0 exp(a t)`` with ``a = r - K u``, and

    J(u) = int_0^T exp(-delta (T-t)) u X(t) dt = u X0 exp(-delta T) expm1(b T) / b,   b = a + delta.

The left-point grid sum ``sum_i exp(-delta (T-t_i)) u X(t_i) dt`` is the
discrete counterpart, the value a scheme that is exact for the state should
reproduce to rounding. This script reads the experiment YAML directly (no
package imports) and writes one row per scanned constant control.

usage: python scripts/harvest_oracle.py CONFIG.yaml OUT.csv
"""

import csv
import math
import sys

import yaml

DEFAULTS = {"T": 1.0, "steps": 64, "r0": 0.5, "K": 2.0, "X0": 1.0, "delta": 0.1, "u_max": 1.0, "n_scan": 21}


def read(path):
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh) or {}
    g, h = doc.get("grid", {}), doc.get("harvest", {})
    r = h.get("r", {})
    if r.get("kind", "constant") != "constant" or float(h.get("sigma", 0.2)) != 0.0:
        raise SystemExit("oracle needs harvest.r.kind = constant and harvest.sigma = 0")
    p = dict(DEFAULTS)
    p.update({k: g[k] for k in ("T", "steps") if k in g})
    p.update({k: h[k] for k in ("K", "X0", "delta", "u_max", "n_scan") if k in h})
    p["r0"] = r.get("r0", DEFAULTS["r0"])
    return p


def integral(u, p):
    b = p["r0"] - p["K"] * u + p["delta"]
    T = p["T"]
    growth = T if b == 0 else math.expm1(b * T) / b
    return u * p["X0"] * math.exp(-p["delta"] * T) * growth


def left_sum(u, p):
    T, M = p["T"], int(p["steps"])
    a = p["r0"] - p["K"] * u
    dt = T / M
    return math.fsum(math.exp(-p["delta"] * (T - i * dt)) * u * p["X0"] * math.exp(a * i * dt) * dt for i in range(M))


def main(argv):
    if len(argv) != 3:
        raise SystemExit(__doc__.strip().splitlines()[-1])
    p = read(argv[1])
    n = int(p["n_scan"])
    with open(argv[2], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u0", "J_integral", "J_left_sum"])
        for k in range(n):
            u = p["u_max"] * k / (n - 1)
            w.writerow([repr(u), repr(integral(u, p)), repr(left_sum(u, p))])


if __name__ == "__main__":
    main(sys.argv)
