#!/usr/bin/env python3
"""Independent evaluation of the aggregate metrics for the golden item tables.

Every value is computed in exact rational arithmetic from the decimal strings in
the table and only converted to a float at the end.

Usage: python3 crates/cli/tests/fixtures/metrics/evaluate.py
"""
import json
import pathlib
from fractions import Fraction as F

HERE = pathlib.Path(__file__).resolve().parent


def ratio(l, p):
    d = max(p, l)
    return F(1) if d == 0 else l / d


def evaluate(rows):
    n = len(rows)
    tot = {k: F(0) for k in ["c", "c_star", "e_path", "d_t_mean", "c_prime", "e_prime", "ace", "npl", "wce"]}
    for r in rows:
        sigma, sp = F(r["sigma"]), F(r["sigma_prime"])
        delta, l, p, dt, ce = (F(str(r[k])) for k in ["delta", "l_m", "p_m", "d_t_m", "ce"])
        q = ratio(l, p)
        tot["c"] += sigma * delta / 5
        tot["c_star"] += sigma / 5
        tot["e_path"] += sigma * delta / 5 * q
        tot["d_t_mean"] += dt
        tot["c_prime"] += (sp - 1) / 4
        tot["e_prime"] += (sp - 1) / 4 * q
        tot["ace"] += ce
        tot["npl"] += q
        tot["wce"] += ce * q
    pct = {"c", "c_star", "e_path", "c_prime", "e_prime"}
    return {k: float(v / n * (100 if k in pct else 1)) for k, v in tot.items()}


for name in ["golden_10", "all_pairs_15"]:
    rows = json.loads((HERE / f"{name}.items.json").read_text())
    (HERE / f"{name}.expected.json").write_text(json.dumps(evaluate(rows), indent=2, sort_keys=True) + "\n")
    print(name, evaluate(rows))
