"""Smoke test for the hcr_py extension.

Build and install first:
    pip install --no-build-isolation ./crates/py
then run:
    python python/smoke.py
"""

import math
import os
import sys
import tempfile

import hcr_py


def check(cond, message):
    if not cond:
        print(f"FAIL: {message}")
        sys.exit(1)
    print(f"ok   {message}")


def main():
    world = hcr_py.World(1, num_users=40, num_items=60, impressions_per_user=30)
    check(world.num_users == 40 and world.num_items == 60, "world dimensions")
    p = world.true_interventional(0, 0)
    check(0.0 <= p <= 1.0, f"interventional probability in [0, 1] ({p:.4f})")

    flat = hcr_py.World(1, num_users=10, num_items=20, impressions_per_user=5, confounder_like_strength=0.0)
    gap = max(abs(flat.true_interventional(u, i) - flat.observational_like_rate(u, i)) for u in range(10) for i in range(20))
    check(gap <= 1e-12, "no confounding means p_do == p_obs")

    log = world.simulate(1)
    check(len(log) == 40 * 30, "one record per impression")
    check(all(like <= click for _, _, _, click, like in log.records()), "like implies click")
    again = hcr_py.InteractionLog.from_csv(log.to_csv())
    check(again.to_csv() == log.to_csv(), "csv round trip")

    split = log.split(0.7)
    check(len(split.train) == int(0.7 * len(log)), "train prefix size")

    model, history = hcr_py.train(split, max_epochs=5, batch_size=128, seed=3)
    check(model.mode == "HCR" and 1 <= len(history) <= 5, "HCR training history")
    f, h1, h2 = model.heads(0, 1)
    check(math.isclose(model.score(0, 1, "HCR"), f * h1, rel_tol=1e-12), "HCR score is f * h1")
    ranked = model.rank(0, 5, "HCR")
    check(len(ranked) == 5 and all(a[1] >= b[1] for a, b in zip(ranked, ranked[1:])), "ranking is sorted")
    rows = model.evaluate(split, "HCR", [5, 10])
    check(len(rows) == 2 * 2 * 2, "evaluation rows")
    fidelity = model.causal_fidelity(world, split, "HCR")
    check(-1.0 <= fidelity <= 1.0, f"causal fidelity {fidelity:.4f}")

    ct, _ = hcr_py.train(split, mode="CT", max_epochs=3, batch_size=128)
    try:
        ct.score(0, 0, "HCR_T")
        check(False, "CT model rejects HCR_T")
    except ValueError:
        check(True, "CT model rejects HCR_T")

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "m.ckpt")
        model.save(path)
        check(hcr_py.Model.load(path).to_bytes() == model.to_bytes(), "checkpoint round trip")

    check(abs(hcr_py.ndcg_at_k([1, 0, 2], {0}, 3) - 1 / math.log2(3)) < 1e-12, "ndcg example")
    check(hcr_py.recall_at_k([1, 0, 2], set(), 3) is None, "empty relevant set gives None")

    report = hcr_py.oracle_check(models=20)
    check(report["passed"] and report["worst_error"] <= 1e-10, "identity sweep passes")
    check(not hcr_py.oracle_check(models=20, inject_fault=True)["passed"], "injected fault is caught")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
