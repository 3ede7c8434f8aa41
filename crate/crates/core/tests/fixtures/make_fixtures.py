"""Writes the .npy fixtures and prints reference outputs computed with numpy.

The reference routines here are deliberately naive and share no code with
the Rust crate. Re-run with `python3 make_fixtures.py` from this directory.
"""
import json

import numpy as np

FLOOR = 1e-12


def unit_rows(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def softmax_rows(s):
    e = np.exp(s - s.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def pmi(p, m):
    return np.log(np.maximum(p, FLOOR) / np.maximum(m, FLOOR))


def naive_greedy(v, t, tau, lam, budget):
    v, t = unit_rows(v), unit_rows(t)
    p_cross = softmax_rows(v @ t.T / tau)
    cross = pmi(p_cross, p_cross.mean(axis=0)).max(axis=1)
    n = len(v)
    p_self = softmax_rows(v @ v.T / tau)
    self_pmi = pmi(p_self, 1.0 / n)
    kept, scores = [], []
    for _ in range(budget):
        best, best_score = None, -np.inf
        for i in range(n):
            if i in kept:
                continue
            red = max(self_pmi[i][s] for s in kept) if kept else 0.0
            score = lam * cross[i] - (1 - lam) * red
            if score > best_score:
                best, best_score = i, score
        kept.append(best)
        scores.append(best_score)
    return kept, scores


def main():
    np.save("f32_3x4.npy", (np.arange(12, dtype=np.float32).reshape(3, 4) * np.float32(0.1) - np.float32(0.35)))
    np.save("f64_fortran.npy", np.asfortranarray(np.arange(6.0).reshape(2, 3)))
    np.save("f64_3d.npy", np.zeros((2, 2, 2)))
    np.save("i32_2x2.npy", np.arange(4, dtype=np.int32).reshape(2, 2))

    rng = np.random.default_rng(42)
    v = rng.standard_normal((6, 4))
    t = rng.standard_normal((2, 4))
    np.save("seed42_visual.npy", v)
    np.save("seed42_text.npy", t)
    kept, scores = naive_greedy(v, t, 0.1, 0.5, 3)
    out = {"seed42_greedy": {"kept": kept, "step_scores": [repr(float(s)) for s in scores]}}

    rng = np.random.default_rng(8)
    v8 = rng.standard_normal((8, 4))
    t8 = rng.standard_normal((3, 4))
    np.save("sim8_visual.npy", v8)
    np.save("sim8_text.npy", t8)
    cos = unit_rows(v8) @ unit_rows(t8).T
    best = cos.max(axis=1)
    out["similarity_top3"] = sorted(range(8), key=lambda i: (-best[i], i))[:3]

    rng = np.random.default_rng(6)
    a = rng.random((6, 6))
    a /= a.sum(axis=1, keepdims=True)
    np.save("attn6.npy", a)
    col = [sum(a[j][i] for j in range(6) if j != i) for i in range(6)]
    out["attention_top3"] = sorted(range(6), key=lambda i: (-col[i], i))[:3]

    rng = np.random.default_rng(5)
    r5 = rng.standard_normal((5, 3))
    np.save("recycle5.npy", r5)
    u = unit_rows(r5)
    pair = [sum(u[i] @ u[j] for j in range(5) if j != i) for i in range(5)]
    out["recycle_top2"] = sorted(range(5), key=lambda i: (-pair[i], i))[:2]

    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
