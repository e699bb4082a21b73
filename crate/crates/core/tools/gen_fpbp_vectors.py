#!/usr/bin/env python3
"""Emit fused forward/backward interchange vectors.

A line-by-line transliteration of the reference array listing (1-based
indices kept as in the original), run on seeded random inputs. Output goes to
stdout in the stanza format read by `ornn::io::parse_fpbp_vectors`.

    python3 tools/gen_fpbp_vectors.py > tests/data/fpbp_vectors.txt
"""

import random

CASES = [(2, 1), (3, 1), (3, 2), (4, 2), (5, 4), (6, 3), (8, 1), (8, 4), (8, 7), (12, 6), (16, 5), (16, 15)]


def dot(a, b):
    s = 0.0
    for x, y in zip(a, b):
        s += x * y
    return s


def col(M, k):
    return [row[k - 1] for row in M]


def reference(U, h, BPg):
    n, m = len(U), len(U[0])
    G = [[0.0] * m for _ in range(n)]
    H = [[0.0] * (m + 1) for _ in range(n)]
    N = [0.0] * (m + 1)
    h_tilde = [0.0] * (m + 1)
    for i in range(n):
        H[i][m] = h[i]
    g = list(BPg)
    for k in range(0, m):
        N[m - k] = dot(col(U, m - k), col(U, m - k))
        h_tilde[m - k] = 2 / N[m - k] * dot(col(U, m - k), col(H, m - k + 1))
        for i in range(n):
            H[i][m - k - 1] = H[i][m - k] - h_tilde[m - k] * U[i][m - k - 1]
    C = col(H, 1)
    for k in range(1, m + 1):
        c_tilde_k = 2 * dot(col(U, k), g) / N[k]
        g = [gi - c_tilde_k * ui for gi, ui in zip(g, col(U, k))]
        for i in range(n):
            G[i][k - 1] = -h_tilde[k] * g[i] - c_tilde_k * H[i][k]
    return C, g, G


def line(v):
    return " ".join(repr(float(x)) for x in v)


def main():
    rng = random.Random(20170801)
    out = ["# n m / U (n rows) / h / gC / C / g / G (n rows)"]
    for idx, (n, m) in enumerate(CASES):
        U = [[rng.uniform(-1, 1) if i >= j else 0.0 for j in range(m)] for i in range(n)]
        h = [rng.uniform(-1, 1) for _ in range(n)]
        gc = [rng.uniform(-1, 1) for _ in range(n)]
        C, g, G = reference(U, h, gc)
        if idx:
            out.append("")
        out.append(f"{n} {m}")
        out.extend(line(r) for r in U)
        out.extend(line(v) for v in (h, gc, C, g))
        out.extend(line(r) for r in G)
    print("\n".join(out))


if __name__ == "__main__":
    main()
