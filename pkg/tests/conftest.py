import numpy as np
import pytest


def brute_conv(x, k, mode="zero"):
    """Double-sum oracle for same-size centred convolution."""
    x = np.asarray(x, float)
    k = np.asarray(k, float)
    H, W = x.shape
    L, K = k.shape
    l, m = L // 2, K // 2
    out = np.zeros((H, W))
    for i in range(H):
        for j in range(W):
            acc = 0.0
            for a in range(L):
                for b in range(K):
                    r, c = i + l - a, j + m - b
                    if mode == "zero":
                        if not (0 <= r < H and 0 <= c < W):
                            continue
                    elif mode == "replicate":
                        r, c = min(max(r, 0), H - 1), min(max(c, 0), W - 1)
                    else:
                        r, c = r % H, c % W
                    acc += k[a, b] * x[r, c]
            out[i, j] = acc
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
