"""Pure-numpy fallback for the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def eval_program(code, consts, X, out, depth):
    stack = []
    with np.errstate(all="ignore"):
        for i, (op, arg) in enumerate(code):
            if op == 0:
                stack.append(np.full(X.shape[0], consts[arg]))
            elif op == 1:
                stack.append(X[:, arg])
            elif op <= 5:
                b = stack.pop()
                a = stack.pop()
                if op == 2:
                    stack.append(a + b)
                elif op == 3:
                    stack.append(a - b)
                elif op == 4:
                    stack.append(a * b)
                else:
                    bad = np.flatnonzero(b == 0.0)
                    if bad.size:
                        return i, int(bad[0])
                    stack.append(a / b)
            elif op == 6:
                a = stack.pop()
                if arg < 0:
                    bad = np.flatnonzero(a == 0.0)
                    if bad.size:
                        return i, int(bad[0])
                    stack.append(1.0 / a ** (-int(arg)))
                else:
                    stack.append(a ** int(arg))
            elif op == 7:
                stack.append(-stack.pop())
            elif op == 8:
                a = stack.pop()
                bad = np.flatnonzero(a < 0.0)
                if bad.size:
                    return i, int(bad[0])
                stack.append(np.sqrt(a))
            elif op == 9:
                a = stack.pop()
                bad = np.flatnonzero(a <= 0.0)
                if bad.size:
                    return i, int(bad[0])
                stack.append(np.log(a))
            elif op == 10:
                stack.append(np.sin(stack.pop()))
            elif op == 11:
                stack.append(np.cos(stack.pop()))
            else:
                stack.append(np.arctan(stack.pop()))
    res = stack[0]
    bad = np.flatnonzero(~np.isfinite(res))
    if bad.size:
        return len(code) - 1, int(bad[0])
    out[:] = res
    return -1, -1


def assemble_banded(a0, a1, a2, c11, c12, c21, c22, h1, h2):
    n1, n2 = a0.shape
    bw = n2 + 1
    n = n1 * n2
    ab = np.zeros((2 * bw + 1, n))
    ih1, ih2 = 1.0 / (h1 * h1), 1.0 / (h2 * h2)
    ab[bw, :] = (a0 - 2.0 * c11 * ih1 - 2.0 * c22 * ih2).ravel()
    cross = (c12 + c21) / (4.0 * h1 * h2)
    I, J = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
    K = I * n2 + J
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            if dj == 0:
                val = di * a1 / (2.0 * h1) + c11 * ih1
            elif di == 0:
                val = dj * a2 / (2.0 * h2) + c22 * ih2
            else:
                val = di * dj * cross
            ok = (I + di >= 0) & (I + di < n1) & (J + dj >= 0) & (J + dj < n2)
            k = K[ok]
            kk = k + di * n2 + dj
            ab[bw + k - kk, kk] = val[ok]
    return ab
