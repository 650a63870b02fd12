"""NumPy implementations of the compiled kernels, used when the extension is absent."""

import numpy as np


def softmax_rows(x, out):
    np.subtract(x, x.max(axis=1, keepdims=True), out=out)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)


def softmax_rows_backward(y, dy, dx):
    dot = np.einsum("ij,ij->i", dy, y)[:, None]
    np.subtract(dy, dot, out=dx)
    dx *= y


def scatter_add_rows(out, index, src):
    if index.size and (index.min() < 0 or index.max() >= out.shape[0]):
        bad = index[(index < 0) | (index >= out.shape[0])][0]
        raise IndexError(f"row index {bad} out of range for {out.shape[0]} rows")
    np.add.at(out, index, src)
