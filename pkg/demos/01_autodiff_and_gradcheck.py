"""A tour of the tensor core: building graphs, backward, gradient checking.

Run: python3 demos/01_autodiff_and_gradcheck.py
"""

import numpy as np

from clickseg.tensor import (
    Tape, Tensor, backward, gelu, gradcheck, matmul, sigmoid, softmax_rows,
    transpose, tsum,
)

# Leaves that want gradients are ordinary tensors with requires_grad=True.
x = Tensor(np.array([1.0, 2.0, 3.0], dtype=np.float32), requires_grad=True)

# Ops only get recorded inside an open tape; backward consumes it.
with Tape():
    loss = tsum(x * x)
    backward(loss)
print("d/dx sum(x^2) at [1,2,3] ->", x.grad)  # [2, 4, 6]

# A small attention-flavored graph, checked against central differences
# in float64. gradcheck re-evaluates the closure for each probed coordinate.
rng = np.random.default_rng(0)
q = Tensor(rng.normal(size=(4, 8)), dtype=np.float64, requires_grad=True)
k = Tensor(rng.normal(size=(4, 8)), dtype=np.float64, requires_grad=True)
v = Tensor(rng.normal(size=(4, 8)), dtype=np.float64, requires_grad=True)


def attention_loss():
    attn = softmax_rows(matmul(q, transpose(k)), scale=0.35)
    return tsum(sigmoid(matmul(attn, gelu(v))))


worst = gradcheck(attention_loss, [q, k, v], n_samples=8, rng=rng)
print(f"attention graph: worst relative error vs finite differences = {worst:.2e}")

# Double backward on one tape is a usage bug and raises loudly.
with Tape():
    loss = tsum(x * x)
    backward(loss)
    try:
        backward(loss)
    except Exception as exc:
        print("second backward ->", type(exc).__name__, "-", exc)
