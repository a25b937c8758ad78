"""
Reverse-mode autodiff on numpy arrays
=====================================

Every model in the package is built from a small set of differentiable
primitives. This script runs a few of them by hand and checks a gradient
against central differences.
"""

import numpy as np

from promptweave.numerics import Tensor, conv1d, grad_check, log_softmax, matmul, mean, softmax

# A product of two leaves: d(xy)/dx = y and d(xy)/dy = x.
x = Tensor(np.array(2.0), requires_grad=True)
y = Tensor(np.array(5.0), requires_grad=True)
(x * y).backward()
print("grads of x*y at (2, 5):", x.grad, y.grad)

# Same-length 1d cross-correlation with zero padding.
sig = Tensor(np.array([[1.0], [2.0], [3.0]]))
kernel = Tensor(np.array([1.0, 0.0, -1.0]).reshape(3, 1, 1))
print("conv1d([1,2,3], [1,0,-1]):", conv1d(sig, kernel, Tensor(np.zeros(1))).data.ravel())

# softmax sums to one, so the gradient of its sum vanishes.
z = Tensor(np.array([0.3, -1.2, 2.0]), requires_grad=True)
softmax(z, axis=-1).sum().backward()
print("grad of sum(softmax):", np.round(z.grad, 12))

# Finite-difference check of a small network-like function.
rng = np.random.default_rng(0)
w = Tensor(rng.normal(size=(4, 3)))
f = lambda a: mean(log_softmax(matmul(a, w), axis=-1))
err = grad_check(f, Tensor(rng.normal(size=(2, 4))), h=1e-6)
print(f"max relative error vs central differences: {err:.2e}")
