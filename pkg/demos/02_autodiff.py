"""The reverse-mode tape: gradients, finite-difference agreement, Adam.

Run from the repository root:  python3 demos/02_autodiff.py
"""

import numpy as np

from extsum.autodiff import (AdamState, Tape, Tensor, adam_step, backward,
                             clip_gradients, collect_grads, zero_grads)

# -- a scalar expression and its exact gradient ----------------------------------

x = Tensor(np.array([[0.5, -1.0, 2.0]]), requires_grad=True)
tape = Tape()
y = tape.sum(tape.mul(tape.sigmoid(x), tape.tanh(x)))
backward(tape, y)
print(f"value {float(y.data):+.6f}")
print(f"grad  {np.array2string(x.grad[0], precision=6)}")

# central differences on the same expression
fd = np.zeros(3)
for i in range(3):
    for sign in (+1.0, -1.0):
        x.data[0, i] += sign * 1e-6
        t = Tape()
        v = t.sum(t.mul(t.sigmoid(x), t.tanh(x)))
        fd[i] += sign * float(v.data) / 2e-6
        x.data[0, i] -= sign * 1e-6
print(f"fd    {np.array2string(fd, precision=6)}")
print(f"max abs diff {np.max(np.abs(x.grad[0] - fd)):.2e}")

# -- fit a line with Adam ---------------------------------------------------------

rng = np.random.default_rng(0)
inputs = rng.normal(size=(64, 1))
targets = 3.0 * inputs - 1.0 + 0.01 * rng.normal(size=(64, 1))

w = Tensor(np.zeros((1, 1)), requires_grad=True)
b = Tensor(np.zeros((1, 1)), requires_grad=True)
params = {"w": w, "b": b}
adam = AdamState(learning_rate=0.05)

for step in range(400):
    zero_grads(params)
    tape = Tape()
    pred = tape.add(tape.matmul(Tensor(inputs), w), b)
    err = tape.sub(pred, Tensor(targets))
    loss = tape.scale(tape.sum(tape.mul(err, err)), 1.0 / 64)
    backward(tape, loss)
    adam_step(params, clip_gradients(collect_grads(params)), adam)
    if step % 100 == 0:
        print(f"step {step:3d} loss {float(loss.data):.5f}")

print(f"fitted w {w.item():+.4f} (true +3), b {b.item():+.4f} (true -1)")
