# The tape: eager forward values, reverse-mode gradients, finite-difference checks and Adam.
import numpy as np

from sghp.diffcore import AdamState, DomainError, Tape, adam_step, evaluate, grad_check

tape = Tape()
x = tape.param("x", np.array([0.5, -1.0, 2.0]))
w = tape.param("w", 0.3)
loss = (tape.softplus(x * w) + tape.sin(x) * x).sum()
value, grads = evaluate(tape, loss)
print("loss", value)
print("d/dx", grads["x"], " d/dw", grads["w"])
print("grad check (max rel err)", grad_check(tape, loss, 1e-6))

# errors name the offending node
try:
    tape.log(x)
except DomainError as exc:
    print("DomainError:", exc)

# a few Adam steps on a quadratic bowl
params = {"a": np.array([3.0, -2.0])}
state = AdamState(lr=0.1)
for step in range(200):
    t = Tape()
    a = t.param("a", params["a"])
    _, g = evaluate(t, ((a - 1.0) * (a - 1.0)).sum())
    params, state = adam_step(params, g, state)
print("after 200 Adam steps", np.round(params["a"], 4))
