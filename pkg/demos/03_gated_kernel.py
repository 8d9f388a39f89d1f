# Shapes the gated rational-quadratic kernel can take.
import numpy as np

from sghp.model import GateKernelParams, gated_kernel, rq_kernel

d = np.linspace(0, 8, 17)

# gate switched off early (p small): plain monotone decay
decay = GateKernelParams(sigma=1.0, alpha=1.0, ell=1.0, p=0.1, s=0.1)
# gate centred at p=3 with a steep rate: influence starts late, a local effect
bump = GateKernelParams(sigma=1.0, alpha=1.0, ell=2.0, p=3.0, s=5.0)

print(" d    rq      decay   bump")
for di, r, a, b in zip(d, rq_kernel(d, 1.0, 1.0, 1.0), gated_kernel(d, decay), gated_kernel(d, bump)):
    print(f"{di:4.1f}  {r:.4f}  {a:.4f}  {b:.4f}")

fine = np.linspace(0, 8, 801)
print("bump peaks at d =", fine[np.argmax(gated_kernel(fine, bump))])
