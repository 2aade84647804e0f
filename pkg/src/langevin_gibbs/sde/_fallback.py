"""Pure NumPy stepping kernel, vectorized across the trajectories of a block.

``advance`` moves every trajectory of a block forward by ``noise.shape[1]``
steps, in place.

Arguments
---------
V : (N, N) symmetric coupling matrix
alpha, sigma : friction and noise amplitude
idx : 0-based distinguished coordinate
dt : step size
scheme : 0 for Euler-Maruyama, 1 for semi-implicit (momentum first)
Q, P : (B, N) positions and momenta, updated in place
noise : (B, L) standard normal draws, row ``b`` belongs to trajectory ``b``
step0 : global index of the step preceding this chunk
ckpt_steps : sorted global step numbers at which to record the state
out : (K, B, 2N) checkpoint buffer; ``out[k]`` is written when step
    ``ckpt_steps[k]`` falls in this chunk

Returns ``(0, -1, -1)`` on success, or ``(1, traj, step)`` for the first
trajectory whose state norm exceeds ``1e12`` or becomes non-finite.  After a
failure ``Q`` and ``P`` are left in an unspecified state.
"""

import numpy as np

GUARD2 = 1e24


def advance(V, alpha, sigma, idx, dt, scheme, Q, P, noise, step0, ckpt_steps, out):
    B, N = Q.shape
    L = noise.shape[1]
    amp = sigma * np.sqrt(dt)
    kicks = np.ascontiguousarray(noise.T) * amp
    ckpt = {int(s): k for k, s in reversed(list(enumerate(ckpt_steps)))}
    for s in range(L):
        step = step0 + s + 1
        f = Q @ V
        f[:, idx] += alpha * P[:, idx]
        if scheme == 0:
            Q += dt * P
            P -= dt * f
            P[:, idx] += kicks[s]
        else:
            P -= dt * f
            P[:, idx] += kicks[s]
            Q += dt * P
        norm2 = np.einsum("ij,ij->i", Q, Q) + np.einsum("ij,ij->i", P, P)
        bad = ~(norm2 <= GUARD2)
        if bad.any():
            return 1, int(np.argmax(bad)), step
        k = ckpt.get(step)
        if k is not None:
            while k < len(ckpt_steps) and ckpt_steps[k] == step:
                out[k, :, :N] = Q
                out[k, :, N:] = P
                k += 1
    return 0, -1, -1
