from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..exceptions import NumericError
from .tensor import Tape, Tensor


def grad_check(f: Callable[[], Tensor], params: Tensor | Sequence[Tensor], h: float = 1e-5) -> float:
    """Largest relative disagreement between analytic and central-difference gradients.

    ``f`` is re-evaluated with each coordinate of each tensor in ``params``
    nudged by ``+-h``; the error per coordinate is
    ``|a - n| / max(1, |a|, |n|)``.
    """
    params = [params] if isinstance(params, Tensor) else list(params)
    for p in params:
        p.requires_grad = True
        p.grad = None
    with Tape() as tape:
        out = f()
    tape.backward(out)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a = a.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = f().item()
            flat[k] = orig - h
            down = f().item()
            flat[k] = orig
            num = (up - down) / (2.0 * h)
            if not (np.isfinite(num) and np.isfinite(a[k])):
                raise NumericError("grad_check encountered non-finite values")
            worst = max(worst, abs(a[k] - num) / max(1.0, abs(a[k]), abs(num)))
    return worst
