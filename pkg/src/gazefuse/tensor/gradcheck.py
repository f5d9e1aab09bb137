"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from gazefuse.tensor.core import Tensor


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-3,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-7,
) -> dict[str, float]:
    """Compare analytic and central-difference gradients block by block.

    ``loss_fn`` must rebuild the graph on every call and be deterministic.
    For each parameter block the returned value is
    ``max|analytic - numeric| / max(max|analytic|, max|numeric|, floor)``,
    i.e. the worst element error relative to the block's gradient scale.
    The floor keeps blocks whose true gradient is exactly zero (a key bias
    under softmax, say) from dividing rounding noise by rounding noise. When
    ``max_entries`` is set, only that many seeded coordinates per block are
    perturbed.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}

    report: dict[str, float] = {}
    for name, p in params.items():
        flat = p.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            chooser = rng if rng is not None else np.random.default_rng(0)
            idx = np.sort(chooser.choice(flat.size, size=max_entries, replace=False))
        else:
            idx = np.arange(flat.size)
        a = analytic[name].reshape(-1)[idx]
        n = np.empty(len(idx))
        for j, k in enumerate(idx):
            orig = flat[k]
            flat[k] = orig + step
            up = loss_fn().item()
            flat[k] = orig - step
            down = loss_fn().item()
            flat[k] = orig
            n[j] = (up - down) / (2 * step)
        scale = max(np.max(np.abs(a)), np.max(np.abs(n)), floor)
        report[name] = float(np.max(np.abs(a - n)) / scale)
    for p in params.values():
        p.grad = None
    return report
