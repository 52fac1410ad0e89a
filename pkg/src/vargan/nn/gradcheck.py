"""Finite-difference verification of analytic gradients (64-bit only)."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    n_checked: int
    worst_param: str = ""
    per_param: dict = field(default_factory=dict)
    n_skipped: int = 0

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def _rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-12)


def _probe(eval_at, orig, h):
    """Central difference at steps h and h/2; returns (estimate, consistent, floor).

    Disagreement between the two estimates means the probe straddles a
    piecewise-linear kink (relu / maxpool switch), where finite differences
    are meaningless; such probes are skipped, not failed. The floor is the
    roundoff resolution of the estimate: differences below eps * |f| / h are
    indistinguishable from cancellation noise in the loss evaluation."""
    fp, fm = eval_at(orig + h), eval_at(orig - h)
    fd = (fp - fm) / (2 * h)
    fd2 = (eval_at(orig + h / 2) - eval_at(orig - h / 2)) / h
    floor = 64 * np.finfo(np.float64).eps * max(abs(fp), abs(fm), 1.0) / h
    ok = _rel_err(fd, fd2) < 1e-7 or abs(fd - fd2) < floor
    return fd, ok, floor


def _probe_err(analytic, eval_at, orig, h):
    """Relative error of the analytic value against the FD estimate, or None
    if the probe is unreliable (kink straddled)."""
    numeric, ok, floor = _probe(eval_at, orig, h)
    if not ok:
        return None
    if abs(analytic - numeric) < floor:
        return 0.0
    return _rel_err(analytic, numeric)


def gradient_check(net, loss_fn, x, tolerance=1e-6, n_samples=30, h=1e-5, rng=None):
    """Compare analytic parameter gradients against central differences.

    loss_fn(output) must return (scalar loss, grad w.r.t. output). A random
    subsample of n_samples entries per parameter tensor is probed.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    params = net.named_params()
    for p in params.values():
        if p.dtype != np.float64:
            raise ValueError("gradient_check requires 64-bit parameters")

    net.zero_grads()
    out = net.forward(x)
    _, gout = loss_fn(out)
    net.backward(gout)
    analytic = {k: v.copy() for k, v in net.named_grads().items()}

    worst = 0.0
    worst_param = ""
    per_param = {}
    checked = 0
    skipped = 0
    for name, p in params.items():
        flat = p.reshape(-1)
        idxs = rng.choice(flat.size, size=min(n_samples, flat.size), replace=False)
        pmax = 0.0
        for i in idxs:
            orig = flat[i]

            def eval_at(v, flat=flat, i=i):
                flat[i] = v
                loss, _ = loss_fn(net.forward(x))
                return loss

            err = _probe_err(analytic[name].reshape(-1)[i], eval_at, orig, h)
            flat[i] = orig
            if err is None:
                skipped += 1
                continue
            pmax = max(pmax, err)
            checked += 1
        per_param[name] = pmax
        if pmax > worst:
            worst, worst_param = pmax, name
    return GradCheckReport(worst, tolerance, checked, worst_param, per_param, skipped)


def input_gradient_check(net, loss_fn, x, tolerance=1e-6, n_samples=30, h=1e-5, rng=None):
    """Same as gradient_check but probes the gradient w.r.t. the net input."""
    if rng is None:
        rng = np.random.default_rng(0)
    net.zero_grads()
    out = net.forward(x)
    _, gout = loss_fn(out)
    gin = net.backward(gout)

    x = x.copy()
    flat = x.reshape(-1)
    idxs = rng.choice(flat.size, size=min(n_samples, flat.size), replace=False)
    worst = 0.0
    checked = 0
    skipped = 0
    for i in idxs:
        orig = flat[i]

        def eval_at(v, i=i):
            flat[i] = v
            loss, _ = loss_fn(net.forward(x))
            return loss

        err = _probe_err(gin.reshape(-1)[i], eval_at, orig, h)
        flat[i] = orig
        if err is None:
            skipped += 1
            continue
        worst = max(worst, err)
        checked += 1
    return GradCheckReport(worst, tolerance, checked, n_skipped=skipped)
