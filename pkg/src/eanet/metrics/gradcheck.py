"""Finite-difference validation of reverse-mode gradients.

Probes compare the analytic gradient at chosen coordinates against central
differences of the scalar function. Coordinates whose true derivative sits
below the function's own floating-point resolution cannot be measured by
differencing at all, so those never qualify as probes; among the rest the
default picks the largest-magnitude entries and an optional rng picks at
random.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradProbe:
    name: str
    coord: tuple
    analytic: float
    numeric: float
    rel_err: float


@dataclass
class GradReport:
    probes: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def max_rel_err(self):
        return max((p.rel_err for p in self.probes), default=0.0)

    def passed(self, threshold=1e-5):
        return bool(self.probes) and self.max_rel_err < threshold


def relative_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(fn, tensors, probes_per_tensor=2, step=1e-5, measurable=None, rng=None):
    """Check d(fn())/d(tensor) for each named tensor.

    fn: nullary callable returning a scalar graph tensor built from the
    entries of ``tensors`` (a name -> Tensor dict). Probes default to the
    largest-magnitude gradient coordinates; pass a numpy Generator as
    ``rng`` to sample coordinates instead. Either way only coordinates at
    or above ``measurable`` qualify, and tensors with no such coordinate
    are listed as skipped rather than silently passed. The default floor
    scales with the function value: below it the central difference is
    dominated by rounding inside fn() and a mismatch proves nothing.
    """
    for t in tensors.values():
        t.grad = None
    out = fn()
    out.backward()
    if measurable is None:
        # keep rounding noise in the central difference under 5e-6 relative
        noise = abs(out.item()) * np.finfo(np.float64).eps / (2.0 * step)
        measurable = max(1e-9, noise / 5e-6)

    report = GradReport()
    for name, t in sorted(tensors.items()):
        grad = t.grad
        if grad is None:
            report.skipped.append(name)
            continue
        flat_mag = np.abs(grad).reshape(-1)
        eligible = np.flatnonzero(flat_mag >= measurable)
        if eligible.size == 0:
            report.skipped.append(name)
            continue
        if rng is None:
            chosen = eligible[np.argsort(flat_mag[eligible])[::-1]][:probes_per_tensor]
        else:
            chosen = rng.choice(eligible, size=min(probes_per_tensor, eligible.size), replace=False)
        for flat in chosen:
            coord = np.unravel_index(int(flat), t.shape)
            orig = t.data[coord]
            t.data[coord] = orig + step
            hi = fn().item()
            t.data[coord] = orig - step
            lo = fn().item()
            t.data[coord] = orig
            numeric = (hi - lo) / (2.0 * step)
            report.probes.append(
                GradProbe(
                    name=name,
                    coord=tuple(int(c) for c in coord),
                    analytic=float(grad[coord]),
                    numeric=float(numeric),
                    rel_err=relative_error(numeric, grad[coord]),
                )
            )
    return report


# -- standard fixture battery -------------------------------------------------


def primitive_suite(seed=0):
    """(name, fn, tensors) fixtures covering every differentiable op.

    Each result is folded to a scalar through a fixed random projection so
    coordinates whose gradients would cancel structurally under a plain
    sum (softmax rows, means) stay measurable. Inputs sit away from the
    kinks of abs, l1, and bilinear cell edges.
    """
    from ..autodiff import (
        Tensor,
        attention,
        attention_weights,
        bilinear_sample,
        concat,
        conv1x1,
        conv2d,
        global_average_pool,
        l1_loss,
        linear,
        narrow,
        residual_mlp,
        sample_at_joints,
        soft_argmax_2_5d,
        take_rows,
    )

    rng = np.random.default_rng(seed)

    def t(*shape, lo=None, hi=None, signed_floor=None):
        if lo is not None:
            data = rng.uniform(lo, hi, size=shape)
        elif signed_floor is not None:
            data = rng.uniform(signed_floor, signed_floor + 1.0, size=shape)
            data *= rng.choice([-1.0, 1.0], size=shape)
        else:
            data = rng.normal(size=shape)
        return Tensor(data, requires_grad=True)

    def proj(shape):
        return Tensor(rng.normal(size=shape))

    suite = []

    def entry(name, build):
        fn, tensors = build()
        suite.append((name, fn, tensors))

    def binary(op):
        def build():
            x, y, p = t(3, 4), t(3, 4), proj((3, 4))
            return lambda: (op(x, y) * p).sum(), {"x": x, "y": y}
        return build

    def unary(op, **tkw):
        def build():
            x, p = t(3, 4, **tkw), proj((3, 4))
            return lambda: (op(x) * p).sum(), {"x": x}
        return build

    entry("add", binary(lambda x, y: x + y))
    entry("sub", binary(lambda x, y: x - y))
    entry("mul", binary(lambda x, y: x * y))

    def build_div():
        x, y, p = t(3, 4), t(3, 4, signed_floor=1.0), proj((3, 4))
        return lambda: ((x / y) * p).sum(), {"x": x, "y": y}
    entry("div", build_div)

    entry("neg", unary(lambda x: -x))
    entry("abs", unary(lambda x: x.abs(), signed_floor=0.5))
    entry("sin", unary(lambda x: x.sin()))
    entry("cos", unary(lambda x: x.cos()))
    entry("sqrt", unary(lambda x: x.sqrt(), lo=0.5, hi=2.0))
    entry("gelu", unary(lambda x: x.gelu()))
    entry("softmax", unary(lambda x: x.softmax(axis=-1)))

    def build_reshape():
        x, p = t(2, 6), proj((4, 3))
        return lambda: (x.reshape(4, 3) * p).sum(), {"x": x}
    entry("reshape", build_reshape)

    def build_transpose():
        x, p = t(3, 4), proj((4, 3))
        return lambda: (x.transpose() * p).sum(), {"x": x}
    entry("transpose", build_transpose)

    def build_concat():
        x, y, p = t(2, 3), t(4, 3), proj((6, 3))
        return lambda: (concat([x, y], axis=0) * p).sum(), {"x": x, "y": y}
    entry("concat", build_concat)

    def build_narrow():
        x, p = t(4, 6), proj((4, 3))
        return lambda: (narrow(x, 1, 2, 3) * p).sum(), {"x": x}
    entry("narrow", build_narrow)

    def build_take_rows():
        x, p = t(5, 3), proj((4, 3))
        rows = np.array([3, 0, 3, 2])  # the repeat exercises accumulation
        return lambda: (take_rows(x, rows) * p).sum(), {"x": x}
    entry("take_rows", build_take_rows)

    def build_sum():
        x = t(3, 4)
        return lambda: x.sum(), {"x": x}
    entry("sum", build_sum)

    def build_sum_axis():
        x, p = t(3, 4), proj((4,))
        return lambda: (x.sum(axis=0) * p).sum(), {"x": x}
    entry("sum_axis", build_sum_axis)

    def build_mean():
        x, p = t(3, 4), proj((3,))
        return lambda: (x.mean(axis=1) * p).sum(), {"x": x}
    entry("mean", build_mean)

    def build_matmul():
        x, y, p = t(3, 4), t(4, 2), proj((3, 2))
        return lambda: ((x @ y) * p).sum(), {"x": x, "y": y}
    entry("matmul", build_matmul)

    def build_conv2d():
        x, w, b, p = t(6, 6, 2), t(3, 3, 2, 3), t(3), proj((3, 3, 3))
        return lambda: (conv2d(x, w, b, stride=2, padding=1) * p).sum(), {"x": x, "w": w, "b": b}
    entry("conv2d", build_conv2d)

    def build_bilinear():
        fmap, p = t(4, 4, 3), proj((5, 3))
        coords = Tensor(rng.uniform(0.4, 2.6, size=(5, 2)), requires_grad=True)
        return lambda: (bilinear_sample(fmap, coords) * p).sum(), {"fmap": fmap, "coords": coords}
    entry("bilinear_sample", build_bilinear)

    def build_soft_argmax():
        x, p = t(3, 3, 4, 2), proj((2, 3))
        return lambda: (soft_argmax_2_5d(x) * p).sum(), {"x": x}
    entry("soft_argmax_2_5d", build_soft_argmax)

    def build_linear():
        x, w, b, p = t(4, 3), t(3, 5), t(5), proj((4, 5))
        return lambda: (linear(x, w, b) * p).sum(), {"x": x, "w": w, "b": b}
    entry("linear", build_linear)

    def build_residual_mlp():
        x, w1, b1, w2, b2 = t(5, 4), t(4, 8), t(8), t(8, 4), t(4)
        p = proj((5, 4))
        tensors = {"x": x, "w1": w1, "b1": b1, "w2": w2, "b2": b2}
        return lambda: (residual_mlp(x, w1, b1, w2, b2) * p).sum(), tensors
    entry("residual_mlp", build_residual_mlp)

    def build_attention_weights():
        q, k, p = t(5, 4), t(6, 4), proj((5, 6))
        return lambda: (attention_weights(q, k) * p).sum(), {"q": q, "k": k}
    entry("attention_weights", build_attention_weights)

    def build_attention():
        q, k, v, p = t(5, 4), t(6, 4), t(6, 3), proj((5, 3))
        return lambda: (attention(q, k, v) * p).sum(), {"q": q, "k": k, "v": v}
    entry("attention", build_attention)

    def build_conv1x1():
        x, w, b, p = t(4, 4, 3), t(3, 5), t(5), proj((4, 4, 5))
        return lambda: (conv1x1(x, w, b) * p).sum(), {"x": x, "w": w, "b": b}
    entry("conv1x1", build_conv1x1)

    def build_gap():
        x, p = t(5, 5, 4), proj((4,))
        return lambda: (global_average_pool(x) * p).sum(), {"x": x}
    entry("global_average_pool", build_gap)

    def build_sample_at_joints():
        fmap, p = t(4, 4, 6), proj((7, 6))
        coords = Tensor(rng.uniform(0.3, 2.7, size=(7, 2)), requires_grad=True)
        return lambda: (sample_at_joints(fmap, coords) * p).sum(), {"fmap": fmap, "coords": coords}
    entry("sample_at_joints", build_sample_at_joints)

    def build_l1():
        target = rng.normal(size=(4, 3))
        gap = rng.uniform(0.5, 1.5, size=(4, 3)) * rng.choice([-1.0, 1.0], size=(4, 3))
        pred = Tensor(target + gap, requires_grad=True)
        tgt = Tensor(target, requires_grad=True)
        return lambda: l1_loss(pred, tgt), {"pred": pred, "target": tgt}
    entry("l1_loss", build_l1)

    return suite


def check_primitives(seed=0, probes_per_tensor=2, step=1e-5, rng=None):
    """Run grad_check over the whole fixture battery; name -> GradReport."""
    out = {}
    for name, fn, tensors in primitive_suite(seed):
        out[name] = grad_check(fn, tensors, probes_per_tensor=probes_per_tensor,
                               step=step, rng=rng)
    return out


END_TO_END_PROBES = (
    "encoder.0.w",
    "block.adapt_right.ca.v.w",
    "heat.left.w",
    "pose.right.out.w",
    "rel.w",
)


def end_to_end_gradcheck(seed=0, probe_names=END_TO_END_PROBES, step=1e-4):
    """Probe the full image-to-loss pipeline at one weight per submodule.

    The step is wider than the primitive default: attention weights deep in
    the block see gradients a few orders below the loss scale, and a wider
    step pulls the difference quotient clear of the loss's own rounding.
    """
    from ..data import GenConfig, loss_targets, sample_rng, sample_scene
    from ..hand import default_template
    from ..network import EANet, ModelConfig

    template = default_template()
    model = EANet(ModelConfig(), seed=seed)
    sample = sample_scene(GenConfig(two_hand_ratio=1.0), sample_rng(seed, 1, 0), template)
    targets = loss_targets(sample)

    def fn():
        return model.compute_loss(model.forward(sample.image), targets, template)[0]

    tensors = {name: model.params[name] for name in probe_names}
    return grad_check(fn, tensors, probes_per_tensor=1, step=step)

