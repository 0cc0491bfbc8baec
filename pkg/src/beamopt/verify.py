"""Fast self-check suite: nulling, limiting cases, gradient spot checks,
and constraint satisfaction, all on fixed seeds. Intended to finish in
well under a minute; the CLI exits non-zero if any check fails.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import baselines, metrics
from .models import ModelConfig, forward_graph, init_params


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rand_channel(rng, k, m, n):
    return (rng.standard_normal((k, m, n)) + 1j * rng.standard_normal((k, m, n))) / np.sqrt(2)


def _fd_grad(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of a flat array."""
    g = np.empty_like(x)
    for i in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi.flat[i] += step
        lo.flat[i] -= step
        g.flat[i] = (f(hi) - f(lo)) / (2 * step)
    return g


def _grad_check(build, x0: np.ndarray, rel_tol: float) -> tuple[bool, str]:
    """Compare tape gradients of build(x)->scalar Tensor against central FD."""
    t = ad.Tensor(x0.copy(), requires_grad=True)
    with ad.Tape() as tape:
        out = build(t)
    tape.backward(out)
    analytic = t.grad.reshape(x0.shape)

    def scalar(x):
        return build(ad.Tensor(x)).item()

    numeric = _fd_grad(scalar, x0)
    denom = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
    rel = float(np.max(np.abs(analytic - numeric)) / denom)
    return rel <= rel_tol, f"max rel err {rel:.2e}"


def check_zf_nulling() -> CheckResult:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        h = _rand_channel(rng, 8, 4, 4)
        for k in range(8):
            w, _ = baselines.zf_beamformer(h[k])
            cross = h[k].T @ w
            np.fill_diagonal(cross, 0.0)
            worst = max(worst, float(np.max(np.abs(cross))))
    return CheckResult("zf_nulling", worst <= 1e-9, f"max cross gain {worst:.2e}")


def check_mmse_zf_limit() -> CheckResult:
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(20):
        h = _rand_channel(rng, 1, 4, 4)[0]
        w_zf, _ = baselines.zf_beamformer(h)
        w_mm, _ = baselines.mmse_beamformer(h, 1e-12)
        for i in range(4):
            phase = np.vdot(w_zf[:, i], w_mm[:, i])
            phase /= max(abs(phase), 1e-300)
            worst = max(worst, float(np.linalg.norm(w_mm[:, i] - phase * w_zf[:, i])))
    return CheckResult("mmse_zf_limit", worst <= 1e-5, f"max aligned distance {worst:.2e}")


def check_structure_collinearity() -> CheckResult:
    rng = np.random.default_rng(13)
    worst = 1.0
    for lam in (0.0, 1.0, 10.0, 100.0):
        h = _rand_channel(rng, 1, 4, 1)[0]
        w, _ = baselines.optimal_structure_bf(
            h, baselines.VirtualUplinkPowers(np.array([lam])), np.ones(1), 1.0)
        mf = baselines.matched_filter(h)
        cos = abs(np.vdot(mf[:, 0], w[:, 0]))
        worst = min(worst, float(cos))
    return CheckResult("structure_collinearity", abs(worst - 1.0) <= 1e-12,
                       f"min |cos| {worst:.15f}")


def check_structure_oracle() -> CheckResult:
    rng = np.random.default_rng(14)
    worst = 0.0
    for _ in range(10):
        h = _rand_channel(rng, 1, 4, 4)[0]
        lam = rng.uniform(0.2, 2.0, 4)
        w, _ = baselines.optimal_structure_bf(h, baselines.VirtualUplinkPowers(lam),
                                              np.ones(4), 1.0)
        a = h.conj()
        cov = np.eye(4) + (a * lam[None, :]) @ a.conj().T
        expect = np.linalg.inv(cov) @ a
        expect /= np.linalg.norm(expect, axis=0, keepdims=True)
        worst = max(worst, float(np.max(np.abs(w - expect))))
    return CheckResult("structure_oracle", worst <= 1e-10, f"max deviation {worst:.2e}")


def check_fixed_point() -> CheckResult:
    rng = np.random.default_rng(15)
    worst = 0.0
    for _ in range(5):
        h = _rand_channel(rng, 1, 2, 2)[0]
        lam = baselines.solve_virtual_uplink_powers(h, np.ones(2), 0.5)
        sinrs = baselines.virtual_uplink_sinrs(h, lam.lam, 0.5)
        worst = max(worst, float(np.max(np.abs(sinrs - 1.0))))
    return CheckResult("fixed_point_selfconsistency", worst <= 1e-8,
                       f"max target deviation {worst:.2e}")


def check_metrics_oracle() -> CheckResult:
    rng = np.random.default_rng(16)
    worst = 0.0
    for _ in range(20):
        k, m, n = 3, 3, 2
        h = _rand_channel(rng, k, m, n)
        w = _rand_channel(rng, k, m, n)
        w /= np.linalg.norm(w, axis=1, keepdims=True)
        p = rng.uniform(0.2, 0.8, n)
        sigma2 = rng.uniform(0.5, 2.0, n)
        bf = metrics.BeamformerSet(w_tilde=w, p=p, p_max=float(n))
        gamma = metrics.sinr_per_ue(h, bf, sigma2)
        for kk in range(k):
            for nn in range(n):
                sig = p[nn] * abs(np.dot(h[kk, :, nn], w[kk, :, nn])) ** 2
                intf = sum(p[ii] * abs(np.dot(h[kk, :, nn], w[kk, :, ii])) ** 2
                           for ii in range(n) if ii != nn)
                worst = max(worst, abs(gamma[kk, nn] - sig / (intf + sigma2[nn])))
    return CheckResult("metrics_oracle", worst <= 1e-12, f"max deviation {worst:.2e}")


def check_grad_gelu() -> CheckResult:
    rng = np.random.default_rng(17)
    ok, detail = _grad_check(lambda t: ad.tsum(ad.gelu(t)), rng.standard_normal(16), 1e-5)
    return CheckResult("grad_gelu", ok, detail)


def check_grad_linear() -> CheckResult:
    rng = np.random.default_rng(18)
    w = rng.standard_normal((3, 5))
    b = rng.standard_normal(3)
    ok, detail = _grad_check(
        lambda t: ad.tsum(ad.square(ad.linear(ad.reshape(t, (4, 5)), ad.Tensor(w), ad.Tensor(b)))),
        rng.standard_normal(20), 1e-5)
    return CheckResult("grad_linear", ok, detail)


def check_grad_softmax() -> CheckResult:
    rng = np.random.default_rng(19)
    mixer = rng.standard_normal((4, 6))
    ok, detail = _grad_check(
        lambda t: ad.tsum(ad.softmax(ad.reshape(t, (4, 6)), axis=1) * mixer),
        rng.standard_normal(24), 1e-5)
    return CheckResult("grad_softmax", ok, detail)


def check_grad_conv() -> CheckResult:
    rng = np.random.default_rng(20)
    w = rng.standard_normal((3, 2, 3))
    ok, detail = _grad_check(
        lambda t: ad.tsum(ad.square(ad.conv1d(ad.reshape(t, (2, 2, 8)), ad.Tensor(w),
                                              stride=2, padding=1))),
        rng.standard_normal(32), 1e-5)
    return CheckResult("grad_conv1d", ok, detail)


def check_grad_batchnorm() -> CheckResult:
    rng = np.random.default_rng(21)
    gamma = rng.uniform(0.5, 1.5, 3)
    beta = rng.standard_normal(3)
    mixer = rng.standard_normal((2, 3, 4))

    def build(t):
        state = ad.BatchNormState.fresh(3)
        y = ad.batchnorm1d(ad.reshape(t, (2, 3, 4)), ad.Tensor(gamma), ad.Tensor(beta),
                           state, training=True)
        return ad.tsum(y * mixer)

    ok, detail = _grad_check(build, rng.standard_normal(24), 1e-5)
    return CheckResult("grad_batchnorm", ok, detail)


def check_grad_full_loss() -> CheckResult:
    rng = np.random.default_rng(22)
    cfg = ModelConfig(m_tx=2, n_ue=2, k_sc=4)
    params = init_params(cfg, rng)
    h = _rand_channel(rng, 4, 2, 2)[None]
    sigma2 = rng.uniform(0.5, 1.5, (1, 2))

    name = "bf1.w"
    target = params.tensors[name]
    x0 = target.data.copy()

    def loss_with(data) -> float:
        target.data = data.reshape(target.data.shape)
        states = {k: v.copy() for k, v in params.bn_states.items()}
        wr, wi, p = forward_graph(h, params, cfg, training=True)
        for k in params.bn_states:
            params.bn_states[k] = states[k]
        return metrics.per_sample_sum_rates(wr.data, wi.data, h, p.data, sigma2).mean() * -1.0

    with ad.Tape() as tape:
        wr, wi, p = forward_graph(h, params, cfg, training=True)
        loss = metrics.neg_sum_rate_graph(wr, wi, h, p, sigma2)
    tape.backward(loss)
    analytic = target.grad.copy()
    flat_idx = np.argsort(np.abs(analytic.ravel()))[-24:]   # spot-check largest entries
    numeric = np.empty(flat_idx.size)
    for j, i in enumerate(flat_idx):
        hi = x0.copy()
        lo = x0.copy()
        hi.flat[i] += 1e-6
        lo.flat[i] -= 1e-6
        numeric[j] = (loss_with(hi) - loss_with(lo)) / 2e-6
    target.data = x0
    denom = max(np.max(np.abs(numeric)), 1e-12)
    rel = float(np.max(np.abs(analytic.ravel()[flat_idx] - numeric)) / denom)
    return CheckResult("grad_full_loss", rel <= 1e-4, f"max rel err {rel:.2e}")


def check_constraints() -> CheckResult:
    rng = np.random.default_rng(23)
    cfg = ModelConfig(m_tx=2, n_ue=2, k_sc=8)
    worst_norm, worst_pow = 0.0, 0.0
    for _ in range(20):
        params = init_params(cfg, rng)
        h = _rand_channel(rng, 8, 2, 2)[None]
        wr, wi, p = forward_graph(h, params, cfg, training=False)
        norms = np.linalg.norm(wr.data + 1j * wi.data, axis=2)
        worst_norm = max(worst_norm, float(np.max(np.abs(norms - 1.0))))
        worst_pow = max(worst_pow, float(np.max(np.abs(p.data.sum(axis=1) - cfg.power_budget))))
    ok = worst_norm <= 1e-9 and worst_pow <= 1e-12
    return CheckResult("constraints_by_construction", ok,
                       f"norm dev {worst_norm:.2e}, power dev {worst_pow:.2e}")


def check_softmax_rows() -> CheckResult:
    rng = np.random.default_rng(24)
    x = rng.standard_normal((64, 7)) * 10
    y = ad.softmax(ad.Tensor(x), axis=1).data
    shift = ad.softmax(ad.Tensor(x + 123.0), axis=1).data
    dev = max(float(np.max(np.abs(y.sum(axis=1) - 1.0))), float(np.max(np.abs(y - shift))))
    return CheckResult("softmax_rows", dev <= 1e-12, f"max deviation {dev:.2e}")


def check_adam_bowl() -> CheckResult:
    theta = ad.Tensor(np.array([1.0]), requires_grad=True)
    opt = ad.Adam(OrderedDict(theta=theta), lr=0.05)
    for _ in range(500):
        opt.zero_grad()
        with ad.Tape() as tape:
            loss = ad.tsum(ad.square(theta))
        tape.backward(loss)
        opt.step()
    val = abs(float(theta.data[0]))
    return CheckResult("adam_quadratic_bowl", val < 1e-2, f"|theta| {val:.2e}")


ALL_CHECKS = (
    check_zf_nulling,
    check_mmse_zf_limit,
    check_structure_collinearity,
    check_structure_oracle,
    check_fixed_point,
    check_metrics_oracle,
    check_grad_gelu,
    check_grad_linear,
    check_grad_softmax,
    check_grad_conv,
    check_grad_batchnorm,
    check_grad_full_loss,
    check_constraints,
    check_softmax_rows,
    check_adam_bowl,
)


def run_checks() -> list[CheckResult]:
    return [check() for check in ALL_CHECKS]
