"""Relevance propagation through the traced classifier.

The backward chain redistributes the pre-softmax logit of the explained class
down to the 4x49 input, one rule per interaction type:

  * epsilon rule for linear mappings (dense head, W and U projections),
  * all rule for gated products (relevance to the signal, none to the gate),
  * accumulation rule for sums (cell update, gate pre-activation),
  * a dedicated rule for the normalization sites: either the identity
    baseline or the mean-aware omega rule, in two readings (`literal`
    applies the printed formula with the lower unit's gain; the
    `full-decomposition` variant expands the normalization into pairwise
    contributions with the upper unit's gain on off-diagonal flows).

Whatever a rule does not pass on (biases, stabilizer residue, the frozen
sigma path of the normalization) is booked per site into a SinkLedger, so
that input relevance plus sinks reproduces the explained logit exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivisionHazardError, ShapeError, ValidationError
from .features import CLASS_NAMES, N_STEPS, ObservationWindow
from .model import ActivationTrace, LayerNormParams, LayerNormStats, LnLstmParams

LN_RULES = ("omega", "identity")
OMEGA_VARIANTS = ("literal", "full-decomposition")


@dataclass
class LrpConfig:
    """ln_rule picks the normalization rule; omega_variant picks its reading.

    The default variant is `full-decomposition`: it redistributes bounded
    relevance mass per upper unit, so the global ledger identity holds to
    float64 precision. The `literal` reading applies the printed formula
    verbatim; its total-sum factor can amplify magnitudes by many orders on
    unlucky traces, which costs cancellation precision in the ledger.
    """

    epsilon: float = 1e-3
    ln_rule: str = "omega"
    omega_variant: str = "full-decomposition"

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValidationError("epsilon must be >= 0")
        if self.ln_rule not in LN_RULES:
            raise ValidationError(f"ln_rule must be one of {LN_RULES}")
        if self.omega_variant not in OMEGA_VARIANTS:
            raise ValidationError(f"omega_variant must be one of {OMEGA_VARIANTS}")


class SinkLedger:
    """Per-site accounting of relevance that did not reach the input.

    total_in is the relevance injected at the head; total_out is set once the
    input relevance is known. Entries may be scalars or per-instance arrays.
    """

    def __init__(self, total_in):
        self.total_in = np.asarray(total_in, dtype=np.float64)
        self.total_out = np.zeros_like(self.total_in)
        self.sinks: dict[str, np.ndarray] = {}

    def add(self, site: str, amount) -> None:
        amount = np.asarray(amount, dtype=np.float64)
        if site in self.sinks:
            self.sinks[site] = self.sinks[site] + amount
        else:
            self.sinks[site] = amount

    def total_sunk(self):
        return sum(self.sinks.values()) if self.sinks else np.zeros_like(self.total_in)

    def conservation_gap(self):
        """total_in - (total_out + sum of sinks); ~0 by construction."""
        return self.total_in - self.total_out - self.total_sunk()

    def scalar_sinks(self) -> dict:
        return {site: float(np.asarray(v).reshape(-1)[0]) if np.ndim(v) else float(v)
                for site, v in self.sinks.items()}

    def instance(self, k: int) -> "SinkLedger":
        """Ledger of one instance out of a batched ledger."""
        one = SinkLedger(self.total_in[k])
        one.total_out = self.total_out[k]
        one.sinks = {site: v[k] for site, v in self.sinks.items()}
        return one


def _sign(z):
    return np.where(z >= 0, 1.0, -1.0)


def _stabilized(z, epsilon):
    if epsilon == 0 and np.any(z == 0):
        raise DivisionHazardError(
            "zero denominator with epsilon=0 in relevance split")
    return z + epsilon * _sign(z)


def lrp_epsilon(r_out, weights, inputs, pre_activations, epsilon):
    """Proportional redistribution through a linear map z = weights @ inputs.

    weights: (M, D); inputs: (..., D); pre_activations/r_out: (..., M).
    Returns r_in (..., D). Bias and stabilizer shares are the caller's
    sum(r_out) - sum(r_in).
    """
    weights = np.asarray(weights, dtype=np.float64)
    inputs = np.asarray(inputs, dtype=np.float64)
    z = np.asarray(pre_activations, dtype=np.float64)
    r_out = np.asarray(r_out, dtype=np.float64)
    if weights.shape[0] != z.shape[-1] or weights.shape[1] != inputs.shape[-1]:
        raise ShapeError(
            f"weights {weights.shape} inconsistent with inputs "
            f"{inputs.shape} / outputs {z.shape}")
    share = r_out / _stabilized(z, epsilon)
    return inputs * (share @ weights)


def lrp_copy(r_outs):
    """Merge relevance flowing back into one source from several consumers."""
    r_outs = list(r_outs)
    total = np.array(r_outs[0], dtype=np.float64, copy=True)
    for r in r_outs[1:]:
        total += r
    return total


def lrp_gate(r_out, source_values=None, gate_values=None):
    """Gated product s*g: the signal gets everything, the gate gets zero."""
    r_out = np.asarray(r_out, dtype=np.float64)
    return r_out, np.zeros_like(r_out)


def lrp_accumulate(r_out, addend_values, epsilon):
    """Split relevance at a sum proportionally to each addend (per unit)."""
    addends = [np.asarray(a, dtype=np.float64) for a in addend_values]
    z = addends[0].copy()
    for a in addends[1:]:
        z += a
    share = np.asarray(r_out, dtype=np.float64) / _stabilized(z, epsilon)
    return [a * share for a in addends]


def _ln_upper_values(p: LayerNormParams, stats: LayerNormStats):
    return p.gain * stats.normalized + p.bias


def lrp_omega(r_out, ln_input, ln_params: LayerNormParams, ln_stats: LayerNormStats,
              epsilon: float = 1e-3, variant: str = "literal"):
    """Mean-aware relevance redistribution through a normalization site.

    ln_input are the recorded pre-normalization values (..., H); r_out sits on
    the normalized output. sigma is treated as a constant and the bias is a
    sink, so the residual sum(r_out) - sum(r_in) belongs to the ledger.

    `literal`: r_in_i = (z_i - z_i/H) * gain_i/sigma * sum_j r_j/(y_j + eps)
    `full-decomposition`: pairwise split with diag (z_i - z_i/H) * gain_i/sigma
    and off-diagonal -(z_i/H) * gain_j/sigma, epsilon-stabilized per upper j.
    """
    a = np.asarray(ln_input, dtype=np.float64)
    r_out = np.asarray(r_out, dtype=np.float64)
    if a.shape[-1] != ln_params.width:
        raise ShapeError(
            f"ln input width {a.shape[-1]} != parameter width {ln_params.width}")
    H = ln_params.width
    if H == 1:
        # z - z/H vanishes identically: the output is exactly the bias and
        # the input carries no information.
        return np.zeros_like(np.broadcast_arrays(r_out, a)[0])
    sigma = np.asarray(ln_stats.std, dtype=np.float64)[..., None]
    upper = _ln_upper_values(ln_params, ln_stats)
    m = r_out / _stabilized(upper, epsilon)
    centered = a - a / H
    if variant == "literal":
        return centered * (ln_params.gain / sigma) * m.sum(axis=-1, keepdims=True)
    if variant == "full-decomposition":
        gm = ln_params.gain * m
        diag = centered * (ln_params.gain / sigma) * m
        off = (a / H) * (gm.sum(axis=-1, keepdims=True) - gm) / sigma
        return diag - off
    raise ValidationError(f"unknown omega variant {variant!r}")


def lrp_identity_ln(r_out):
    """Baseline: pass relevance through the normalization unchanged."""
    return np.array(r_out, dtype=np.float64, copy=True)


@dataclass
class RelevanceMap:
    """Per-input relevance (4, 49) for one explained class, with its sinks."""

    values: np.ndarray
    target_class: str
    sinks: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def to_dict(self, window_id: str = "") -> dict:
        return {
            "window_id": window_id,
            "class": self.target_class,
            "relevance": self.values.reshape(-1).tolist(),   # row-major 196
            "sinks": {k: float(v) for k, v in self.sinks.items()},
        }


def _ln_stats_at(stats: LayerNormStats, t: int) -> LayerNormStats:
    return LayerNormStats(stats.mean[:, t], stats.std[:, t], stats.normalized[:, t])


def _ln_backward(r_out, ln_input, ln_params, stats, cfg: LrpConfig,
                 bypass: bool = False):
    if bypass:
        # The site is a plain wire in the forward graph; no rule applies.
        return np.array(r_out, dtype=np.float64, copy=True)
    if cfg.ln_rule == "identity":
        return lrp_identity_ln(r_out)
    return lrp_omega(r_out, ln_input, ln_params, stats,
                     epsilon=cfg.epsilon, variant=cfg.omega_variant)


def explain_batch(trace: ActivationTrace, p: LnLstmParams, classes,
                  cfg: LrpConfig = None, capture: dict = None):
    """Chained relevance pass over a batched trace.

    classes: (B,) target class indices. Returns (relevance (B, 4, 49),
    SinkLedger with per-instance entries). `capture`, if given, records the
    relevance arriving at gate activations and other probe sites.
    """
    cfg = cfg or LrpConfig()
    B, T = trace.x.shape[0], trace.x.shape[1]
    classes = np.asarray(classes, dtype=int)
    rows = np.arange(B)
    sl_i, sl_f = p.gate_slice("i"), p.gate_slice("f")
    sl_g, sl_o = p.gate_slice("g"), p.gate_slice("o")
    eps = cfg.epsilon

    f_c = trace.logits[rows, classes]
    ledger = SinkLedger(total_in=f_c)

    r_logits = np.zeros_like(trace.logits)
    r_logits[rows, classes] = f_c

    r_h = lrp_epsilon(r_logits, p.W_head, trace.h[:, T - 1], trace.logits, eps)
    ledger.add("head", r_logits.sum(axis=1) - r_h.sum(axis=1))

    relevance = np.zeros_like(trace.x)
    r_c_carry = np.zeros((B, p.hidden))

    for t in range(T - 1, -1, -1):
        gates = trace.gates[:, t]
        c_t = trace.c[:, t]
        c_prev = trace.c[:, t - 1] if t > 0 else np.zeros_like(c_t)

        # h_t = o * tanh(LN3(c_t)): all rule, tanh transparent
        r_tc, r_gate_o = lrp_gate(r_h, source_values=trace.tc[:, t],
                                  gate_values=gates[:, sl_o])
        if capture is not None:
            capture[f"t{t}.gate_o"] = r_gate_o

        r_c_viah = _ln_backward(r_tc, c_t, p.ln_c, _ln_stats_at(trace.ln_c, t),
                                cfg, bypass=trace.ln_bypass)
        ledger.add("ln3", r_tc.sum(axis=1) - r_c_viah.sum(axis=1))

        r_c = lrp_copy([r_c_viah, r_c_carry])

        # c_t = f*c_prev + i*g: accumulation, then all rule on both products
        r_fc, r_ig = lrp_accumulate(r_c, [gates[:, sl_f] * c_prev,
                                          gates[:, sl_i] * gates[:, sl_g]], eps)
        ledger.add("cell_accumulation",
                   r_c.sum(axis=1) - r_fc.sum(axis=1) - r_ig.sum(axis=1))
        r_c_carry, r_gate_f = lrp_gate(r_fc, source_values=c_prev,
                                       gate_values=gates[:, sl_f])
        r_g, r_gate_i = lrp_gate(r_ig, source_values=gates[:, sl_g],
                                 gate_values=gates[:, sl_i])
        if capture is not None:
            capture[f"t{t}.gate_f"] = r_gate_f
            capture[f"t{t}.gate_i"] = r_gate_i

        # candidate pre-activation: ax + ah + b, only the g block carries
        r_pre = np.zeros((B, 4 * p.hidden))
        r_pre[:, sl_g] = r_g
        r_ax, r_ah, r_b = lrp_accumulate(
            r_pre, [trace.ax[:, t], trace.ah[:, t],
                    np.broadcast_to(p.b, r_pre.shape)], eps)
        ledger.add("gate_bias", r_b.sum(axis=1))
        ledger.add("gate_pre_accumulation",
                   r_pre.sum(axis=1) - r_ax.sum(axis=1) - r_ah.sum(axis=1)
                   - r_b.sum(axis=1))

        # input projection: LN1 backward, then epsilon through W
        r_zx = _ln_backward(r_ax, trace.zx[:, t], p.ln_x,
                            _ln_stats_at(trace.ln_x, t), cfg,
                            bypass=trace.ln_bypass)
        ledger.add("ln1", r_ax.sum(axis=1) - r_zx.sum(axis=1))
        r_x = lrp_epsilon(r_zx, p.W, trace.x[:, t], trace.zx[:, t], eps)
        ledger.add("input_linear", r_zx.sum(axis=1) - r_x.sum(axis=1))
        relevance[:, t] = r_x

        # recurrent projection: LN2 backward, then epsilon through U.
        # The initial state is zero, so at t=0 the whole recurrent share
        # terminates here.
        if t > 0:
            r_zh = _ln_backward(r_ah, trace.zh[:, t], p.ln_h,
                                _ln_stats_at(trace.ln_h, t), cfg,
                                bypass=trace.ln_bypass)
            ledger.add("ln2", r_ah.sum(axis=1) - r_zh.sum(axis=1))
            r_h = lrp_epsilon(r_zh, p.U, trace.h[:, t - 1], trace.zh[:, t], eps)
            ledger.add("recurrent_linear", r_zh.sum(axis=1) - r_h.sum(axis=1))
        else:
            ledger.add("initial_state", r_ah.sum(axis=1))

    ledger.total_out = relevance.sum(axis=(1, 2))
    return relevance, ledger


def explain(window: ObservationWindow, p: LnLstmParams, trace: ActivationTrace,
            target_class, cfg: LrpConfig = None):
    """Relevance of one window for one class: (RelevanceMap, SinkLedger).

    The trace must come from forward() on the same window and parameters.
    """
    cfg = cfg or LrpConfig()
    if trace.batch != 1 or not np.array_equal(trace.x[0], window.frames):
        raise ValidationError("trace does not belong to this window")
    head_check = trace.h[:, N_STEPS - 1] @ p.W_head.T + p.b_head
    if not np.allclose(head_check, trace.logits, rtol=0, atol=1e-12):
        raise ValidationError("trace does not belong to these parameters")
    c = CLASS_NAMES.index(target_class) if isinstance(target_class, str) \
        else int(target_class)

    values, ledger = explain_batch(trace, p, np.array([c]), cfg)
    one = ledger.instance(0)
    rmap = RelevanceMap(values=values[0], target_class=CLASS_NAMES[c],
                        sinks={k: float(v) for k, v in one.sinks.items()})
    return rmap, one
