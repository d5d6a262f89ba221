"""Layer-normalized LSTM classifier with full activation tracing.

Architecture (single recurrent layer plus a dense head):

    pre_k = LN1(W x_k) + LN2(U h_{k-1}) + b
    i,f,o = sigmoid(pre slices);  g = tanh(pre slice)
    c_k   = f * c_{k-1} + i * g
    h_k   = o * tanh(LN3(c_k))
    logits = W_head h_T + b_head

Normalization is applied to the input projection (LN1), the recurrent
projection (LN2) and the cell state before the output tanh (LN3). Every
intermediate of the forward pass is recorded in an ActivationTrace so the
relevance and gradient engines can replay it exactly. All math is float64;
functions here are pure, parameters are treated as immutable after training.

Internally the model is batched (leading batch axis); the window-level
entry points wrap a batch of one.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ShapeError, ValidationError
from .features import (CLASS_NAMES, N_CLASSES, N_INPUT, N_STEPS,
                       ObservationWindow, PREDICTION_HORIZON)

GATE_NAMES = ("i", "f", "g", "o")   # input, forget, candidate, output


@dataclass
class LayerNormParams:
    """Gain/bias of one normalization site; var_eps keeps sigma positive."""

    gain: np.ndarray
    bias: np.ndarray
    var_eps: float = 1e-5

    def __post_init__(self):
        self.gain = np.asarray(self.gain, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.gain.ndim != 1 or self.gain.shape != self.bias.shape:
            raise ShapeError(
                f"layer-norm gain/bias must be matching vectors, "
                f"got {self.gain.shape} and {self.bias.shape}")
        if self.width < 1:
            raise ShapeError("layer-norm width must be >= 1")
        if not self.var_eps > 0:
            raise ValidationError("var_eps must be positive")

    @property
    def width(self) -> int:
        return int(self.gain.shape[0])


@dataclass
class LayerNormStats:
    """Per-call statistics recorded for the trace.

    mean/std have the call's leading shape; std includes the var_eps term
    (it is the actual divisor used). normalized is (a - mean)/std.
    """

    mean: np.ndarray
    std: np.ndarray
    normalized: np.ndarray


def layer_norm_forward(a, p: LayerNormParams):
    """Normalize `a` over its last axis: y = gain * (a - mean)/std + bias.

    Returns (y, LayerNormStats). The surrounding nonlinearity is applied by
    the caller. std = sqrt(population variance + var_eps).
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != p.width:
        raise ShapeError(
            f"layer-norm input width {a.shape[-1]} != parameter width {p.width}")
    mean = a.mean(axis=-1, keepdims=True)
    var = np.square(a - mean).mean(axis=-1, keepdims=True)
    std = np.sqrt(var + p.var_eps)
    normalized = (a - mean) / std
    y = p.gain * normalized + p.bias
    return y, LayerNormStats(mean=mean[..., 0], std=std[..., 0],
                             normalized=normalized)


def _layer_norm_backward(dy, stats: LayerNormStats, p: LayerNormParams):
    """Gradient of layer_norm_forward w.r.t. its input, given dL/dy."""
    dn = dy * p.gain
    mean_dn = dn.mean(axis=-1, keepdims=True)
    mean_dn_n = (dn * stats.normalized).mean(axis=-1, keepdims=True)
    return (dn - mean_dn - stats.normalized * mean_dn_n) / stats.std[..., None]


@dataclass
class LnLstmParams:
    """All weights of the classifier.

    W (4H, 49) input weights, U (4H, H) recurrent weights, b (4H,) gate bias,
    three LayerNormParams sites, dense head (3, H) + (3,).
    Gate blocks are ordered i, f, g, o.
    """

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    ln_x: LayerNormParams
    ln_h: LayerNormParams
    ln_c: LayerNormParams
    W_head: np.ndarray
    b_head: np.ndarray

    def __post_init__(self):
        for name in ("W", "U", "b", "W_head", "b_head"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        H = self.hidden
        expect = {"W": (4 * H, N_INPUT), "U": (4 * H, H), "b": (4 * H,),
                  "W_head": (N_CLASSES, H), "b_head": (N_CLASSES,)}
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"{name} must have shape {shape}, got {got}")
        if self.ln_x.width != 4 * H or self.ln_h.width != 4 * H:
            raise ShapeError("LN1/LN2 width must equal 4*hidden")
        if self.ln_c.width != H:
            raise ShapeError("LN3 width must equal hidden")
        for name in ("W", "U", "b", "W_head", "b_head"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"non-finite values in parameter {name}")

    @property
    def hidden(self) -> int:
        return int(self.U.shape[1])

    def gate_slice(self, gate: str) -> slice:
        k = GATE_NAMES.index(gate)
        H = self.hidden
        return slice(k * H, (k + 1) * H)


def init_params(seed: int = 0, hidden: int = 64) -> LnLstmParams:
    """Glorot-uniform weights, unit gains, zero biases, forget bias +1."""
    rng = np.random.default_rng(seed)

    def glorot(shape):
        limit = np.sqrt(6.0 / (shape[0] + shape[1]))
        return rng.uniform(-limit, limit, size=shape)

    H = hidden
    b = np.zeros(4 * H)
    b[H:2 * H] = 1.0
    return LnLstmParams(
        W=glorot((4 * H, N_INPUT)), U=glorot((4 * H, H)), b=b,
        ln_x=LayerNormParams(np.ones(4 * H), np.zeros(4 * H)),
        ln_h=LayerNormParams(np.ones(4 * H), np.zeros(4 * H)),
        ln_c=LayerNormParams(np.ones(H), np.zeros(H)),
        # a larger head keeps early gradients alive through the bounded
        # recurrent activations
        W_head=3.0 * glorot((N_CLASSES, H)), b_head=np.zeros(N_CLASSES),
    )


@dataclass
class ActivationTrace:
    """Every intermediate of a (batched) forward pass.

    Arrays are (B, T, ...). Replaying the trace reproduces the logits
    bit-identically; the relevance engine consumes the recorded sites.
    """

    x: np.ndarray            # (B, T, 49)
    zx: np.ndarray           # (B, T, 4H)   W @ x
    ln_x: LayerNormStats     # stats over zx, mean/std (B, T)
    ax: np.ndarray           # (B, T, 4H)   LN1 output
    zh: np.ndarray           # (B, T, 4H)   U @ h_prev
    ln_h: LayerNormStats
    ah: np.ndarray           # (B, T, 4H)   LN2 output
    pre: np.ndarray          # (B, T, 4H)   ax + ah + b
    gates: np.ndarray        # (B, T, 4H)   post-activations i,f,g,o
    c: np.ndarray            # (B, T, H)    raw cell state
    ln_c: LayerNormStats
    cn: np.ndarray           # (B, T, H)    LN3 output
    tc: np.ndarray           # (B, T, H)    tanh(cn)
    h: np.ndarray            # (B, T, H)
    logits: np.ndarray       # (B, 3)
    probs: np.ndarray        # (B, 3)
    ln_bypass: bool = False  # testing hook: True if LN sites were pass-throughs

    @property
    def batch(self) -> int:
        return int(self.x.shape[0])


@dataclass
class PredictionOutput:
    """Classifier output for one window."""

    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: str
    horizon: float = PREDICTION_HORIZON

    @property
    def predicted_index(self) -> int:
        return CLASS_NAMES.index(self.predicted_class)

    def to_dict(self) -> dict:
        return {
            "logits": self.logits.tolist(),
            "probabilities": self.probabilities.tolist(),
            "predicted_class": self.predicted_class,
            "horizon": self.horizon,
        }


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _ln_or_bypass(a, p: LayerNormParams, bypass: bool):
    if not bypass:
        return layer_norm_forward(a, p)
    stats = LayerNormStats(mean=np.zeros(a.shape[:-1]),
                           std=np.ones(a.shape[:-1]), normalized=a)
    return a, stats


def forward_batch(x: np.ndarray, p: LnLstmParams,
                  ln_bypass: bool = False) -> ActivationTrace:
    """Run the classifier on a (B, 4, 49) stack of windows.

    ln_bypass turns every normalization site into a pass-through (used to
    probe that the relevance rules for normalization are local to it).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != N_STEPS or x.shape[2] != N_INPUT:
        raise ShapeError(f"expected (B, {N_STEPS}, {N_INPUT}) input, got {x.shape}")
    B, T = x.shape[0], x.shape[1]
    H = p.hidden
    sl_i, sl_f = p.gate_slice("i"), p.gate_slice("f")
    sl_g, sl_o = p.gate_slice("g"), p.gate_slice("o")

    zx = np.einsum("btj,kj->btk", x, p.W)
    ax, ln_x = _ln_or_bypass(zx, p.ln_x, ln_bypass)

    zh = np.zeros((B, T, 4 * H))
    ah = np.zeros((B, T, 4 * H))
    ln_h_mean = np.zeros((B, T))
    ln_h_std = np.zeros((B, T))
    ln_h_norm = np.zeros((B, T, 4 * H))
    pre = np.zeros((B, T, 4 * H))
    gates = np.zeros((B, T, 4 * H))
    c = np.zeros((B, T, H))
    cn = np.zeros((B, T, H))
    ln_c_mean = np.zeros((B, T))
    ln_c_std = np.zeros((B, T))
    ln_c_norm = np.zeros((B, T, H))
    tc = np.zeros((B, T, H))
    h = np.zeros((B, T, H))

    h_prev = np.zeros((B, H))
    c_prev = np.zeros((B, H))
    for t in range(T):
        zh_t = h_prev @ p.U.T
        ah_t, st_h = _ln_or_bypass(zh_t, p.ln_h, ln_bypass)
        pre_t = ax[:, t] + ah_t + p.b
        g_t = np.empty_like(pre_t)
        g_t[:, sl_i] = _sigmoid(pre_t[:, sl_i])
        g_t[:, sl_f] = _sigmoid(pre_t[:, sl_f])
        g_t[:, sl_g] = np.tanh(pre_t[:, sl_g])
        g_t[:, sl_o] = _sigmoid(pre_t[:, sl_o])
        c_t = g_t[:, sl_f] * c_prev + g_t[:, sl_i] * g_t[:, sl_g]
        cn_t, st_c = _ln_or_bypass(c_t, p.ln_c, ln_bypass)
        tc_t = np.tanh(cn_t)
        h_t = g_t[:, sl_o] * tc_t

        zh[:, t], ah[:, t], pre[:, t], gates[:, t] = zh_t, ah_t, pre_t, g_t
        ln_h_mean[:, t], ln_h_std[:, t] = st_h.mean, st_h.std
        ln_h_norm[:, t] = st_h.normalized
        c[:, t], cn[:, t], tc[:, t], h[:, t] = c_t, cn_t, tc_t, h_t
        ln_c_mean[:, t], ln_c_std[:, t] = st_c.mean, st_c.std
        ln_c_norm[:, t] = st_c.normalized
        h_prev, c_prev = h_t, c_t

    logits = h_prev @ p.W_head.T + p.b_head
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits in forward pass")
    probs = _softmax(logits)

    return ActivationTrace(
        x=x, zx=zx, ln_x=ln_x, ax=ax, zh=zh,
        ln_h=LayerNormStats(ln_h_mean, ln_h_std, ln_h_norm), ah=ah,
        pre=pre, gates=gates, c=c,
        ln_c=LayerNormStats(ln_c_mean, ln_c_std, ln_c_norm),
        cn=cn, tc=tc, h=h, logits=logits, probs=probs, ln_bypass=ln_bypass)


def lstm_step(x_k, h_prev, c_prev, p: LnLstmParams):
    """One traced cell step on a single 49-vector.

    Returns (h_k, c_k, step_trace) where step_trace maps site names to the
    recorded values. Raises NumericError naming the first non-finite site.
    """
    x_k = np.asarray(x_k, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    H = p.hidden
    if x_k.shape != (N_INPUT,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(
            f"lstm_step expects x ({N_INPUT},), h/c ({H},); "
            f"got {x_k.shape}, {h_prev.shape}, {c_prev.shape}")

    trace = {}

    def record(site, value):
        if not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite value at site '{site}'")
        trace[site] = value
        return value

    zx = record("zx", p.W @ x_k)
    ax, st_x = layer_norm_forward(zx, p.ln_x)
    record("ax", ax)
    trace["ln_x"] = st_x
    zh = record("zh", p.U @ h_prev)
    ah, st_h = layer_norm_forward(zh, p.ln_h)
    record("ah", ah)
    trace["ln_h"] = st_h
    pre = record("pre", ax + ah + p.b)
    gates = np.concatenate([
        _sigmoid(pre[p.gate_slice("i")]), _sigmoid(pre[p.gate_slice("f")]),
        np.tanh(pre[p.gate_slice("g")]), _sigmoid(pre[p.gate_slice("o")])])
    record("gates", gates)
    c_k = record("c", gates[p.gate_slice("f")] * c_prev
                 + gates[p.gate_slice("i")] * gates[p.gate_slice("g")])
    cn, st_c = layer_norm_forward(c_k, p.ln_c)
    record("cn", cn)
    trace["ln_c"] = st_c
    tc = record("tc", np.tanh(cn))
    h_k = record("h", gates[p.gate_slice("o")] * tc)
    return h_k, c_k, trace


def forward(window: ObservationWindow, p: LnLstmParams):
    """Classify one window; returns (PredictionOutput, ActivationTrace)."""
    window.validate()
    trace = forward_batch(window.frames[None, :, :], p)
    k = int(np.argmax(trace.logits[0]))
    out = PredictionOutput(logits=trace.logits[0].copy(),
                           probabilities=trace.probs[0].copy(),
                           predicted_class=CLASS_NAMES[k])
    return out, trace


@dataclass
class ParamGrads:
    """Parameter gradients in the same shapes as LnLstmParams."""

    W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    ln_x_gain: np.ndarray
    ln_x_bias: np.ndarray
    ln_h_gain: np.ndarray
    ln_h_bias: np.ndarray
    ln_c_gain: np.ndarray
    ln_c_bias: np.ndarray
    W_head: np.ndarray
    b_head: np.ndarray

    def items(self):
        return self.__dict__.items()


def backward_batch(trace: ActivationTrace, p: LnLstmParams, dlogits: np.ndarray,
                   want_param_grads: bool = False):
    """Reverse-mode pass from dL/dlogits; returns (dx, ParamGrads | None).

    dx is the exact derivative w.r.t. every input entry, (B, T, 49).
    """
    B, T = trace.x.shape[0], trace.x.shape[1]
    H = p.hidden
    sl_i, sl_f = p.gate_slice("i"), p.gate_slice("f")
    sl_g, sl_o = p.gate_slice("g"), p.gate_slice("o")

    dx = np.zeros_like(trace.x)
    g = None
    if want_param_grads:
        g = ParamGrads(
            W=np.zeros_like(p.W), U=np.zeros_like(p.U), b=np.zeros_like(p.b),
            ln_x_gain=np.zeros_like(p.ln_x.gain), ln_x_bias=np.zeros_like(p.ln_x.bias),
            ln_h_gain=np.zeros_like(p.ln_h.gain), ln_h_bias=np.zeros_like(p.ln_h.bias),
            ln_c_gain=np.zeros_like(p.ln_c.gain), ln_c_bias=np.zeros_like(p.ln_c.bias),
            W_head=np.zeros_like(p.W_head), b_head=np.zeros_like(p.b_head))

    dh = dlogits @ p.W_head
    if want_param_grads:
        g.W_head += dlogits.T @ trace.h[:, T - 1]
        g.b_head += dlogits.sum(axis=0)
    dc_carry = np.zeros((B, H))

    for t in range(T - 1, -1, -1):
        gates = trace.gates[:, t]
        i_g, f_g = gates[:, sl_i], gates[:, sl_f]
        g_g, o_g = gates[:, sl_g], gates[:, sl_o]
        tc = trace.tc[:, t]
        c_prev = trace.c[:, t - 1] if t > 0 else np.zeros((B, H))

        do = dh * tc
        dcn = dh * o_g * (1.0 - tc * tc)
        st_c = LayerNormStats(trace.ln_c.mean[:, t], trace.ln_c.std[:, t],
                              trace.ln_c.normalized[:, t])
        if want_param_grads and not trace.ln_bypass:
            g.ln_c_gain += np.einsum("bi,bi->i", dcn, st_c.normalized)
            g.ln_c_bias += dcn.sum(axis=0)
        dc_ln = dcn if trace.ln_bypass else _layer_norm_backward(dcn, st_c, p.ln_c)
        dc_total = dc_carry + dc_ln

        df = dc_total * c_prev
        dc_carry = dc_total * f_g
        di = dc_total * g_g
        dg = dc_total * i_g

        dpre = np.empty((B, 4 * H))
        dpre[:, sl_i] = di * i_g * (1.0 - i_g)
        dpre[:, sl_f] = df * f_g * (1.0 - f_g)
        dpre[:, sl_g] = dg * (1.0 - g_g * g_g)
        dpre[:, sl_o] = do * o_g * (1.0 - o_g)
        if want_param_grads:
            g.b += dpre.sum(axis=0)

        st_x = LayerNormStats(trace.ln_x.mean[:, t], trace.ln_x.std[:, t],
                              trace.ln_x.normalized[:, t])
        st_h = LayerNormStats(trace.ln_h.mean[:, t], trace.ln_h.std[:, t],
                              trace.ln_h.normalized[:, t])
        if want_param_grads and not trace.ln_bypass:
            g.ln_x_gain += np.einsum("bi,bi->i", dpre, st_x.normalized)
            g.ln_x_bias += dpre.sum(axis=0)
            g.ln_h_gain += np.einsum("bi,bi->i", dpre, st_h.normalized)
            g.ln_h_bias += dpre.sum(axis=0)
        if trace.ln_bypass:
            dzx, dzh = dpre, dpre
        else:
            dzx = _layer_norm_backward(dpre, st_x, p.ln_x)
            dzh = _layer_norm_backward(dpre, st_h, p.ln_h)

        dx[:, t] = dzx @ p.W
        if want_param_grads:
            g.W += dzx.T @ trace.x[:, t]
            h_prev = trace.h[:, t - 1] if t > 0 else np.zeros((B, H))
            g.U += dzh.T @ h_prev
        dh = dzh @ p.U

    return dx, g


def input_gradient_batch(x: np.ndarray, p: LnLstmParams,
                         classes: np.ndarray) -> np.ndarray:
    """d logit_c / d input for each instance; (B, 4, 49)."""
    trace = forward_batch(x, p)
    return gradient_from_trace(trace, p, classes)


def gradient_from_trace(trace: ActivationTrace, p: LnLstmParams,
                        classes: np.ndarray) -> np.ndarray:
    dlogits = np.zeros((trace.batch, N_CLASSES))
    dlogits[np.arange(trace.batch), np.asarray(classes, dtype=int)] = 1.0
    dx, _ = backward_batch(trace, p, dlogits)
    return dx


def input_gradient(window: ObservationWindow, p: LnLstmParams, class_c) -> np.ndarray:
    """Exact gradient of the pre-softmax logit of class_c; (4, 49)."""
    window.validate()
    c = CLASS_NAMES.index(class_c) if isinstance(class_c, str) else int(class_c)
    return input_gradient_batch(window.frames[None], p, np.array([c]))[0]


# ---------------------------------------------------------------------------
# Model container IO: magic "XLM1", JSON shape header, float64 LE tensors.

_MAGIC = b"XLM1"


def _tensor_list(p: LnLstmParams):
    return [
        ("W", p.W), ("U", p.U), ("b", p.b),
        ("ln_x.gain", p.ln_x.gain), ("ln_x.bias", p.ln_x.bias),
        ("ln_h.gain", p.ln_h.gain), ("ln_h.bias", p.ln_h.bias),
        ("ln_c.gain", p.ln_c.gain), ("ln_c.bias", p.ln_c.bias),
        ("W_head", p.W_head), ("b_head", p.b_head),
    ]


def save_model(p: LnLstmParams, path) -> None:
    tensors = _tensor_list(p)
    header = {
        "version": 1,
        "hidden": p.hidden,
        "input_dim": N_INPUT,
        "classes": list(CLASS_NAMES),
        "var_eps": {"ln_x": p.ln_x.var_eps, "ln_h": p.ln_h.var_eps,
                    "ln_c": p.ln_c.var_eps},
        "tensors": [{"name": n, "shape": list(a.shape)} for n, a in tensors],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for _, a in tensors:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_model(path) -> LnLstmParams:
    with open(path, "rb") as f:
        data = f.read()
    buf = io.BytesIO(data)
    if buf.read(4) != _MAGIC:
        raise ValidationError(f"{path} is not a model container (bad magic)")
    (hlen,) = struct.unpack("<I", buf.read(4))
    header = json.loads(buf.read(hlen).decode("utf-8"))
    if header.get("version") != 1:
        raise ValidationError(f"unsupported model version {header.get('version')}")
    arrays = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = buf.read(8 * count)
        if len(raw) != 8 * count:
            raise ValidationError("model container truncated")
        arrays[spec["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    eps = header.get("var_eps", {})
    return LnLstmParams(
        W=arrays["W"], U=arrays["U"], b=arrays["b"],
        ln_x=LayerNormParams(arrays["ln_x.gain"], arrays["ln_x.bias"],
                             eps.get("ln_x", 1e-5)),
        ln_h=LayerNormParams(arrays["ln_h.gain"], arrays["ln_h.bias"],
                             eps.get("ln_h", 1e-5)),
        ln_c=LayerNormParams(arrays["ln_c.gain"], arrays["ln_c.bias"],
                             eps.get("ln_c", 1e-5)),
        W_head=arrays["W_head"], b_head=arrays["b_head"])
