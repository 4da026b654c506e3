"""Conditional neural Bernoulli-mixture model: a temperature-softmax gating
network mixing Bernoulli experts whose logits combine an MLP trunk, shared
low-rank factor pairs with per-sample weights, and a linear residual path.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MAGIC_CNB = b"CNB1"
CNB_VERSION = 1
_LN2 = float(np.log(2.0))


@dataclass(frozen=True)
class CnbmmConfig:
    """Architecture hyperparameters; defaults are the desk-scale shape."""

    n_in: int
    k_out: int
    num_experts: int = 2
    gating_hidden: tuple[int, ...] = (64, 32, 12)
    expert_hidden: tuple[int, ...] = (256, 128, 256, 64)
    rank: int | None = None  # default 2 * n_in
    temperature: float = 10.0
    lambda_div: float = 0.01
    lambda_int: float = 1e-6

    def __post_init__(self):
        if self.num_experts < 1 or self.temperature <= 0:
            raise ValueError("need num_experts >= 1 and temperature > 0")
        if self.lambda_div < 0 or self.lambda_int < 0:
            raise ValueError("regularizer weights must be >= 0")
        if self.rank is None:
            object.__setattr__(self, "rank", 2 * self.n_in)
        if self.rank < 0:
            raise ValueError("rank must be >= 0")


def paper_scale_config(n_in: int, k_out: int) -> CnbmmConfig:
    """The full-scale widths, available behind a flag for large runs."""
    return CnbmmConfig(n_in=n_in, k_out=k_out, num_experts=2,
                       gating_hidden=(512, 256, 12),
                       expert_hidden=(2048, 512, 2048, 1024, 512, 128))


class Mlp:
    """Affine -> layer-norm -> ReLU stack with residual links between
    consecutive equal-width hidden layers."""

    def __init__(self, name: str, d_in: int, hidden: tuple[int, ...],
                 rng: np.random.Generator):
        self.name = name
        self.layers = []
        prev = d_in
        for i, width in enumerate(hidden):
            w = ad.param(rng.normal(0, np.sqrt(2.0 / prev), (prev, width)).astype(np.float32),
                         f"{name}/w{i}")
            b = ad.param(np.zeros(width, np.float32), f"{name}/b{i}")
            gamma = ad.param(np.ones(width, np.float32), f"{name}/gamma{i}")
            beta = ad.param(np.zeros(width, np.float32), f"{name}/beta{i}")
            self.layers.append((w, b, gamma, beta))
            prev = width
        self.d_out = prev

    def parameters(self):
        for w, b, gamma, beta in self.layers:
            yield from (w, b, gamma, beta)

    def forward(self, x: Tensor) -> Tensor:
        h = x
        prev_width = None
        for w, b, gamma, beta in self.layers:
            out = ad.relu(ad.layer_norm(ad.affine(h, w, b), gamma, beta))
            if prev_width is not None and out.shape[-1] == h.shape[-1]:
                out = ad.add(out, h)
            h = out
            prev_width = out.shape[-1]
        return h


def _head(name: str, d_in: int, d_out: int, rng: np.random.Generator,
          std: float | None = None) -> tuple[Tensor, Tensor]:
    std = std if std is not None else 1.0 / np.sqrt(d_in)
    w = ad.param(rng.normal(0, std, (d_in, d_out)).astype(np.float32), f"{name}/w")
    b = ad.param(np.zeros(d_out, np.float32), f"{name}/b")
    return w, b


class CnbmmModel:
    """Gating network + experts + shared factors; all parameters named."""

    def __init__(self, cfg: CnbmmConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.gating = Mlp("gate", cfg.n_in, cfg.gating_hidden, rng)
        self.gate_out = _head("gate/out", self.gating.d_out, cfg.num_experts, rng)
        self.experts = []
        for e in range(cfg.num_experts):
            trunk = Mlp(f"expert{e}", cfg.n_in, cfg.expert_hidden, rng)
            f_out = _head(f"expert{e}/f_out", trunk.d_out, cfg.k_out, rng)
            w_head = (_head(f"expert{e}/w_head", trunk.d_out, cfg.rank, rng)
                      if cfg.rank > 0 else None)
            resid = _head(f"expert{e}/resid", cfg.n_in, cfg.k_out, rng)
            self.experts.append({"trunk": trunk, "f_out": f_out,
                                 "w_head": w_head, "resid": resid})
        if cfg.rank > 0:
            self.u = ad.param(rng.normal(0, 0.01, (cfg.rank, cfg.k_out)).astype(np.float32), "factors/u")
            self.v = ad.param(rng.normal(0, 0.01, (cfg.rank, cfg.k_out)).astype(np.float32), "factors/v")
        else:
            self.u = self.v = None

    def parameters(self) -> list[Tensor]:
        out = list(self.gating.parameters()) + list(self.gate_out)
        for e in self.experts:
            out += list(e["trunk"].parameters())
            out += list(e["f_out"])
            if e["w_head"] is not None:
                out += list(e["w_head"])
            out += list(e["resid"])
        if self.u is not None:
            out += [self.u, self.v]
        return out

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(p.name, p) for p in self.parameters()]

    def forward(self, z: np.ndarray) -> dict:
        """Returns gate weights pi (batch, M), per-expert logit tensors and
        Bernoulli probability tensors."""
        z = np.asarray(z, dtype=np.float32)
        x = ad.constant(z)
        gh = self.gating.forward(x)
        gate_logits = ad.affine(gh, *self.gate_out)
        pi = ad.softmax_t(gate_logits, self.cfg.temperature, axis=1)
        logits = []
        probs = []
        for e in self.experts:
            h = e["trunk"].forward(x)
            ell = ad.affine(h, *e["f_out"])
            if e["w_head"] is not None:
                w = ad.affine(h, *e["w_head"])  # (batch, R)
                factors = ad.mul(self.u, self.v)  # (R, k)
                ell = ad.add(ell, ad.matmul(w, factors))
            ell = ad.add(ell, ad.affine(x, *e["resid"]))
            logits.append(ell)
            probs.append(ad.sigmoid(ell))
        return {"pi": pi, "logits": logits, "probs": probs}

    def log_prob_nats(self, fwd: dict, m_bits: np.ndarray) -> Tensor:
        """ln q(m | z) per sample; mixes experts via logsumexp and never
        forms linear-domain probabilities."""
        m = np.asarray(m_bits, dtype=np.float32)
        per_expert = []
        for ell in fwd["logits"]:
            pos = ad.mul(ad.constant(m), ad.log_sigmoid(ell))
            negt = ad.mul(ad.constant(1.0 - m), ad.log_sigmoid(ad.neg(ell)))
            per_expert.append(ad.reduce_sum(ad.add(pos, negt), axis=1))
        log_pi = ad.log(ad.add(fwd["pi"], 1e-30))
        stacked = ad.concat_cols([ad.add(select_colwise(log_pi, j), per_expert[j])
                                  for j in range(len(per_expert))])
        return ad.log_sum_exp(stacked, axis=1)

    def log_prob2(self, z: np.ndarray, m_bits: np.ndarray) -> np.ndarray:
        """log2 q(m | z) values (no gradients retained by the caller)."""
        fwd = self.forward(z)
        return self.log_prob_nats(fwd, m_bits).value / _LN2

    def loss(self, z: np.ndarray, m_bits: np.ndarray) -> Tensor:
        """NLL + expert-diversity cosine penalty + factor L2 penalty."""
        cfg = self.cfg
        fwd = self.forward(z)
        nll = ad.neg(ad.reduce_mean(self.log_prob_nats(fwd, m_bits)))
        total = nll
        if cfg.lambda_div > 0 and cfg.num_experts > 1:
            div_terms = []
            for s in range(cfg.num_experts):
                for t in range(s + 1, cfg.num_experts):
                    ps, pt = fwd["probs"][s], fwd["probs"][t]
                    dot = ad.reduce_sum(ad.mul(ps, pt), axis=1)
                    ns = ad.sqrt(ad.reduce_sum(ad.square(ps), axis=1), eps=1e-12)
                    nt = ad.sqrt(ad.reduce_sum(ad.square(pt), axis=1), eps=1e-12)
                    cos = ad.mul(dot, ad.exp(ad.neg(ad.add(ad.log(ns), ad.log(nt)))))
                    div_terms.append(ad.reduce_mean(cos))
            div = div_terms[0]
            for term in div_terms[1:]:
                div = ad.add(div, term)
            total = ad.add(total, ad.scale(div, cfg.lambda_div))
        if cfg.lambda_int > 0 and self.u is not None:
            reg = ad.add(
                ad.reduce_sum(ad.sqrt(ad.reduce_sum(ad.square(self.u), axis=1), eps=1e-12)),
                ad.reduce_sum(ad.sqrt(ad.reduce_sum(ad.square(self.v), axis=1), eps=1e-12)))
            total = ad.add(total, ad.scale(reg, cfg.lambda_int))
        return total


def select_colwise(t: Tensor, j: int) -> Tensor:
    return ad.select_col(t, j)


def to_model_input(z: np.ndarray, soft: bool) -> np.ndarray:
    """Hard bits map to +-1 symbols (bit 0 -> +1); soft samples pass through."""
    if soft:
        return np.asarray(z, dtype=np.float32)
    return (1.0 - 2.0 * np.asarray(z, dtype=np.float32)).astype(np.float32)


# ---------------------------------------------------------------------------
# checkpoint format

def _pack_block(name: str, arr: np.ndarray) -> bytes:
    nb = name.encode()
    head = struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def save_checkpoint(model: CnbmmModel, ema_shadow: list[np.ndarray] | None = None) -> bytes:
    cfg = model.cfg
    gh = cfg.gating_hidden
    eh = cfg.expert_hidden
    head = MAGIC_CNB + struct.pack(
        "<IIIIIdddII", CNB_VERSION, cfg.n_in, cfg.k_out, cfg.num_experts,
        cfg.rank, cfg.temperature, cfg.lambda_div, cfg.lambda_int,
        len(gh), len(eh))
    head += struct.pack(f"<{len(gh)}I", *gh) + struct.pack(f"<{len(eh)}I", *eh)
    parts = [head]
    params = model.named_parameters()
    parts.append(struct.pack("<I", len(params) * (2 if ema_shadow else 1)))
    for name, p in params:
        parts.append(_pack_block("param/" + name, p.value))
    if ema_shadow is not None:
        for (name, _), shadow in zip(params, ema_shadow):
            parts.append(_pack_block("ema/" + name, shadow))
    return b"".join(parts)


def load_checkpoint(blob: bytes) -> tuple[CnbmmModel, list[np.ndarray] | None]:
    if blob[:4] != MAGIC_CNB:
        raise ValueError("bad magic; not a CNB1 checkpoint")
    (version, n_in, k_out, m_experts, rank, tau, ldiv, lint,
     n_gh, n_eh) = struct.unpack("<IIIIIdddII", blob[4:56])
    if version != CNB_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off = 56
    gh = struct.unpack(f"<{n_gh}I", blob[off:off + 4 * n_gh]); off += 4 * n_gh
    eh = struct.unpack(f"<{n_eh}I", blob[off:off + 4 * n_eh]); off += 4 * n_eh
    cfg = CnbmmConfig(n_in=n_in, k_out=k_out, num_experts=m_experts,
                      gating_hidden=gh, expert_hidden=eh, rank=rank,
                      temperature=tau, lambda_div=ldiv, lambda_int=lint)
    model = CnbmmModel(cfg, np.random.default_rng(0))
    n_blocks, = struct.unpack("<I", blob[off:off + 4]); off += 4
    blocks = {}
    for _ in range(n_blocks):
        nlen, = struct.unpack("<H", blob[off:off + 2]); off += 2
        name = blob[off:off + nlen].decode(); off += nlen
        ndim, = struct.unpack("<B", blob[off:off + 1]); off += 1
        shape = struct.unpack(f"<{ndim}I", blob[off:off + 4 * ndim]); off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob[off:off + 4 * size], dtype="<f4").reshape(shape).copy()
        off += 4 * size
        blocks[name] = arr
    ema = []
    for name, p in model.named_parameters():
        p.value = blocks["param/" + name]
        if "ema/" + name in blocks:
            ema.append(blocks["ema/" + name])
    return model, (ema if ema else None)
