"""Toy diffusion language models with sentence-curve prediction.

Two noise processes are supported: Gaussian corruption of word embeddings
and discrete masking of tokens.  Either can run with the B-spline curve
mapping at the backbone boundary or with the identity mapping, which
recovers a conventional embedding-prediction model for controlled
comparisons.  The backbone is a small pre-norm transformer built on the
package's autodiff engine; everything runs on one CPU core.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamStore, Tape, Tensor, adam_step
from .corpus import Vocab
from .curvemap import BasisCache, SentenceCurve
from .errors import ConfigError, NonFinite, ShapeMismatch, StepOutOfRange
from .rng import RngStream

MODES = ("gaussian", "masked", "baseline-identity", "masked-identity")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step alpha and cumulative alpha-bar tables, indexed 0..T."""

    T: int
    alphas: np.ndarray
    alpha_bars: np.ndarray
    kind: str

    def masked_weight(self, t: int) -> float:
        """Loss weight for masked training at step t.

        T times the per-step factor (abar[t-1] - abar[t]) / (1 - abar[t]),
        i.e. the uniform-t Monte Carlo estimator of the summed objective;
        T/t for the linear schedule.  Scaled this way, an untrained model
        scores about log|V| per token, independent of T.
        """
        num = self.alpha_bars[t - 1] - self.alpha_bars[t]
        den = 1.0 - self.alpha_bars[t]
        return float(self.T * num / den)


def build_schedule(T: int, kind: str = "sqrt") -> NoiseSchedule:
    """Noise schedule over T steps; abar[0] = 1 (clean data).

    linear: abar[t] = 1 - t/T.  sqrt: abar[t] = 1 - sqrt(t/T + 1e-4),
    clamped to stay positive up to t = T.
    """
    if T < 1:
        raise ConfigError(f"schedule needs T >= 1, got {T}")
    t = np.arange(T + 1, dtype=np.float64)
    if kind == "linear":
        abar = 1.0 - t / T
    elif kind == "sqrt":
        abar = 1.0 - np.sqrt(t / T + 1e-4)
        abar[0] = 1.0
        abar = np.maximum(abar, 1e-12)
    else:
        raise ConfigError(f"unknown schedule kind {kind!r}")
    alphas = np.ones(T + 1)
    alphas[1:] = abar[1:] / abar[:-1]
    return NoiseSchedule(T=T, alphas=alphas, alpha_bars=abar, kind=kind)


def forward_noise_gaussian(E0: np.ndarray, t: int, schedule: NoiseSchedule, rng: RngStream) -> np.ndarray:
    """Sample E_t ~ N(sqrt(abar_t) E0, (1 - abar_t) I)."""
    if not 1 <= t <= schedule.T:
        raise StepOutOfRange(f"step {t} outside 1..{schedule.T}")
    abar = schedule.alpha_bars[t]
    eps = rng.normal(E0.shape)
    return np.sqrt(abar) * E0 + np.sqrt(1.0 - abar) * eps


def masked_forward(y0: np.ndarray, t: int, schedule: NoiseSchedule, rng: RngStream, mask_id: int) -> np.ndarray:
    """Independently replace each token with the mask id, prob 1 - abar_t."""
    if not 0 <= t <= schedule.T:
        raise StepOutOfRange(f"step {t} outside 0..{schedule.T}")
    p_mask = 1.0 - schedule.alpha_bars[t]
    hit = rng.uniform(y0.shape) < p_mask
    yt = np.array(y0, copy=True)
    yt[hit] = mask_id
    return yt


@dataclass(frozen=True)
class BackboneConfig:
    layers: int = 2
    heads: int = 2
    d_model: int = 64
    d_ff: int = 128
    dropout: float = 0.0
    max_positions: int = 1024
    time_dim: int = 16

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.time_dim % 2 != 0:
            raise ConfigError(f"time_dim must be even, got {self.time_dim}")


@dataclass
class EmbeddingTable:
    """Word embeddings; doubles as the logit matrix (shared parameters)."""

    weight: Tensor
    unit_norm: bool = True

    def project(self) -> None:
        """Renormalize columns to the unit sphere (idempotent)."""
        if self.unit_norm:
            norms = np.linalg.norm(self.weight.data, axis=0, keepdims=True)
            self.weight.data /= np.maximum(norms, 1e-12)


def _time_features(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    angles = t * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])[None, :]


@dataclass(frozen=True)
class KCurveHead:
    """Learnable curve tokens plus a shallow scorer over their outputs."""

    k: int


class SclmModel:
    """Diffusion LM with curve mappings at the backbone boundary.

    ``mode`` selects the noise process and whether the curve mapping is
    the cached B-spline pair or the identity: "gaussian", "masked",
    "baseline-identity" (Gaussian noise, B = I), "masked-identity".
    """

    def __init__(
        self,
        mode: str,
        vocab: Vocab,
        cache: BasisCache,
        schedule: NoiseSchedule,
        backbone: BackboneConfig = BackboneConfig(),
        embed_dim: int = 32,
        k_curves: int = 1,
        unit_norm: bool = True,
        lambda_anchor: float = 1.0,
        seed: int = 0,
        force_k_head: bool = False,
    ):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        self.mode = mode
        self.noise_kind = "masked" if mode.startswith("masked") else "gaussian"
        self.identity_b = mode in ("baseline-identity", "masked-identity")
        if self.identity_b and not cache.config.identity:
            raise ConfigError("identity modes need a cache built with identity=True")
        self.vocab = vocab
        self.cache = cache
        self.schedule = schedule
        self.backbone = backbone
        self.embed_dim = embed_dim
        self.k_curves = k_curves
        self.lambda_anchor = lambda_anchor
        self.seed = seed
        self.k_head = KCurveHead(k=k_curves) if (k_curves >= 2 or force_k_head) else None
        self.store = ParamStore()
        self._init_params(unit_norm)

    def _init_params(self, unit_norm: bool) -> None:
        init = RngStream(self.seed, "init")
        cfg = self.backbone
        d, dm, dff = self.embed_dim, cfg.d_model, cfg.d_ff

        def make(name, shape, std=0.02):
            return self.store.add(name, init.child(name).normal(shape) * std)

        emb = make("emb", (d, self.vocab.size), std=1.0)
        self.embedding = EmbeddingTable(weight=emb, unit_norm=unit_norm)
        self.embedding.project()

        make("in_w", (d, dm))
        make("in_b", (dm,), std=0.0)
        make("pos", (cfg.max_positions, dm))
        make("time_w", (cfg.time_dim, dm))
        make("time_b", (dm,), std=0.0)
        for i in range(cfg.layers):
            make(f"l{i}.ln1_g", (dm,), std=0.0)
            self.store[f"l{i}.ln1_g"].data += 1.0
            make(f"l{i}.ln1_b", (dm,), std=0.0)
            for proj in ("q", "k", "v", "o"):
                make(f"l{i}.w{proj}", (dm, dm))
                make(f"l{i}.b{proj}", (dm,), std=0.0)
            make(f"l{i}.ln2_g", (dm,), std=0.0)
            self.store[f"l{i}.ln2_g"].data += 1.0
            make(f"l{i}.ln2_b", (dm,), std=0.0)
            make(f"l{i}.ff_w1", (dm, dff))
            make(f"l{i}.ff_b1", (dff,), std=0.0)
            make(f"l{i}.ff_w2", (dff, dm))
            make(f"l{i}.ff_b2", (dm,), std=0.0)
        make("lnf_g", (dm,), std=0.0)
        self.store["lnf_g"].data += 1.0
        make("lnf_b", (dm,), std=0.0)
        make("out_w", (dm, d))
        make("out_b", (d,), std=0.0)
        if self.k_head is not None:
            make("ktok", (self.k_head.k, dm))
            make("score_w1", (dm, dm))
            make("score_b1", (dm,), std=0.0)
            make("score_w2", (dm, 1))
            make("score_b2", (1,), std=0.0)

    # ---------------------------------------------------------------- pairs

    def pair_for(self, length: int):
        return self.cache.get(length)

    def _b_tensors(self, length: int) -> tuple[Tensor, Tensor]:
        pair = self.pair_for(length)
        return Tensor(pair.B), Tensor(pair.B_pinv)

    # ------------------------------------------------------------- backbone

    def _blocks(self, h: Tensor, rng: RngStream | None) -> Tensor:
        cfg = self.backbone
        p = self.store
        dm = cfg.d_model
        dh = dm // cfg.heads
        inv_sqrt = 1.0 / np.sqrt(dh)
        for i in range(cfg.layers):
            hn = ad.layer_norm(h, p[f"l{i}.ln1_g"], p[f"l{i}.ln1_b"])
            q = ad.matmul(hn, p[f"l{i}.wq"]) + p[f"l{i}.bq"]
            k = ad.matmul(hn, p[f"l{i}.wk"]) + p[f"l{i}.bk"]
            v = ad.matmul(hn, p[f"l{i}.wv"]) + p[f"l{i}.bv"]
            head_outs = []
            for hd in range(cfg.heads):
                cols = (slice(None), slice(hd * dh, (hd + 1) * dh))
                qh, kh, vh = ad.slice_(q, cols), ad.slice_(k, cols), ad.slice_(v, cols)
                att = ad.softmax(ad.scale(ad.matmul(qh, kh.T), inv_sqrt), axis=-1)
                if cfg.dropout > 0 and rng is not None:
                    att = ad.dropout(att, cfg.dropout, rng.child("att", i, hd).generator())
                head_outs.append(ad.matmul(att, vh))
            ctx = head_outs[0] if len(head_outs) == 1 else ad.concat(head_outs, axis=1)
            h = h + (ad.matmul(ctx, p[f"l{i}.wo"]) + p[f"l{i}.bo"])
            hn2 = ad.layer_norm(h, p[f"l{i}.ln2_g"], p[f"l{i}.ln2_b"])
            ff = ad.gelu(ad.matmul(hn2, p[f"l{i}.ff_w1"]) + p[f"l{i}.ff_b1"])
            if cfg.dropout > 0 and rng is not None:
                ff = ad.dropout(ff, cfg.dropout, rng.child("ff", i).generator())
            h = h + (ad.matmul(ff, p[f"l{i}.ff_w2"]) + p[f"l{i}.ff_b2"])
        return ad.layer_norm(h, p["lnf_g"], p["lnf_b"])

    def _embed_tokens(self, points: Tensor, t: int, rng: RngStream | None, curve_token: int | None) -> Tensor:
        """Project (d, n_tokens) inputs into model space, add position/time."""
        p = self.store
        n_tokens = points.shape[1]
        if n_tokens > self.backbone.max_positions:
            raise ShapeMismatch(f"{n_tokens} tokens exceed max_positions {self.backbone.max_positions}")
        x = ad.matmul(points.T, p["in_w"]) + p["in_b"]
        x = x + ad.slice_(p["pos"], (slice(0, n_tokens), slice(None)))
        tvec = ad.matmul(Tensor(_time_features(t, self.backbone.time_dim)), p["time_w"]) + p["time_b"]
        x = x + tvec
        if curve_token is not None:
            tok = ad.slice_(p["ktok"], (slice(curve_token, curve_token + 1), slice(None))) + tvec
            x = ad.concat([tok, x], axis=0)
        return x

    def backbone_hidden(self, points: Tensor, t: int, rng: RngStream | None = None, curve_token: int | None = None) -> Tensor:
        """Final hidden state (n_tokens, d_model) for curve input (d, n_tokens)."""
        x = self._embed_tokens(points, t, rng, curve_token)
        return self._blocks(x, rng)

    def hidden_to_points(self, hidden: Tensor) -> Tensor:
        """Project hidden states back to (d, n_tokens) prediction space."""
        return (ad.matmul(hidden, self.store["out_w"]) + self.store["out_b"]).T

    def logits_from_clean(self, e_hat: Tensor) -> Tensor:
        """Logit matrix (|V|, L) from a denoised embedding sequence (d, L)."""
        return ad.matmul(self.embedding.weight.T, e_hat)

    # ------------------------------------------------------------ prediction

    def _predict_single(self, points: Tensor, t: int, length: int, rng: RngStream | None, trace: dict | None = None) -> tuple[Tensor, Tensor]:
        """One backbone pass: (E_hat0 (d, L), P_hat0 (d, N))."""
        B, _ = self._b_tensors(length)
        hidden = self.backbone_hidden(points, t, rng)
        p_hat = self.hidden_to_points(hidden)
        e_hat = ad.matmul(p_hat, B) if not self.identity_b else p_hat
        if trace is not None:
            trace["hidden"] = hidden
            trace["p_hat"] = p_hat
        return e_hat, p_hat

    def k_curve_forward(self, points: Tensor, t: int, rng: RngStream | None = None) -> tuple[list[Tensor], Tensor]:
        """K candidate curves (each (d, N)) and their selection probabilities."""
        if self.k_head is None:
            raise ConfigError("model has no K-curve head attached")
        logits = []
        curves = []
        for k in range(self.k_head.k):
            hidden = self.backbone_hidden(points, t, rng, curve_token=k)
            head_vec = ad.slice_(hidden, (slice(0, 1), slice(None)))
            body = ad.slice_(hidden, (slice(1, hidden.shape[0]), slice(None)))
            curves.append(self.hidden_to_points(body))
            s1 = ad.gelu(ad.matmul(head_vec, self.store["score_w1"]) + self.store["score_b1"])
            logits.append(ad.matmul(s1, self.store["score_w2"]) + self.store["score_b2"])
        flat = ad.concat(logits, axis=0)
        probs = ad.softmax(flat, axis=0)
        return curves, probs

    def predict_clean(self, points: Tensor, t: int, length: int, rng: RngStream | None = None, combine: str = "infer", trace: dict | None = None) -> tuple[Tensor, Tensor]:
        """Denoised (E_hat0, P_hat0), through the K-curve head when attached."""
        if self.k_head is None:
            return self._predict_single(points, t, length, rng, trace)
        curves, probs = self.k_curve_forward(points, t, rng)
        p_hat = combine_curves(curves, probs, combine)
        B, _ = self._b_tensors(length)
        e_hat = ad.matmul(p_hat, B) if not self.identity_b else p_hat
        if trace is not None:
            trace["p_hat"] = p_hat
            trace["probs"] = probs
        return e_hat, p_hat


def combine_curves(curves: list[Tensor], probs: Tensor, mode: str) -> Tensor:
    """Probability-weighted sum (train) or argmax selection (infer).

    Argmax ties resolve to the lowest index.
    """
    k = len(curves)
    if probs.shape not in ((k, 1), (k,)):
        raise ShapeMismatch(f"probs shape {probs.shape} does not match {k} curves")
    if mode == "train":
        out = None
        for i, curve in enumerate(curves):
            key = (slice(i, i + 1),) if probs.data.ndim == 1 else (slice(i, i + 1), slice(0, 1))
            term = ad.mul(curve, ad.slice_(probs, key))
            out = term if out is None else out + term
        return out
    if mode == "infer":
        return curves[int(np.argmax(probs.data))]
    raise ConfigError(f"combine mode must be 'train' or 'infer', got {mode!r}")


def denoise_predict(model: SclmModel, curve: SentenceCurve, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Single-pass denoising prediction on plain arrays (no tape)."""
    e_hat, p_hat = model._predict_single(Tensor(curve.points), t, curve.length_l, rng=None)
    return e_hat.data, p_hat.data


# ------------------------------------------------------------------- losses


def gaussian_loss(model: SclmModel, batch: list[np.ndarray], rng: RngStream, trace: dict | None = None) -> tuple[Tensor, dict]:
    """Diffusion MSE plus anchor cross-entropy, averaged over the batch."""
    if model.noise_kind != "gaussian":
        raise ConfigError("gaussian_loss requires a gaussian-noise model")
    if not batch:
        raise ConfigError("empty batch")
    diffusion_total = None
    anchor_total = None
    for i, tokens in enumerate(batch):
        length = len(tokens)
        _, B_pinv = model._b_tensors(length)
        t = int(rng.child("t", i).integers(1, model.schedule.T + 1))
        e0 = ad.embedding_lookup(model.embedding.weight, tokens)
        abar = model.schedule.alpha_bars[t]
        eps = rng.child("noise", i).normal((model.embed_dim, length))
        et = ad.scale(e0, np.sqrt(abar)) + Tensor(np.sqrt(1.0 - abar) * eps)
        pt = ad.matmul(et, B_pinv) if not model.identity_b else et
        seq_trace = {} if trace is not None else None
        e_hat, _ = model.predict_clean(pt, t, length, rng.child("drop", i), combine="train", trace=seq_trace)
        diffusion = ad.mse_loss(e_hat, e0)
        logits = model.logits_from_clean(e_hat)
        anchor = ad.cross_entropy_loss(logits.T, tokens)
        diffusion_total = diffusion if diffusion_total is None else diffusion_total + diffusion
        anchor_total = anchor if anchor_total is None else anchor_total + anchor
        if trace is not None:
            seq_trace.update({"t": t, "e0": e0, "e_hat": e_hat, "logits": logits})
            trace.setdefault("sequences", []).append(seq_trace)
    inv = 1.0 / len(batch)
    diffusion_total = ad.scale(diffusion_total, inv)
    anchor_total = ad.scale(anchor_total, inv)
    total = diffusion_total + ad.scale(anchor_total, model.lambda_anchor)
    record = {
        "diffusion": float(diffusion_total.data),
        "anchor": float(anchor_total.data),
        "total": float(total.data),
    }
    return total, record


def masked_loss(model: SclmModel, batch: list[np.ndarray], rng: RngStream, trace: dict | None = None) -> tuple[Tensor, dict]:
    """Noise-weighted cross-entropy on masked positions, per-token scale."""
    if model.noise_kind != "masked":
        raise ConfigError("masked_loss requires a masked-noise model")
    if not batch:
        raise ConfigError("empty batch")
    total = None
    for i, tokens in enumerate(batch):
        length = len(tokens)
        t = int(rng.child("t", i).integers(1, model.schedule.T + 1))
        yt = masked_forward(tokens, t, model.schedule, rng.child("mask", i), model.vocab.mask_id)
        masked_idx = np.flatnonzero((yt == model.vocab.mask_id) & (tokens != model.vocab.mask_id))
        if masked_idx.size == 0:
            continue
        _, B_pinv = model._b_tensors(length)
        et = ad.embedding_lookup(model.embedding.weight, yt)
        pt = ad.matmul(et, B_pinv) if not model.identity_b else et
        seq_trace = {} if trace is not None else None
        e_hat, _ = model.predict_clean(pt, t, length, rng.child("drop", i), combine="train", trace=seq_trace)
        logits = model.logits_from_clean(e_hat)
        rows = ad.embedding_lookup(logits, masked_idx).T
        ce = ad.cross_entropy_loss(rows, tokens[masked_idx])
        weight = model.schedule.masked_weight(t) * masked_idx.size / length
        term = ad.scale(ce, weight)
        total = term if total is None else total + term
        if trace is not None:
            seq_trace.update({"t": t, "yt": yt, "masked_idx": masked_idx, "logits": logits})
            trace.setdefault("sequences", []).append(seq_trace)
    if total is None:
        total = Tensor(np.zeros(()))
    else:
        total = ad.scale(total, 1.0 / len(batch))
    return total, {"loss": float(total.data)}


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def train_step(model: SclmModel, batch: list[np.ndarray], optimizer: AdamConfig, step: int) -> dict:
    """One forward/backward/Adam update; returns the loss record."""
    rng = RngStream(model.seed, "train", step)
    with Tape() as tape:
        if model.noise_kind == "gaussian":
            loss, record = gaussian_loss(model, batch, rng)
        else:
            loss, record = masked_loss(model, batch, rng)
        if not np.isfinite(loss.data):
            raise NonFinite(f"non-finite loss at step {step}")
        tape.backward(loss)
    adam_step(model.store, optimizer.lr, optimizer.beta1, optimizer.beta2, optimizer.eps)
    model.embedding.project()
    record["step"] = step
    return record


# ------------------------------------------------------------------ sampling


def _reverse_steps(T: int, n_steps: int) -> list[int]:
    if not 1 <= n_steps <= T:
        raise StepOutOfRange(f"need 1 <= n_reverse_steps <= T, got {n_steps} with T={T}")
    if n_steps == 1:
        return [T]
    return [T - (i * (T - 1)) // (n_steps - 1) for i in range(n_steps)]


def sample(model: SclmModel, length: int, n_reverse_steps: int, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Generate one sequence from pure noise (or all masks).

    Returns (token ids (L,), trajectory of denoised embeddings, one (d, L)
    array per reverse step).
    """
    if model.noise_kind == "masked":
        return _sample_masked(model, length, n_reverse_steps, seed)
    return _sample_gaussian(model, length, n_reverse_steps, seed)


def _sample_gaussian(model: SclmModel, length: int, n_steps: int, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
    rng = RngStream(seed, "sample")
    steps = _reverse_steps(model.schedule.T, n_steps)
    pair = model.pair_for(length)
    e_t = rng.child("start").normal((model.embed_dim, length))
    trajectory = []
    e_hat_data = None
    for idx, t in enumerate(steps):
        points = Tensor(e_t @ pair.B_pinv) if not model.identity_b else Tensor(e_t)
        e_hat, _ = model.predict_clean(points, t, length, rng=None, combine="infer")
        e_hat_data = e_hat.data
        trajectory.append(e_hat_data.copy())
        if idx + 1 < len(steps):
            t_next = steps[idx + 1]
            abar = model.schedule.alpha_bars[t_next]
            eps = rng.child("renoise", idx).normal(e_t.shape)
            e_t = np.sqrt(abar) * e_hat_data + np.sqrt(1.0 - abar) * eps
        else:
            e_t = e_hat_data
    logits = model.embedding.weight.data.T @ e_t
    tokens = np.argmax(logits, axis=0).astype(np.int64)
    return tokens, trajectory


def _sample_masked(model: SclmModel, length: int, n_steps: int, seed: int) -> tuple[np.ndarray, list[np.ndarray]]:
    rng = RngStream(seed, "sample")
    steps = _reverse_steps(model.schedule.T, n_steps)
    mask_id = model.vocab.mask_id
    y = np.full(length, mask_id, dtype=np.int64)
    trajectory = []
    for idx, t in enumerate(steps):
        et = ad.embedding_lookup(model.embedding.weight, y)
        points = ad.matmul(et, Tensor(model.pair_for(length).B_pinv)) if not model.identity_b else et
        e_hat, _ = model.predict_clean(points, t, length, rng=None, combine="infer")
        trajectory.append(e_hat.data.copy())
        logits = model.embedding.weight.data.T @ e_hat.data
        y_hat = np.argmax(logits, axis=0).astype(np.int64)
        still_masked = y == mask_id
        if idx + 1 < len(steps):
            t_next = steps[idx + 1]
            abar_t = model.schedule.alpha_bars[t]
            abar_next = model.schedule.alpha_bars[t_next]
            p_unmask = (abar_next - abar_t) / max(1.0 - abar_t, 1e-12)
            reveal = rng.child("reveal", idx).uniform(y.shape) < p_unmask
            take = still_masked & reveal
        else:
            take = still_masked
        y[take] = y_hat[take]
    return y, trajectory
