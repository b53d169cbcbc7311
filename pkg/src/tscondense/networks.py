"""Catalog of small time-series classifiers used as random embedding functions.

Five families, eleven catalog entries:

* ``ms-tcn``: two stacks of parallel causal-convolution branches (one
  branch per kernel size, ReLU, channel concatenation), mean-pooled over
  time, linear head.
* ``trsf``: residual multi-head self-attention layers applied directly
  to the feature dimension (no input projection, no positional
  embedding, no normalization), mean-pooled over time, two-layer MLP head.
* ``vit``: same attention stack with a learnable class token prepended;
  the token's output is the sequence summary fed to the MLP head.
* ``lstm`` / ``rnn``: a single recurrent layer read in temporal order
  from a zero initial state; the final hidden state feeds a linear head.

Every entry accepts input of arbitrary temporal length and produces an
embedding whose width depends only on the architecture. All weights are
drawn from a fan-in-scaled uniform distribution, biases start at zero,
and nothing is ever pre-trained: a fresh seed gives a fresh random
encoder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .optim import ParamSet
from .tensor import ShapeError, Tensor

FAMILIES = ("ms-tcn", "trsf", "vit", "lstm", "rnn", "mean-pool")


@dataclass(frozen=True)
class ArchSpec:
    """Declarative description of one architecture."""

    name: str
    family: str
    in_features: int
    out_features: int = 1
    # ms-tcn
    kernel_sizes: tuple[int, ...] = ()
    branch_width: int = 0
    conv_layers: int = 0
    # trsf / vit
    msa_layers: int = 0
    heads: int = 0
    head_channels: int = 0
    mlp_hidden: int = 0
    # lstm / rnn
    hidden_units: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown architecture family {self.family!r}")

    @property
    def embedding_width(self) -> int:
        if self.family == "ms-tcn":
            return self.branch_width * len(self.kernel_sizes)
        if self.family in ("trsf", "vit", "mean-pool"):
            return self.in_features
        return self.hidden_units

    @property
    def max_kernel_size(self) -> int:
        return max(self.kernel_sizes, default=1)


def catalog(in_features: int) -> dict[str, ArchSpec]:
    """The eleven catalog architectures, keyed by name."""
    tcn = lambda name, ks: ArchSpec(name, "ms-tcn", in_features, kernel_sizes=ks,
                                    branch_width=64, conv_layers=2)
    attn = lambda name, fam, layers, heads, ch, mlp: ArchSpec(
        name, fam, in_features, msa_layers=layers, heads=heads,
        head_channels=ch, mlp_hidden=mlp)
    rec = lambda name, fam, units: ArchSpec(name, fam, in_features, hidden_units=units)
    specs = [
        tcn("tcn-alpha", (3, 5, 7)),
        tcn("tcn-beta", (3,)),
        tcn("tcn-gamma", (3, 5)),
        attn("trsf-alpha", "trsf", 2, 16, 64, 64),
        attn("trsf-beta", "trsf", 2, 4, 256, 128),
        attn("vit-alpha", "vit", 4, 16, 64, 64),
        attn("vit-beta", "vit", 4, 4, 128, 128),
        rec("lstm-alpha", "lstm", 256),
        rec("lstm-beta", "lstm", 128),
        rec("rnn-alpha", "rnn", 256),
        rec("rnn-beta", "rnn", 128),
    ]
    return {s.name: s for s in specs}


def mean_pool_spec(in_features: int) -> ArchSpec:
    """Parameter-free embedding (mean over time); linear head only."""
    return ArchSpec("mean-pool", "mean-pool", in_features)


def resolve_spec(name: str, in_features: int) -> ArchSpec:
    if name == "mean-pool":
        return mean_pool_spec(in_features)
    entries = catalog(in_features)
    if name not in entries:
        raise ValueError(f"unknown architecture {name!r}; known: {sorted(entries) + ['mean-pool']}")
    return entries[name]


@dataclass(frozen=True)
class NetworkCollection:
    """Ordered set of architectures sampled uniformly during condensation."""

    specs: tuple[ArchSpec, ...]

    def __post_init__(self):
        if not self.specs:
            raise ValueError("network collection must be non-empty")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    @property
    def max_kernel_size(self) -> int:
        return max(s.max_kernel_size for s in self.specs)

    @classmethod
    def from_names(cls, names, in_features: int) -> "NetworkCollection":
        return cls(tuple(resolve_spec(n, in_features) for n in names))


DEFAULT_COLLECTION = ("tcn-alpha", "vit-alpha", "lstm-alpha")


# -- parameter layout and sampling ---------------------------------------------


RELU_GAIN_SQ = 2.0  # weights feeding a ReLU
LINEAR_GAIN_SQ = 1.0  # attention, recurrent, output-head and token weights


def param_layout(spec: ArchSpec):
    """Yield (name, shape, fan_in, gain_sq) in a fixed order.

    fan_in None marks zero-initialized biases; the target variance of a
    weight is gain_sq / fan_in.
    """
    f = spec.in_features
    if spec.family == "ms-tcn":
        c_in = f
        for layer in range(spec.conv_layers):
            for k in spec.kernel_sizes:
                yield f"embed.layer{layer}.k{k}.weight", (k, c_in, spec.branch_width), k * c_in, RELU_GAIN_SQ
                yield f"embed.layer{layer}.k{k}.bias", (spec.branch_width,), None, None
            c_in = spec.branch_width * len(spec.kernel_sizes)
        yield "head.weight", (spec.embedding_width, spec.out_features), spec.embedding_width, LINEAR_GAIN_SQ
        yield "head.bias", (spec.out_features,), None, None
    elif spec.family in ("trsf", "vit"):
        width = spec.heads * spec.head_channels
        if spec.family == "vit":
            yield "embed.class_token", (f,), f, LINEAR_GAIN_SQ
        for layer in range(spec.msa_layers):
            yield f"embed.layer{layer}.qkv_weight", (f, 3 * width), f, LINEAR_GAIN_SQ
            yield f"embed.layer{layer}.qkv_bias", (3 * width,), None, None
            yield f"embed.layer{layer}.out_weight", (width, f), width, LINEAR_GAIN_SQ
            yield f"embed.layer{layer}.out_bias", (f,), None, None
        yield "head.fc1.weight", (f, spec.mlp_hidden), f, RELU_GAIN_SQ
        yield "head.fc1.bias", (spec.mlp_hidden,), None, None
        yield "head.fc2.weight", (spec.mlp_hidden, spec.out_features), spec.mlp_hidden, LINEAR_GAIN_SQ
        yield "head.fc2.bias", (spec.out_features,), None, None
    elif spec.family in ("lstm", "rnn"):
        h = spec.hidden_units
        gates = 4 * h if spec.family == "lstm" else h
        yield "embed.input_weight", (f, gates), f, LINEAR_GAIN_SQ
        yield "embed.recurrent_weight", (h, gates), h, LINEAR_GAIN_SQ
        yield "embed.bias", (gates,), None, None
        yield "head.weight", (h, spec.out_features), h, LINEAR_GAIN_SQ
        yield "head.bias", (spec.out_features,), None, None
    elif spec.family == "mean-pool":
        yield "head.weight", (f, spec.out_features), f, LINEAR_GAIN_SQ
        yield "head.bias", (spec.out_features,), None, None


def fan_in_bound(fan_in: int, gain_sq: float = LINEAR_GAIN_SQ) -> float:
    """Half-width of the uniform weight distribution (variance gain_sq/fan_in)."""
    return math.sqrt(3.0 * gain_sq / fan_in)


def sample_parameters(spec: ArchSpec, seed: int, dtype=np.float32) -> ParamSet:
    """Fresh random parameters, deterministic in the seed.

    Weights are uniform with fan-in-scaled variance (doubled for
    ReLU-fed layers), biases zero. No training state is kept anywhere.
    """
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for name, shape, fan_in, gain_sq in param_layout(spec):
        if fan_in is None:
            data = np.zeros(shape, dtype=dtype)
        else:
            bound = fan_in_bound(fan_in, gain_sq)
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params.add(name, Tensor(data, requires_grad=True))
    return params


class Model:
    """An architecture plus one concrete draw of its parameters."""

    def __init__(self, spec: ArchSpec, params: ParamSet):
        self.spec = spec
        self.params = params

    @property
    def embedding_params(self) -> ParamSet:
        return self.params.subset("embed.")

    @property
    def head_params(self) -> ParamSet:
        return self.params.subset("head.")

    def _check_input(self, batch: Tensor):
        if batch.ndim != 3 or batch.shape[2] != self.spec.in_features:
            raise ShapeError(f"{self.spec.name} embed", batch.shape,
                             ("batch", "time", self.spec.in_features))

    def embed(self, batch: Tensor) -> Tensor:
        """Map (batch, time, features) to the penultimate representation.

        The output width is fixed by the spec and independent of the
        temporal length: time is reduced by mean pooling (ms-tcn, trsf),
        by the class token (vit), or by recurrence (lstm, rnn).
        """
        self._check_input(batch)
        fam = self.spec.family
        if fam == "ms-tcn":
            return self._conv_stack(batch).mean(axis=1)
        if fam == "trsf":
            return self._attention_stack(batch).mean(axis=1)
        if fam == "vit":
            n = batch.shape[0]
            token = self.params["embed.class_token"].reshape(1, 1, -1)
            tokens = T.broadcast_to(token, (n, 1, self.spec.in_features))
            return self._attention_stack(T.concat([tokens, batch], axis=1))[:, 0, :]
        if fam in ("lstm", "rnn"):
            return self._recurrent(batch)
        if fam == "mean-pool":
            return batch.mean(axis=1)
        raise ValueError(f"unknown family {fam!r}")

    def head(self, embedding: Tensor) -> Tensor:
        p = self.params
        if self.spec.family in ("trsf", "vit"):
            hidden = T.relu(T.linear(embedding, p["head.fc1.weight"], p["head.fc1.bias"]))
            return T.linear(hidden, p["head.fc2.weight"], p["head.fc2.bias"])
        return T.linear(embedding, p["head.weight"], p["head.bias"])

    def predict(self, batch: Tensor) -> Tensor:
        """Per-sample probability of the positive class, in (0, 1)."""
        logits = self.head(self.embed(batch))
        return T.sigmoid(logits).reshape(batch.shape[0])

    # -- family forward passes ---------------------------------------------

    def _conv_stack(self, x: Tensor) -> Tensor:
        p = self.params
        for layer in range(self.spec.conv_layers):
            branches = [
                T.relu(T.conv1d_causal(x, p[f"embed.layer{layer}.k{k}.weight"],
                                       p[f"embed.layer{layer}.k{k}.bias"]))
                for k in self.spec.kernel_sizes
            ]
            x = branches[0] if len(branches) == 1 else T.concat(branches, axis=2)
        return x

    def _attention_stack(self, x: Tensor) -> Tensor:
        spec, p = self.spec, self.params
        n, s = x.shape[0], x.shape[1]
        h, dh = spec.heads, spec.head_channels
        scale = 1.0 / math.sqrt(dh)
        for layer in range(spec.msa_layers):
            qkv = T.linear(x, p[f"embed.layer{layer}.qkv_weight"], p[f"embed.layer{layer}.qkv_bias"])
            qkv = qkv.reshape(n, s, 3, h, dh)
            q = qkv[:, :, 0].transpose(0, 2, 1, 3)  # (n, h, s, dh)
            k = qkv[:, :, 1].transpose(0, 2, 1, 3)
            v = qkv[:, :, 2].transpose(0, 2, 1, 3)
            scores = T.matmul(q, k.transpose(0, 1, 3, 2), scale=scale)
            attn = T.softmax(scores, axis=-1)
            ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(n, s, h * dh)
            out = T.linear(ctx, p[f"embed.layer{layer}.out_weight"], p[f"embed.layer{layer}.out_bias"])
            x = x + out  # residual
        return x

    def _recurrent(self, x: Tensor) -> Tensor:
        spec, p = self.spec, self.params
        n, steps = x.shape[0], x.shape[1]
        units = spec.hidden_units
        driven = T.linear(x, p["embed.input_weight"], p["embed.bias"])  # (n, t, gates)
        hidden = Tensor(np.zeros((n, units), dtype=x.dtype))
        if spec.family == "rnn":
            for t in range(steps):
                hidden = T.tanh(driven[:, t, :] + hidden @ p["embed.recurrent_weight"])
            return hidden
        cell = Tensor(np.zeros((n, units), dtype=x.dtype))
        for t in range(steps):  # gate layout: [input, forget, output, candidate]
            gates = driven[:, t, :] + hidden @ p["embed.recurrent_weight"]
            sig = T.sigmoid(gates[:, : 3 * units])
            i, f, o = sig[:, :units], sig[:, units : 2 * units], sig[:, 2 * units :]
            g = T.tanh(gates[:, 3 * units :])
            cell = f * cell + i * g
            hidden = o * T.tanh(cell)
        return hidden


def build_model(spec: ArchSpec, init_seed: int, dtype=np.float32) -> Model:
    """Construct a model with parameters drawn deterministically from the seed."""
    return Model(spec, sample_parameters(spec, init_seed, dtype))


def with_features(spec: ArchSpec, in_features: int) -> ArchSpec:
    return replace(spec, in_features=in_features)
