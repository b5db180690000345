"""Feedforward networks with optional stochastic units.

A network is described by an immutable :class:`NetworkSpec` and evaluated
against a flat parameter vector.  Three kinds of noise site are supported:

``InputNoise(dim)``
    ``dim`` noise values are appended to the external input, the way a GAN
    generator perceives random numbers.
``HiddenNoise(layer, scale)``
    ``scale * e`` is added to every output of a hidden layer.
``GaussianUnits(layer, start, count)``
    Units ``start .. start+count-1`` of the layer are means, the next
    ``count`` units are log-variances; each pair emits ``m + exp(s/2) * e``.
    Both halves of the pair are linear, and the layer's width seen by the
    next layer shrinks by ``count``.

Every noise value is an explicit input to the forward pass, so for a fixed
noise vector the network is an ordinary differentiable function
(reparameterisation).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import BatchTape, Node, ShapeError, Tape, Var

ACTIVATIONS = ("tanh", "sigmoid", "relu", "linear")
NOISE_DISTRIBUTIONS = ("uniform", "normal")


@dataclass(frozen=True)
class InputNoise:
    dim: int


@dataclass(frozen=True)
class HiddenNoise:
    layer: int
    scale: float = 1.0


@dataclass(frozen=True)
class GaussianUnits:
    layer: int
    start: int
    count: int


NoiseSite = InputNoise | HiddenNoise | GaussianUnits


@dataclass(frozen=True)
class LayerSlot:
    w_offset: int
    b_offset: int
    fan_in: int
    fan_out: int


@dataclass(frozen=True)
class NetworkSpec:
    """Layer sizes (external input first), per-layer activations, noise sites."""

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    noise_sites: tuple[NoiseSite, ...] = ()
    noise_dist: str = "uniform"
    _cache: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        object.__setattr__(self, "noise_sites", tuple(self.noise_sites))
        object.__setattr__(self, "_cache", {})
        self.validate()

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def validate(self) -> None:
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least one layer")
        if self.layer_sizes[0] < 0 or any(s <= 0 for s in self.layer_sizes[1:]):
            raise ValueError("layer sizes must be positive")
        if len(self.activations) != self.n_layers:
            raise ValueError("one activation per layer required")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        if self.noise_dist not in NOISE_DISTRIBUTIONS:
            raise ValueError(f"unknown noise distribution {self.noise_dist!r}")
        gauss_by_layer: dict[int, list[range]] = {}
        n_input = 0
        for site in self.noise_sites:
            if isinstance(site, InputNoise):
                n_input += 1
                if site.dim <= 0:
                    raise ValueError("input noise dim must be positive")
            elif isinstance(site, HiddenNoise):
                if not 1 <= site.layer < self.n_layers:
                    raise ValueError(f"hidden noise on non-hidden layer {site.layer}")
            elif isinstance(site, GaussianUnits):
                if not 1 <= site.layer <= self.n_layers:
                    raise ValueError(f"gaussian units on missing layer {site.layer}")
                span = range(site.start, site.start + 2 * site.count)
                if site.count <= 0 or site.start < 0 or span.stop > self.layer_sizes[site.layer]:
                    raise ValueError("gaussian unit range outside its layer")
                for other in gauss_by_layer.get(site.layer, []):
                    if set(span) & set(other):
                        raise ValueError("gaussian unit ranges overlap")
                gauss_by_layer.setdefault(site.layer, []).append(span)
            else:
                raise TypeError(f"unknown noise site {site!r}")
        if n_input > 1:
            raise ValueError("at most one input noise site")
        if self.layer_sizes[0] + self.input_noise_dim == 0 and self.n_layers > 1:
            # a single layer with no inputs is a trainable constant; deeper ones are not allowed
            raise ValueError("network has no inputs")
        for layer in range(1, self.n_layers + 1):
            if self.out_width(layer) <= 0:
                raise ValueError(f"layer {layer} has no outputs left")

    @property
    def input_noise_dim(self) -> int:
        return sum(s.dim for s in self.noise_sites if isinstance(s, InputNoise))

    def gaussian_sites(self, layer: int) -> list[GaussianUnits]:
        key = ("gauss", layer)
        if key not in self._cache:
            self._cache[key] = self._gaussian_sites(layer)
        return self._cache[key]

    def _gaussian_sites(self, layer: int) -> list[GaussianUnits]:
        return sorted(
            (s for s in self.noise_sites if isinstance(s, GaussianUnits) and s.layer == layer),
            key=lambda s: s.start,
        )

    def out_width(self, layer: int) -> int:
        return self.layer_sizes[layer] - sum(s.count for s in self.gaussian_sites(layer))

    def fan_in(self, layer: int) -> int:
        if layer == 1:
            return self.layer_sizes[0] + self.input_noise_dim
        return self.out_width(layer - 1)

    @property
    def output_dim(self) -> int:
        return self.out_width(self.n_layers)

    def layout(self) -> list[LayerSlot]:
        if "layout" in self._cache:
            return self._cache["layout"]
        slots, off = [], 0
        for layer in range(1, self.n_layers + 1):
            fi, fo = self.fan_in(layer), self.layer_sizes[layer]
            slots.append(LayerSlot(off, off + fi * fo, fi, fo))
            off += (fi + 1) * fo
        self._cache["layout"] = slots
        return slots

    @property
    def n_params(self) -> int:
        return sum((s.fan_in + 1) * s.fan_out for s in self.layout())

    def noise_layout(self) -> list[tuple[NoiseSite, int, int]]:
        """(site, offset, length) for every noise site, in declaration order."""
        out, off = [], 0
        for site in self.noise_sites:
            if isinstance(site, InputNoise):
                n = site.dim
            elif isinstance(site, HiddenNoise):
                n = self.out_width(site.layer)
            else:
                n = site.count
            out.append((site, off, n))
            off += n
        return out

    @property
    def noise_dim(self) -> int:
        return sum(n for _, _, n in self.noise_layout())

    def to_dict(self) -> dict:
        sites = []
        for s in self.noise_sites:
            if isinstance(s, InputNoise):
                sites.append({"kind": "input", "dim": s.dim})
            elif isinstance(s, HiddenNoise):
                sites.append({"kind": "hidden", "layer": s.layer, "scale": s.scale})
            else:
                sites.append({"kind": "gaussian", "layer": s.layer, "start": s.start, "count": s.count})
        return {
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "noise_sites": sites,
            "noise_dist": self.noise_dist,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        sites: list[NoiseSite] = []
        for s in d.get("noise_sites", []):
            kind = s["kind"]
            if kind == "input":
                sites.append(InputNoise(s["dim"]))
            elif kind == "hidden":
                sites.append(HiddenNoise(s["layer"], s.get("scale", 1.0)))
            elif kind == "gaussian":
                sites.append(GaussianUnits(s["layer"], s["start"], s["count"]))
            else:
                raise ValueError(f"unknown noise site kind {kind!r}")
        return cls(tuple(d["layer_sizes"]), tuple(d["activations"]), tuple(sites),
                   d.get("noise_dist", "uniform"))


def mlp(sizes: Sequence[int], hidden: str = "tanh", output: str = "linear", **kw) -> NetworkSpec:
    """Shorthand for a plain MLP with one hidden activation throughout."""
    n = len(sizes) - 1
    return NetworkSpec(tuple(sizes), (hidden,) * (n - 1) + (output,), **kw)


@dataclass
class ParameterSet:
    """Flat parameter vector plus the per-layer index map of its spec."""

    spec: NetworkSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.spec.n_params,):
            raise ShapeError(f"expected {self.spec.n_params} parameters, got {self.values.shape}")

    @property
    def index_map(self) -> list[LayerSlot]:
        return self.spec.layout()

    def weight(self, layer: int) -> np.ndarray:
        s = self.index_map[layer - 1]
        return self.values[s.w_offset:s.b_offset].reshape(s.fan_in, s.fan_out)

    def bias(self, layer: int) -> np.ndarray:
        s = self.index_map[layer - 1]
        return self.values[s.b_offset:s.b_offset + s.fan_out]

    def __len__(self):
        return self.values.size


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def init(spec: NetworkSpec, seed, scheme: str = "uniform-fan-in") -> ParameterSet:
    """Random weights, zero biases.

    ``uniform-fan-in`` draws each weight from U(-1/sqrt(fan_in), 1/sqrt(fan_in));
    ``normal-scaled`` from N(0, 1/fan_in).
    """
    rng = _rng(seed)
    values = np.zeros(spec.n_params)
    for s in spec.layout():
        n = s.fan_in * s.fan_out
        if n == 0:
            continue
        bound = 1.0 / np.sqrt(s.fan_in)
        if scheme == "uniform-fan-in":
            w = rng.uniform(-bound, bound, size=n)
        elif scheme == "normal-scaled":
            w = rng.normal(0.0, bound, size=n)
        else:
            raise ValueError(f"unknown init scheme {scheme!r}")
        values[s.w_offset:s.b_offset] = w
    return ParameterSet(spec, values)


def spread_init(spec: NetworkSpec, rng: np.random.Generator, input_range=(0.0, 1.0),
                first_layer_gain: float = 40.0) -> np.ndarray:
    """Default init, except first-layer units get steep slopes and thresholds spread over the input box.

    Unit k computes ``tanh(w_k . (x - c_k))`` with ``w`` drawn from
    U(-gain, gain) / width and the centre ``c_k`` uniform in the box.
    """
    values = init(spec, rng).values
    first = spec.layout()[0]
    lo, hi = float(input_range[0]), float(input_range[1])
    if not hi > lo:
        raise ValueError("input range must have positive width")
    W = rng.uniform(-1.0, 1.0, (first.fan_in, first.fan_out)) * first_layer_gain / (hi - lo)
    c = rng.uniform(lo, hi, (first.fan_in, first.fan_out))
    values[first.w_offset:first.b_offset] = W.ravel()
    values[first.b_offset:first.b_offset + first.fan_out] = -np.sum(W * c, axis=0)
    return values


def draw_noise(spec: NetworkSpec, rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
    shape = (spec.noise_dim,) if batch is None else (batch, spec.noise_dim)
    if spec.noise_dist == "uniform":
        return rng.uniform(-1.0, 1.0, size=shape)
    return rng.standard_normal(size=shape)


def _check_io(spec: NetworkSpec, x: np.ndarray, noise) -> None:
    if x.shape[-1] != spec.input_dim:
        raise ShapeError(f"input has {x.shape[-1]} entries, spec expects {spec.input_dim}")
    if spec.noise_dim == 0:
        if noise is not None and np.size(noise) != 0:
            raise ShapeError("noise supplied to a network without noise sites")
    else:
        if noise is None:
            raise ShapeError(f"network needs {spec.noise_dim} noise values")
        if np.shape(noise)[-1] != spec.noise_dim:
            raise ShapeError(f"noise has {np.shape(noise)[-1]} entries, spec expects {spec.noise_dim}")


def _activate(t: BatchTape, h: Node, kind: str) -> Node:
    if kind == "tanh":
        return t.tanh(h)
    if kind == "sigmoid":
        return t.sigmoid(h)
    if kind == "relu":
        return t.relu(h)
    return h


def forward_graph(spec: NetworkSpec, tape: BatchTape, params: Node, x, noise=None,
                  offset: int = 0) -> Node:
    """Differentiable batched forward pass; rows of ``x`` are examples.

    The network's parameters are read from ``params`` starting at ``offset``,
    so several networks can share one flat parameter vector.
    """
    x = x if isinstance(x, Node) else tape.constant(np.atleast_2d(x))
    if noise is not None and not isinstance(noise, Node):
        noise = tape.constant(np.atleast_2d(noise))
    _check_io(spec, x.value, None if noise is None else noise.value)
    batch = x.shape[0]
    layout = spec.noise_layout()

    def noise_cols(site):
        for s, off, n in layout:
            if s is site:
                return tape.index(noise, (slice(None), slice(off, off + n)))
        raise KeyError(site)

    h = x
    for site in spec.noise_sites:
        if isinstance(site, InputNoise):
            h = tape.concat([h, noise_cols(site)], axis=1) if h.shape[1] else noise_cols(site)
    if h.shape[0] != batch:
        raise ShapeError("noise batch size differs from input batch size")

    for layer, slot in enumerate(spec.layout(), start=1):
        pre = tape.affine(h, params, offset + slot.w_offset, slot.fan_in, slot.fan_out)
        gauss = spec.gaussian_sites(layer)
        if not gauss:
            h = _activate(tape, pre, spec.activations[layer - 1])
        else:
            pieces, cursor = [], 0
            act = spec.activations[layer - 1]
            for g in gauss:
                if g.start > cursor:
                    pieces.append(_activate(tape, pre[:, cursor:g.start], act))
                m = pre[:, g.start:g.start + g.count]
                s = pre[:, g.start + g.count:g.start + 2 * g.count]
                e = noise_cols(g)
                pieces.append(m + tape.exp(s * 0.5) * e)
                cursor = g.start + 2 * g.count
            if cursor < slot.fan_out:
                pieces.append(_activate(tape, pre[:, cursor:], act))
            h = pieces[0] if len(pieces) == 1 else tape.concat(pieces, axis=1)
        for site in spec.noise_sites:
            if isinstance(site, HiddenNoise) and site.layer == layer:
                h = h + noise_cols(site) * site.scale
    return h


def _as_values(params) -> np.ndarray:
    return params.values if isinstance(params, ParameterSet) else np.asarray(params, dtype=np.float64)


def forward_net(spec: NetworkSpec, params, x, noise=None) -> np.ndarray:
    """Evaluate the network; a 1-D input gives a 1-D output."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    t = BatchTape()
    out = forward_graph(spec, t, t.constant(_as_values(params)), np.atleast_2d(x),
                        None if noise is None else np.atleast_2d(noise))
    return out.value[0] if single else out.value


def sample_forward(spec: NetworkSpec, params, x, rng: np.random.Generator) -> np.ndarray:
    """Draw every noise slot from the spec's distribution, then evaluate."""
    x = np.asarray(x, dtype=np.float64)
    if spec.noise_dim == 0:
        return forward_net(spec, params, x)
    batch = None if x.ndim == 1 else x.shape[0]
    return forward_net(spec, params, x, draw_noise(spec, rng, batch))


# -- scalar reference route -------------------------------------------------


def _scalar_act(v: Var, kind: str) -> Var:
    if kind == "tanh":
        return v.tanh()
    if kind == "sigmoid":
        return v.sigmoid()
    if kind == "relu":
        return v.relu()
    return v


def scalar_graph(spec: NetworkSpec, params: Sequence[Var], x: Sequence[Var],
                 noise: Sequence[Var] = ()) -> list[Var]:
    """Build one example's forward pass on a scalar :class:`Tape`."""
    if len(params) != spec.n_params or len(x) != spec.input_dim or len(noise) != spec.noise_dim:
        raise ShapeError("parameter, input or noise count does not match the spec")
    layout = {id(s): (off, n) for s, off, n in spec.noise_layout()}

    def cols(site):
        off, n = layout[id(site)]
        return list(noise[off:off + n])

    h = list(x)
    for site in spec.noise_sites:
        if isinstance(site, InputNoise):
            h = h + cols(site)
    for layer, slot in enumerate(spec.layout(), start=1):
        pre = []
        for j in range(slot.fan_out):
            acc = params[slot.b_offset + j]
            for i in range(slot.fan_in):
                acc = acc + h[i] * params[slot.w_offset + i * slot.fan_out + j]
            pre.append(acc)
        act = spec.activations[layer - 1]
        out, cursor = [], 0
        for g in spec.gaussian_sites(layer):
            out += [_scalar_act(v, act) for v in pre[cursor:g.start]]
            e = cols(g)
            for k in range(g.count):
                m, s = pre[g.start + k], pre[g.start + g.count + k]
                out.append(m + (s * 0.5).exp() * e[k])
            cursor = g.start + 2 * g.count
        out += [_scalar_act(v, act) for v in pre[cursor:]]
        for site in spec.noise_sites:
            if isinstance(site, HiddenNoise) and site.layer == layer:
                out = [v + e * site.scale for v, e in zip(out, cols(site))]
        h = out
    return h


def scalar_tape(spec: NetworkSpec) -> Tape:
    """Tape with inputs ``p{k}``, ``x{i}``, ``e{j}`` and outputs ``y{o}``."""
    tape = Tape()
    p = [tape.input(f"p{k}") for k in range(spec.n_params)]
    x = [tape.input(f"x{i}") for i in range(spec.input_dim)]
    e = [tape.input(f"e{j}") for j in range(spec.noise_dim)]
    for o, v in enumerate(scalar_graph(spec, p, x, e)):
        tape.output(f"y{o}", v)
    return tape


def scalar_bindings(params, x, noise=()) -> dict[str, float]:
    b = {f"p{k}": float(v) for k, v in enumerate(_as_values(params))}
    b.update({f"x{i}": float(v) for i, v in enumerate(np.ravel(x))})
    b.update({f"e{j}": float(v) for j, v in enumerate(np.ravel(noise))})
    return b


# -- persistence ------------------------------------------------------------


def save_params(path, params: ParameterSet, seed: int | None = None) -> None:
    """Write a JSON header ``{spec, seed, count}`` followed by float64 LE data.

    Layout: 4-byte little-endian header length, UTF-8 JSON header, raw array.
    """
    header = json.dumps(
        {"spec": params.spec.to_dict(), "seed": seed, "count": int(params.values.size)},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(params.values.astype("<f8").tobytes())


def load_params(path) -> tuple[ParameterSet, int | None]:
    raw = Path(path).read_bytes()
    (n,) = struct.unpack("<I", raw[:4])
    header = json.loads(raw[4:4 + n].decode())
    values = np.frombuffer(raw[4 + n:], dtype="<f8").astype(np.float64)
    if values.size != header["count"]:
        raise ShapeError("parameter file is truncated")
    return ParameterSet(NetworkSpec.from_dict(header["spec"]), values), header["seed"]
