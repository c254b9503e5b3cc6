"""The two MLP encoders (common, salient), projection heads and output
normalisation, plus the binary checkpoint format.

Probes read the pre-head representation; losses read the post-head
projection. The common projection is constrained to the unit sphere. The
two encoders hold disjoint parameter sets.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

ACTIVATIONS = ("rectifier", "tanh")
OUTPUT_NORMS = ("unit_sphere", "none")

CHECKPOINT_MAGIC = b"SEPCLRCK"
CHECKPOINT_VERSION = 1


@dataclass
class MlpSpec:
    """Widths run input -> hidden... -> representation; head widths run
    representation -> hidden -> projection. head_widths=None drops the head
    entirely (projection == normalised representation)."""

    layer_widths: list
    activation: str = "rectifier"
    output_norm: str = "none"
    init_seed: int = 0
    head_widths: tuple | None = (64, 32)

    def __post_init__(self):
        if len(self.layer_widths) < 2 or any(w <= 0 for w in self.layer_widths):
            raise ValueError(f"need >= 1 layer of positive widths, got {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.output_norm not in OUTPUT_NORMS:
            raise ValueError(f"output_norm must be one of {OUTPUT_NORMS}")
        if self.head_widths is not None and len(self.head_widths) != 2:
            raise ValueError("head_widths must be (hidden, out) or None")

    def to_dict(self):
        return {
            "layer_widths": list(self.layer_widths),
            "activation": self.activation,
            "output_norm": self.output_norm,
            "init_seed": self.init_seed,
            "head_widths": list(self.head_widths) if self.head_widths else None,
        }

    @classmethod
    def from_dict(cls, d):
        hw = d["head_widths"]
        return cls(
            layer_widths=list(d["layer_widths"]),
            activation=d["activation"],
            output_norm=d["output_norm"],
            init_seed=d["init_seed"],
            head_widths=tuple(hw) if hw else None,
        )


def _xavier_uniform(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear:
    def __init__(self, rng, fan_in, fan_out):
        self.w = dc.parameter(_xavier_uniform(rng, fan_in, fan_out))
        self.b = dc.parameter(np.zeros(fan_out))

    def __call__(self, x):
        return dc.add(dc.matmul(x, self.w), self.b)

    def params(self):
        return [self.w, self.b]


class FeatureStandardize:
    """Per-feature standardisation: batch statistics while training, running
    averages at evaluation. Running buffers use momentum 0.9."""

    eps = 1e-5
    momentum = 0.9

    def __init__(self, dim):
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def __call__(self, x, train):
        if train:
            mu = dc.col_mean(x)
            centered = dc.sub(x, mu)
            var = dc.col_mean(dc.mul(centered, centered))
            out = dc.div(centered, dc.sqrt(dc.add_scalar(var, self.eps)))
            m = self.momentum
            self.running_mean = m * self.running_mean + (1 - m) * mu.values
            self.running_var = m * self.running_var + (1 - m) * var.values
            return out
        scale = np.sqrt(self.running_var + self.eps)
        return dc.div(dc.sub(x, dc.constant(self.running_mean)), dc.constant(scale))


class ProjectionHead:
    def __init__(self, rng, d_in, d_hidden, d_out):
        self.lin1 = Linear(rng, d_in, d_hidden)
        self.standardize = FeatureStandardize(d_hidden)
        self.lin2 = Linear(rng, d_hidden, d_out)

    def __call__(self, x, train):
        h = self.standardize(self.lin1(x), train)
        return self.lin2(dc.relu(h))

    def params(self):
        return self.lin1.params() + self.lin2.params()


class Encoder:
    """Trunk MLP producing the representation, optional projection head,
    optional unit-sphere constraint on the projection."""

    def __init__(self, spec):
        self.spec = spec
        rng = np.random.default_rng(spec.init_seed)
        widths = spec.layer_widths
        self.layers = [Linear(rng, widths[i], widths[i + 1]) for i in range(len(widths) - 1)]
        self.head = None
        if spec.head_widths is not None:
            self.head = ProjectionHead(rng, widths[-1], *spec.head_widths)
        self._act = dc.relu if spec.activation == "rectifier" else dc.tanh

    def forward(self, x, train=False):
        """Returns (representation, projection) for a batch of flat inputs."""
        h = dc.as_diff(x)
        if h.values.ndim != 2 or h.shape[1] != self.spec.layer_widths[0]:
            raise dc.ShapeError("encoder_forward", h.shape, (None, self.spec.layer_widths[0]))
        for layer in self.layers[:-1]:
            h = self._act(layer(h))
        repr_ = self.layers[-1](h)
        proj = self.head(repr_, train) if self.head is not None else repr_
        if self.spec.output_norm == "unit_sphere":
            proj = dc.unit_rows(proj)
        return repr_, proj

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        if self.head is not None:
            out.extend(self.head.params())
        return out

    def state_arrays(self):
        """Named float64 arrays, checkpoint order."""
        named = []
        for i, layer in enumerate(self.layers):
            named.append((f"trunk{i}.w", layer.w.values))
            named.append((f"trunk{i}.b", layer.b.values))
        if self.head is not None:
            named.append(("head.lin1.w", self.head.lin1.w.values))
            named.append(("head.lin1.b", self.head.lin1.b.values))
            named.append(("head.running_mean", self.head.standardize.running_mean))
            named.append(("head.running_var", self.head.standardize.running_var))
            named.append(("head.lin2.w", self.head.lin2.w.values))
            named.append(("head.lin2.b", self.head.lin2.b.values))
        return named

    def load_state_arrays(self, arrays):
        for (name, dst), src in zip(self.state_arrays(), arrays):
            if dst.shape != src.shape:
                raise ValueError(f"checkpoint array {name}: shape {src.shape} != {dst.shape}")
            dst[...] = src


@dataclass
class EncoderPair:
    common: Encoder
    salient: Encoder

    @classmethod
    def build(cls, input_dim, common_dim=32, salient_dim=32, hidden=(256, 128),
              head_hidden=64, init_seed=0):
        """Desk-scale default pair: trunk input->256->128->dim, head dim->64->dim."""
        common = Encoder(MlpSpec(
            layer_widths=[input_dim, *hidden, common_dim],
            activation="rectifier",
            output_norm="unit_sphere",
            init_seed=init_seed,
            head_widths=(head_hidden, common_dim),
        ))
        salient = Encoder(MlpSpec(
            layer_widths=[input_dim, *hidden, salient_dim],
            activation="rectifier",
            output_norm="none",
            init_seed=init_seed + 1,
            head_widths=(head_hidden, salient_dim),
        ))
        return cls(common=common, salient=salient)

    def forward(self, x, train=False):
        c_repr, c_proj = self.common.forward(x, train)
        s_repr, s_proj = self.salient.forward(x, train)
        return c_repr, c_proj, s_repr, s_proj

    def params(self):
        return self.common.params() + self.salient.params()

    @property
    def salient_dim(self):
        return self.salient.spec.head_widths[1] if self.salient.spec.head_widths \
            else self.salient.spec.layer_widths[-1]

    def embed(self, inputs, chunk=2048):
        """Evaluation-mode representations/projections for a full dataset."""
        reprs = {"c_repr": [], "c_proj": [], "s_repr": [], "s_proj": []}
        inputs = np.asarray(inputs, dtype=np.float64)
        for start in range(0, len(inputs), chunk):
            block = inputs[start:start + chunk]
            c_repr, c_proj, s_repr, s_proj = self.forward(dc.constant(block), train=False)
            for key, arr in zip(reprs, (c_repr, c_proj, s_repr, s_proj)):
                reprs[key].append(arr.values)
        return {k: np.concatenate(v) for k, v in reprs.items()}


def save_checkpoint(pair, path):
    """Little-endian binary: magic, u32 version, u32 header length, JSON
    header (specs + array manifest), then the arrays as float64 row-major."""
    header = {
        "common": pair.common.spec.to_dict(),
        "salient": pair.salient.spec.to_dict(),
        "arrays": [],
    }
    blobs = []
    for enc_name, enc in (("common", pair.common), ("salient", pair.salient)):
        for name, arr in enc.state_arrays():
            header["arrays"].append(
                {"name": f"{enc_name}.{name}", "shape": list(arr.shape)}
            )
            blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    head_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(head_bytes)))
        fh.write(head_bytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a sepclr checkpoint: bad magic {magic!r}")
        version, head_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(head_len).decode())
        pair = EncoderPair(
            common=Encoder(MlpSpec.from_dict(header["common"])),
            salient=Encoder(MlpSpec.from_dict(header["salient"])),
        )
        arrays = []
        for meta in header["arrays"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            arrays.append(data.astype(np.float64))
        n_common = len(pair.common.state_arrays())
        pair.common.load_state_arrays(arrays[:n_common])
        pair.salient.load_state_arrays(arrays[n_common:])
    return pair
