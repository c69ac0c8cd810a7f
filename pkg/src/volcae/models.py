"""The autoencoder architectures and their graphs.

Three families over a shared conv/pool stack:

* ``staged1`` — 2D frame autoencoder; its bottleneck gives per-frame codes.
* ``staged2`` — 2D autoencoder over the (frames x frame-code) image built by
  stacking every frame's code; its bottleneck is the whole-volume embedding.
* ``joint``  — the two stages merged into one end-to-end graph (frame weights
  shared across frames), normally warm-started from trained staged models.
* ``cae3d``  — direct 3D autoencoder over the whole volume.

Encoders are conv(+BN+ReLU)/maxpool stages into a dense bottleneck; decoders
mirror them with switch-driven unpooling and transposed convolutions, ending
in a linear reconstruction layer so outputs can span the raw intensity range.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .layers import (
    BatchNormState,
    ConvParams,
    PoolSwitches,
    batchnorm,
    conv,
    deconv,
    dense,
    he_uniform,
    maxpool,
    unpool,
)
from .tensor import ShapeError, Tape, Tensor, relu, reshape, transpose

KINDS = ("staged1", "staged2", "joint", "cae3d")


class DescriptorError(ValueError):
    """Architecture descriptor violates a structural constraint."""


def _halve_chain(spatial, stages):
    """Spatial extents before each pool and the final pooled extents."""
    sizes = [tuple(spatial)]
    cur = tuple(spatial)
    for _ in range(stages):
        cur = tuple((n + 1) // 2 for n in cur)
        sizes.append(cur)
    return sizes


@dataclass(frozen=True)
class ArchitectureDescriptor:
    """Static shape plan for one model.

    input_size is the cube/frame edge S; embedding_dim the bottleneck width E.
    ``channels`` lists the per-stage conv channel counts of the model's own
    stack (the frame stack for joint, with ``brain_channels`` for its second
    stage); ``input_cols`` is the frame-code width consumed by staged2/joint.
    """

    kind: str
    input_size: int = 100
    embedding_dim: int = 50
    channels: tuple = (16, 32)
    input_cols: int | None = None
    brain_channels: tuple | None = None
    kernel_size: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DescriptorError(f"unknown model kind {self.kind!r}, expected one of {KINDS}")
        if self.embedding_dim < 1:
            raise DescriptorError(f"embedding_dim must be >= 1, got {self.embedding_dim}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise DescriptorError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if not self.channels or any(c < 1 for c in self.channels):
            raise DescriptorError(f"channels must be positive, got {self.channels}")
        s = self.input_size
        if self.kind in ("staged1", "joint"):
            div = 2 ** len(self.channels)
            if s < div or s % div != 0:
                raise DescriptorError(
                    f"{self.kind} needs input_size divisible by {div} "
                    f"(one exact halving per pooling stage), got {s}"
                )
        if self.kind == "staged2":
            if s < 4:
                raise DescriptorError(f"staged2 needs input_size >= 4, got {s}")
            if self.input_cols is None or self.input_cols < 4:
                raise DescriptorError(
                    f"staged2 needs input_cols >= 4 (frame-code width), got {self.input_cols}"
                )
        if self.kind == "joint":
            if self.input_cols is None or self.input_cols < 4:
                raise DescriptorError(
                    f"joint needs input_cols >= 4 (frame-code width), got {self.input_cols}"
                )
            if not self.brain_channels:
                raise DescriptorError("joint needs brain_channels for its second stage")
        if self.kind == "cae3d" and s < 8:
            raise DescriptorError(f"cae3d needs input_size >= 8, got {s}")

    # -- shape plan ---------------------------------------------------------

    def input_spatial(self) -> tuple:
        if self.kind == "staged1":
            return (self.input_size, self.input_size)
        if self.kind == "staged2":
            return (self.input_size, self.input_cols)
        if self.kind == "cae3d":
            return (self.input_size,) * 3
        return (self.input_size,) * 3  # joint consumes whole volumes

    @staticmethod
    def staged1(input_size=100, embedding_dim=50, channels=(16, 32), kernel_size=3):
        return ArchitectureDescriptor(
            kind="staged1", input_size=input_size, embedding_dim=embedding_dim,
            channels=tuple(channels), kernel_size=kernel_size,
        )

    @staticmethod
    def staged2(input_size=100, input_cols=50, embedding_dim=50, channels=(16, 32), kernel_size=3):
        return ArchitectureDescriptor(
            kind="staged2", input_size=input_size, embedding_dim=embedding_dim,
            channels=tuple(channels), input_cols=input_cols, kernel_size=kernel_size,
        )

    @staticmethod
    def cae3d(input_size=100, embedding_dim=50, channels=(8, 16, 32), kernel_size=3):
        return ArchitectureDescriptor(
            kind="cae3d", input_size=input_size, embedding_dim=embedding_dim,
            channels=tuple(channels), kernel_size=kernel_size,
        )

    @staticmethod
    def joint_of(frame: "ArchitectureDescriptor", brain: "ArchitectureDescriptor"):
        if frame.kind != "staged1" or brain.kind != "staged2":
            raise DescriptorError(
                f"joint merges a staged1 and a staged2 model, got {frame.kind}/{brain.kind}"
            )
        if brain.input_cols != frame.embedding_dim:
            raise DescriptorError(
                f"frame-code width mismatch: staged1 emits {frame.embedding_dim}, "
                f"staged2 consumes {brain.input_cols}"
            )
        if brain.input_size != frame.input_size:
            raise DescriptorError(
                f"frame count mismatch: volume depth is {frame.input_size} "
                f"but staged2 expects {brain.input_size} rows"
            )
        if frame.kernel_size != brain.kernel_size:
            raise DescriptorError("staged1/staged2 kernel sizes differ")
        return ArchitectureDescriptor(
            kind="joint", input_size=frame.input_size, embedding_dim=brain.embedding_dim,
            channels=frame.channels, input_cols=frame.embedding_dim,
            brain_channels=brain.channels, kernel_size=frame.kernel_size,
        )

    def frame_part(self) -> "ArchitectureDescriptor":
        if self.kind != "joint":
            raise DescriptorError("frame_part is defined for joint descriptors only")
        return ArchitectureDescriptor.staged1(
            self.input_size, self.input_cols, self.channels, self.kernel_size
        )

    def brain_part(self) -> "ArchitectureDescriptor":
        if self.kind != "joint":
            raise DescriptorError("brain_part is defined for joint descriptors only")
        return ArchitectureDescriptor.staged2(
            self.input_size, self.input_cols, self.embedding_dim,
            self.brain_channels, self.kernel_size,
        )

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "input_size": self.input_size,
            "embedding_dim": self.embedding_dim,
            "channels": list(self.channels),
            "kernel_size": self.kernel_size,
        }
        if self.input_cols is not None:
            d["input_cols"] = self.input_cols
        if self.brain_channels is not None:
            d["brain_channels"] = list(self.brain_channels)
        return d

    @staticmethod
    def from_dict(d: dict) -> "ArchitectureDescriptor":
        return ArchitectureDescriptor(
            kind=d["kind"], input_size=d["input_size"], embedding_dim=d["embedding_dim"],
            channels=tuple(d["channels"]), input_cols=d.get("input_cols"),
            brain_channels=tuple(d["brain_channels"]) if d.get("brain_channels") else None,
            kernel_size=d.get("kernel_size", 3),
        )


# ---------------------------------------------------------------------------
# one conv/pool stack (shared by all kinds)


class _StackPlan:
    """Static shapes for one encoder/decoder stack."""

    def __init__(self, spatial, in_ch, channels, embedding_dim, kernel_size):
        self.spatial = tuple(spatial)
        self.in_ch = in_ch
        self.channels = tuple(channels)
        self.embedding_dim = embedding_dim
        self.kernel_size = kernel_size
        self.rank = len(self.spatial)
        self.stage_spatial = _halve_chain(self.spatial, len(self.channels))
        self.flat = self.channels[-1] * int(np.prod(self.stage_spatial[-1]))


def _plan_for(desc: ArchitectureDescriptor, part: str | None = None) -> _StackPlan:
    if desc.kind == "joint":
        sub = desc.frame_part() if part == "frame" else desc.brain_part()
        return _plan_for(sub)
    return _StackPlan(
        desc.input_spatial(), 1, desc.channels, desc.embedding_dim, desc.kernel_size
    )


def _init_stack(plan: _StackPlan, prefix: str, rng, dtype, params, bn):
    k = plan.kernel_size
    kd = (k,) * plan.rank
    kn = int(np.prod(kd))
    prev = plan.in_ch
    for i, ch in enumerate(plan.channels):
        params[f"{prefix}enc.conv{i}.w"] = Tensor(
            he_uniform(rng, (ch, prev) + kd, prev * kn, dtype)
        )
        params[f"{prefix}enc.conv{i}.b"] = Tensor(np.zeros(ch, dtype=dtype))
        bn[f"{prefix}enc.bn{i}"] = BatchNormState.create(ch, dtype)
        prev = ch
    params[f"{prefix}enc.fc.w"] = Tensor(
        he_uniform(rng, (plan.flat, plan.embedding_dim), plan.flat, dtype)
    )
    params[f"{prefix}enc.fc.b"] = Tensor(np.zeros(plan.embedding_dim, dtype=dtype))
    bn[f"{prefix}enc.bnfc"] = BatchNormState.create(plan.embedding_dim, dtype)

    params[f"{prefix}dec.fc.w"] = Tensor(
        he_uniform(rng, (plan.embedding_dim, plan.flat), plan.embedding_dim, dtype)
    )
    params[f"{prefix}dec.fc.b"] = Tensor(np.zeros(plan.flat, dtype=dtype))
    bn[f"{prefix}dec.bnfc"] = BatchNormState.create(plan.flat, dtype)
    for i in range(len(plan.channels) - 1, -1, -1):
        produced = plan.channels[i - 1] if i > 0 else plan.in_ch
        params[f"{prefix}dec.deconv{i}.w"] = Tensor(
            he_uniform(rng, (plan.channels[i], produced) + kd, plan.channels[i] * kn, dtype)
        )
        params[f"{prefix}dec.deconv{i}.b"] = Tensor(np.zeros(produced, dtype=dtype))
        if i > 0:
            bn[f"{prefix}dec.bn{i}"] = BatchNormState.create(produced, dtype)


def _encode_stack(g: "ModelGraph", plan, prefix, x, mode, tape):
    p = g.params
    h = x
    switches = []
    for i in range(len(plan.channels)):
        h = conv(h, ConvParams(p[f"{prefix}enc.conv{i}.w"], p[f"{prefix}enc.conv{i}.b"]), tape)
        h = batchnorm(h, g.bn[f"{prefix}enc.bn{i}"], mode, tape)
        h = relu(h, tape)
        h, s = maxpool(h, tape)
        switches.append(s)
    h = reshape(h, (h.shape[0], plan.flat), tape)
    e = dense(h, p[f"{prefix}enc.fc.w"], p[f"{prefix}enc.fc.b"], tape)
    e = batchnorm(e, g.bn[f"{prefix}enc.bnfc"], mode, tape)
    e = relu(e, tape)
    return e, switches


def _decode_stack(g: "ModelGraph", plan, prefix, e, switches, mode, tape):
    if len(switches) != len(plan.channels):
        raise ShapeError(
            f"decode needs {len(plan.channels)} pooling switch records, got {len(switches)}"
        )
    p = g.params
    h = dense(e, p[f"{prefix}dec.fc.w"], p[f"{prefix}dec.fc.b"], tape)
    h = batchnorm(h, g.bn[f"{prefix}dec.bnfc"], mode, tape)
    h = relu(h, tape)
    h = reshape(h, (h.shape[0], plan.channels[-1]) + plan.stage_spatial[-1], tape)
    for i in range(len(plan.channels) - 1, 0, -1):
        h = unpool(h, switches[i], tape)
        h = deconv(h, ConvParams(p[f"{prefix}dec.deconv{i}.w"], p[f"{prefix}dec.deconv{i}.b"]), tape=tape)
        h = batchnorm(h, g.bn[f"{prefix}dec.bn{i}"], mode, tape)
        h = relu(h, tape)
    h = unpool(h, switches[0], tape)
    return deconv(h, ConvParams(p[f"{prefix}dec.deconv0.w"], p[f"{prefix}dec.deconv0.b"]), tape=tape)


def _fold_frames(x: Tensor, tape) -> Tensor:
    """(B, 1, X, Y, Z) -> (B*Z, 1, X, Y): every Z-frame becomes a batch item."""
    b, _, sx, sy, sz = x.shape
    t = transpose(x, (0, 4, 1, 2, 3), tape)
    return reshape(t, (b * sz, 1, sx, sy), tape)


def _unfold_frames(y: Tensor, b: int, sz: int, tape) -> Tensor:
    _, _, sx, sy = y.shape
    t = reshape(y, (b, sz, 1, sx, sy), tape)
    return transpose(t, (0, 2, 3, 4, 1), tape)


class ModelGraph:
    """An architecture descriptor plus its named parameters and BN states.

    Exclusively owned while training (parameter updates, running stats);
    frozen inference-mode use is side-effect free and thread safe.
    """

    def __init__(self, descriptor: ArchitectureDescriptor, params, bn, dtype):
        self.descriptor = descriptor
        self.params: dict[str, Tensor] = params
        self.bn: dict[str, BatchNormState] = bn
        self.dtype = np.dtype(dtype)

    @property
    def kind(self) -> str:
        return self.descriptor.kind

    # -- parameter registry -------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        """Live name->tensor view of every trainable tensor (incl. BN affine)."""
        out = dict(self.params)
        for name, st in self.bn.items():
            out[f"{name}.gamma"] = st.gamma
            out[f"{name}.beta"] = st.beta
        return out

    def set_parameter(self, name: str, value: Tensor) -> None:
        if name.endswith(".gamma") or name.endswith(".beta"):
            base, attr = name.rsplit(".", 1)
            st = self.bn.get(base)
            if st is None:
                raise KeyError(f"unknown batch-norm state {base!r}")
            if getattr(st, attr).shape != value.shape:
                raise ShapeError(f"parameter {name}: shape {value.shape} does not match")
            setattr(st, attr, value)
            return
        if name not in self.params:
            raise KeyError(f"unknown parameter {name!r}")
        if self.params[name].shape != value.shape:
            raise ShapeError(
                f"parameter {name}: shape {value.shape} does not match {self.params[name].shape}"
            )
        self.params[name] = value

    def parameter_count(self) -> int:
        return sum(t.size for t in self.parameters().values())

    def copy(self) -> "ModelGraph":
        params = {k: Tensor(v.data) for k, v in self.params.items()}
        bn = {k: copy.deepcopy(v) for k, v in self.bn.items()}
        return ModelGraph(self.descriptor, params, bn, self.dtype)

    # -- forward passes ------------------------------------------------------

    def _check_input(self, x: Tensor):
        expect = (1,) + tuple(self.descriptor.input_spatial())
        if tuple(x.shape[1:]) != expect:
            raise ShapeError(
                f"{self.kind} expects input (batch,) + {expect}, got {tuple(x.shape)}"
            )
        if x.dtype != self.dtype:
            raise TypeError(f"input dtype {x.dtype} does not match model dtype {self.dtype}")

    def encode_with_context(self, x: Tensor, mode: str = "infer", tape: Tape | None = None):
        """Embedding plus the switch context the mirrored decoder consumes."""
        self._check_input(x)
        if self.kind == "joint":
            b, sz = x.shape[0], x.shape[4]
            frames = _fold_frames(x, tape)
            fplan = _plan_for(self.descriptor, "frame")
            e1, fsw = _encode_stack(self, fplan, "frame.", frames, mode, tape)
            rows = reshape(e1, (b, 1, sz, self.descriptor.input_cols), tape)
            bplan = _plan_for(self.descriptor, "brain")
            e, bsw = _encode_stack(self, bplan, "brain.", rows, mode, tape)
            return e, {"frame": fsw, "brain": bsw, "batch": b, "depth": sz}
        plan = _plan_for(self.descriptor)
        e, sw = _encode_stack(self, plan, "", x, mode, tape)
        return e, {"stack": sw}

    def encode(self, x: Tensor, mode: str = "infer", tape: Tape | None = None) -> Tensor:
        return self.encode_with_context(x, mode, tape)[0]

    def decode(self, e: Tensor, context, mode: str = "infer", tape: Tape | None = None) -> Tensor:
        """Reconstruct from an embedding with the encoder's switch context."""
        if context is None:
            raise ValueError("decode requires the switch context from encode_with_context")
        if e.shape[-1] != self.descriptor.embedding_dim:
            raise ShapeError(
                f"embedding width {e.shape[-1]} does not match model "
                f"embedding_dim {self.descriptor.embedding_dim}"
            )
        if self.kind == "joint":
            b, sz = context["batch"], context["depth"]
            bplan = _plan_for(self.descriptor, "brain")
            rows = _decode_stack(self, bplan, "brain.", e, context["brain"], mode, tape)
            e1 = reshape(rows, (b * sz, self.descriptor.input_cols), tape)
            fplan = _plan_for(self.descriptor, "frame")
            frames = _decode_stack(self, fplan, "frame.", e1, context["frame"], mode, tape)
            return _unfold_frames(frames, b, sz, tape)
        plan = _plan_for(self.descriptor)
        return _decode_stack(self, plan, "", e, context["stack"], mode, tape)

    def autoencode(self, x: Tensor, mode: str = "infer", tape: Tape | None = None) -> Tensor:
        e, ctx = self.encode_with_context(x, mode, tape)
        return self.decode(e, ctx, mode, tape)


def build(descriptor: ArchitectureDescriptor, seed: int = 0, dtype=np.float32) -> ModelGraph:
    """Fresh model with fan-in-scaled uniform weights; deterministic per seed."""
    rng = np.random.default_rng(seed)
    params: dict[str, Tensor] = {}
    bn: dict[str, BatchNormState] = {}
    if descriptor.kind == "joint":
        _init_stack(_plan_for(descriptor, "frame"), "frame.", rng, dtype, params, bn)
        _init_stack(_plan_for(descriptor, "brain"), "brain.", rng, dtype, params, bn)
    else:
        _init_stack(_plan_for(descriptor), "", rng, dtype, params, bn)
    return ModelGraph(descriptor, params, bn, dtype)


def merge_staged(m1: ModelGraph, m2: ModelGraph) -> ModelGraph:
    """Fuse trained staged models into one joint graph (parameters copied).

    At merge time the joint forward equals the staged composition exactly;
    training the joint afterwards leaves the donors untouched.
    """
    if m1.kind != "staged1" or m2.kind != "staged2":
        raise DescriptorError(f"merge_staged needs (staged1, staged2), got ({m1.kind}, {m2.kind})")
    if m1.dtype != m2.dtype:
        raise TypeError(f"mixed dtypes {m1.dtype}/{m2.dtype} cannot merge")
    desc = ArchitectureDescriptor.joint_of(m1.descriptor, m2.descriptor)
    params: dict[str, Tensor] = {}
    bn: dict[str, BatchNormState] = {}
    for src, prefix in ((m1, "frame."), (m2, "brain.")):
        for k, v in src.params.items():
            params[prefix + k] = Tensor(v.data)
        for k, st in src.bn.items():
            bn[prefix + k] = copy.deepcopy(st)
    return ModelGraph(desc, params, bn, m1.dtype)


# ---------------------------------------------------------------------------
# volume-level conveniences


def _volume_array(volume) -> np.ndarray:
    """Accept a Volume, a Tensor or a bare 3D numpy array."""
    if isinstance(volume, np.ndarray):
        return volume
    data = volume.data
    return data if isinstance(data, np.ndarray) else np.asarray(data)


def _as_batch(model: ModelGraph, volume_data: np.ndarray) -> Tensor:
    arr = np.asarray(volume_data, dtype=model.dtype)
    return Tensor(arr[None, None])


def encode_volume(model: ModelGraph, volume) -> np.ndarray:
    """50-d (by default) embedding of one volume; inference mode."""
    data = _volume_array(volume)
    if model.kind == "staged1":
        raise DescriptorError("staged1 encodes frames, not volumes; use encode_frames")
    e = model.encode(_as_batch(model, data))
    return e.data[0].copy()


def encode_frames(model: ModelGraph, volume) -> np.ndarray:
    """Stack per-frame codes of a volume into a (depth x code width) array."""
    if model.kind != "staged1":
        raise DescriptorError(f"encode_frames needs a staged1 model, got {model.kind}")
    data = _volume_array(volume)
    s = model.descriptor.input_size
    if data.shape != (s, s, s):
        raise ShapeError(f"expected a {s}^3 volume, got shape {data.shape}")
    x = _as_batch(model, data)
    frames = _fold_frames(x, None)  # (Z, 1, X, Y)
    e, _ = _encode_stack(model, _plan_for(model.descriptor), "", frames, "infer", None)
    return e.data.copy()


def reconstruct_volume(model: ModelGraph, volume) -> np.ndarray:
    data = _volume_array(volume)
    y = model.autoencode(_as_batch(model, data))
    return y.data[0, 0].copy()


def staged_autoencode(m1: ModelGraph, m2: ModelGraph, volume) -> np.ndarray:
    """Reference composition of the two staged models, frame by frame.

    Per-frame encode -> stacked code image -> second-stage autoencode ->
    per-frame decode using each frame's own pooling switches. Used both as
    the staged reconstruction path and as the independent oracle that a
    merged joint graph must reproduce.
    """
    if m1.kind != "staged1" or m2.kind != "staged2":
        raise DescriptorError(f"staged composition needs (staged1, staged2), got ({m1.kind}, {m2.kind})")
    data = _volume_array(volume)
    s = m1.descriptor.input_size
    plan1 = _plan_for(m1.descriptor)
    codes = []
    contexts = []
    for z in range(s):
        frame = Tensor(np.ascontiguousarray(data[:, :, z], dtype=m1.dtype)[None, None])
        e, ctx = m1.encode_with_context(frame)
        codes.append(e.data[0])
        contexts.append(ctx)
    code_img = Tensor(np.stack(codes)[None, None])  # (1, 1, S, E1)
    rec_img = m2.autoencode(code_img)
    out = np.empty_like(np.asarray(data, dtype=m1.dtype))
    for z in range(s):
        e1 = Tensor(np.ascontiguousarray(rec_img.data[0, 0, z])[None])
        frame = m1.decode(e1, contexts[z])
        out[:, :, z] = frame.data[0, 0]
    return out


def staged_encode(m1: ModelGraph, m2: ModelGraph, volume) -> np.ndarray:
    """Whole-volume embedding from the staged pipeline (code image -> stage 2)."""
    code_img = encode_frames(m1, volume)
    x = Tensor(np.asarray(code_img, dtype=m2.dtype)[None, None])
    return m2.encode(x).data[0].copy()
