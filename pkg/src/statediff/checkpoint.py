"""Versioned binary checkpoints for trained models.

Layout (all integers little-endian):

    bytes 0..7    magic ``b"SDIFCKPT"``
    bytes 8..11   format version, uint32 (currently 1)
    bytes 12..15  header length H, uint32
    bytes 16..16+H-1   header, canonical JSON (sorted keys, no spaces, UTF-8)
    remainder     parameter payload: for each entry of header["networks"] in
                  order, param_count float64 values, little-endian; within a
                  network, per layer: weight matrix row-major, then bias.

Header fields: ``schedule`` {kind, num_steps, beta_lo, beta_hi} (schedules
are rebuilt from these, never stored numerically), ``dims`` {state, cond,
latent, embed}, ``beta_kl``, ``delta_sq_hat`` and ``kl_hat`` (training-end
loss terms; ``null`` when untrained), ``final_step_noise`` ("zero": the
last reverse step injects no noise), and ``networks``, a list of
{role, layer_dims, activation, param_count} for denoiser, prior, posterior.

Identical models serialize to identical bytes.
"""

import json
import math
import struct

import numpy as np

from .errors import CheckpointError
from .latent import GaussianHead
from .model import LatentDiffusion
from .net import Network, params_flat, set_params_flat
from .schedule import build_schedule

MAGIC = b"SDIFCKPT"
VERSION = 1
_ROLES = ("denoiser", "prior", "posterior")


def _nan_to_null(value):
    return None if (value != value) else float(value)  # NaN -> null


def _null_to_nan(value):
    return float("nan") if value is None else float(value)


def checkpoint_bytes(model: LatentDiffusion) -> bytes:
    nets = {
        "denoiser": model.denoiser,
        "prior": model.prior.net,
        "posterior": model.posterior.net,
    }
    header = {
        "schedule": model.sched.descriptor(),
        "dims": {
            "state": model.state_dim,
            "cond": model.cond_dim,
            "latent": model.latent_dim,
            "embed": model.embed_dim,
        },
        "beta_kl": float(model.beta_kl),
        "delta_sq_hat": _nan_to_null(model.delta_sq_hat),
        "kl_hat": _nan_to_null(model.kl_hat),
        "final_step_noise": "zero",
        "networks": [
            {
                "role": role,
                "layer_dims": list(nets[role].layer_dims),
                "activation": nets[role].activation,
                "param_count": nets[role].param_count,
            }
            for role in _ROLES
        ],
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = b"".join(params_flat(nets[role]).astype("<f8").tobytes() for role in _ROLES)
    return MAGIC + struct.pack("<II", VERSION, len(head)) + head + payload


def save_checkpoint(model: LatentDiffusion, path) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path) -> LatentDiffusion:
    with open(path, "rb") as fh:
        blob = fh.read()
    return checkpoint_from_bytes(blob)


def checkpoint_from_bytes(blob: bytes) -> LatentDiffusion:
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, head_len = struct.unpack("<II", blob[8:16])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(blob) < 16 + head_len:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(blob[16 : 16 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None

    try:
        sched_desc = header["schedule"]
        dims = header["dims"]
        net_specs = header["networks"]
        beta_kl = header["beta_kl"]
        delta_sq = _null_to_nan(header["delta_sq_hat"])
        kl_hat = _null_to_nan(header.get("kl_hat"))
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint header missing field: {exc}") from None
    if [spec.get("role") for spec in net_specs] != list(_ROLES):
        raise CheckpointError(f"checkpoint must contain networks {_ROLES}")

    sched = build_schedule(
        sched_desc["kind"],
        sched_desc["num_steps"],
        sched_desc["beta_lo"],
        sched_desc["beta_hi"],
    )
    payload = np.frombuffer(blob[16 + head_len :], dtype="<f8")
    want = sum(spec["param_count"] for spec in net_specs)
    if payload.size != want:
        raise CheckpointError(f"payload holds {payload.size} floats, header says {want}")

    nets = {}
    offset = 0
    for spec in net_specs:
        dims_l = tuple(spec["layer_dims"])
        net = Network(
            dims_l,
            [np.zeros((o, i)) for i, o in zip(dims_l[:-1], dims_l[1:])],
            [np.zeros(o) for o in dims_l[1:]],
            spec["activation"],
        )
        if net.param_count != spec["param_count"]:
            raise CheckpointError(f"param_count mismatch for {spec['role']}")
        set_params_flat(net, payload[offset : offset + net.param_count])
        offset += net.param_count
        nets[spec["role"]] = net

    model = LatentDiffusion(
        denoiser=nets["denoiser"],
        prior=GaussianHead(nets["prior"], dims["latent"]),
        posterior=GaussianHead(nets["posterior"], dims["latent"]),
        sched=sched,
        state_dim=dims["state"],
        cond_dim=dims["cond"],
        latent_dim=dims["latent"],
        embed_dim=dims["embed"],
        beta_kl=beta_kl,
        delta_sq_hat=delta_sq,
        kl_hat=kl_hat,
    )
    if not math.isfinite(beta_kl):
        raise CheckpointError("beta_kl must be finite")
    return model
