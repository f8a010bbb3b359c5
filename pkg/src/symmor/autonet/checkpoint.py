"""Plain-text checkpoint container for networks and bases.

A file is a block of UTF-8 header lines, one blank line, then one real per
line written with 17 significant digits, which round-trips float64 exactly.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .layers import LayerSpec
from .network import Autoencoder, Sequential

MAGIC = "symmor-checkpoint 1"


class CheckpointError(ValueError):
    pass


def write_container(path, header: list[str], values) -> None:
    values = np.asarray(values, dtype=np.float64).ravel()
    lines = [MAGIC, *header, ""]
    lines += ["%.17g" % v for v in values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_container(path) -> tuple[list[str], np.ndarray]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"{path}: not UTF-8 ({exc})") from None
    lines = text.split("\n")
    if not lines or lines[0] != MAGIC:
        raise CheckpointError(f"{path}: missing '{MAGIC}' header")
    try:
        blank = lines.index("", 1)
    except ValueError:
        raise CheckpointError(f"{path}: no blank line after the header") from None
    body = [ln for ln in lines[blank + 1:] if ln.strip()]
    try:
        values = np.array([float(ln) for ln in body], dtype=np.float64)
    except ValueError as exc:
        raise CheckpointError(f"{path}: bad value line ({exc})") from None
    return lines[1:blank], values


def _parse_value(key: str, text: str):
    if key in ("shift", "scale"):
        return [float(t) for t in text.split(",")]
    return int(text)


def _parse_layer(tokens, lineno):
    # layer <index> <part> <kind> k=v ...
    try:
        index, part, kind = int(tokens[1]), tokens[2], tokens[3]
        params = {}
        for tok in tokens[4:]:
            key, _, val = tok.partition("=")
            if not _:
                raise ValueError(f"expected key=value, got {tok!r}")
            params[key] = _parse_value(key, val)
        return index, part, LayerSpec(kind, params)
    except (IndexError, ValueError) as exc:
        raise CheckpointError(f"header line {lineno}: {exc}") from None


def save_checkpoint(ae: Autoencoder, path) -> None:
    two_N, two_n = ae.dims
    header = [f"dims {two_N} {two_n}", f"data_norm {ae.data_norm}"]
    for part, net in (("encoder", ae.encoder), ("decoder", ae.decoder)):
        for i, spec in enumerate(net.specs):
            header.append(f"layer {i} {part} {spec.describe()}")
    scaler = ae.scaler
    if scaler is not None:
        for c, (sh, sc) in enumerate(zip(scaler.shift, scaler.scale)):
            header.append(f"scaler {c} {sh!r} {sc!r}")
    write_container(path, header, ae.theta)


def load_checkpoint(path) -> Autoencoder:
    header, theta = read_container(path)
    dims, data_norm = None, "half"
    specs = {"encoder": [], "decoder": []}
    for lineno, line in enumerate(header, start=2):
        tokens = line.split()
        if not tokens:
            continue
        if tokens[0] == "dims":
            try:
                dims = int(tokens[1]), int(tokens[2])
            except (IndexError, ValueError):
                raise CheckpointError(f"header line {lineno}: malformed dims") from None
        elif tokens[0] == "data_norm" and len(tokens) == 2:
            data_norm = tokens[1]
        elif tokens[0] == "layer":
            index, part, spec = _parse_layer(tokens, lineno)
            if part not in specs or index != len(specs[part]):
                raise CheckpointError(f"header line {lineno}: unexpected layer {part} {index}")
            specs[part].append(spec)
        elif tokens[0] == "scaler":
            continue  # duplicated in the scale layer parameters
        else:
            raise CheckpointError(f"header line {lineno}: unknown record {tokens[0]!r}")
    if dims is None:
        raise CheckpointError(f"{path}: missing dims record")
    try:
        enc = Sequential(specs["encoder"], (dims[0],))
        dec = Sequential(specs["decoder"], (dims[1],))
        return Autoencoder(enc, dec, theta, data_norm)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None
