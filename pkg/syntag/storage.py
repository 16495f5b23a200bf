"""Binary model files.

Layout, all integers little-endian ``uint32``::

    magic (8 bytes) | version
    header length | header (UTF-8 text)
    tensor count | per tensor: name length, name, ndim, shape, float64 data
    sha256 of everything above (32 bytes)

The header holds sections introduced by ``[name] <line count>``: ``config``
(``key=value`` lines of the model configuration), ``vocabulary`` (the
number of forward relations), ``words`` and ``relations`` (one entry per
line in id order).
"""

import re
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np
from attrs import asdict, fields

from syntag.corpus import EmbeddingTable, Vocabulary
from syntag.logger import logger
from syntag.pipeline import ModelConfig, build_model
from syntag.utils import get_hash

MAGIC = b"SYNTAGM\x00"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_DIGEST = 32
_SECTION = re.compile(r"^\[(\w+)\] (\d+)$")


class ModelFileError(ValueError):
    pass


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse_config(lines):
    types = {f.name: type(f.default) for f in fields(ModelConfig)}
    kwargs = {}
    for line in lines:
        key, sep, value = line.partition("=")
        if not sep or key not in types:
            raise ModelFileError(f"unexpected config entry {line!r}")
        if types[key] is bool:
            kwargs[key] = value == "true"
        else:
            kwargs[key] = types[key](value)
    return ModelConfig(**kwargs)


def _header(model):
    config = asdict(model.config)
    vocabulary = model.vocabulary
    sections = {
        "config": [f"{k}={_format_value(v)}" for k, v in config.items()],
        "vocabulary": [f"n_forward={vocabulary.n_forward}"],
        "words": list(vocabulary.words),
        "relations": vocabulary.relation_names,
    }
    lines = []
    for name, body in sections.items():
        lines.append(f"[{name}] {len(body)}")
        lines.extend(body)
    return "\n".join(lines)


def _sections(text):
    lines = text.split("\n")
    sections = {}
    ii = 0
    while ii < len(lines):
        match = _SECTION.match(lines[ii])
        if match is None:
            raise ModelFileError(f"expected a section line, got {lines[ii]!r}")
        name, count = match.group(1), int(match.group(2))
        body = lines[ii + 1 : ii + 1 + count]
        if len(body) != count:
            raise ModelFileError(f"section {name} is truncated")
        sections[name] = body
        ii += 1 + count
    missing = {"config", "vocabulary", "words", "relations"} - set(sections)
    if missing:
        raise ModelFileError(f"header lacks sections {sorted(missing)}")
    return sections


def model_to_bytes(model):
    header = _header(model).encode("utf-8")
    chunks = [MAGIC, _U32.pack(FORMAT_VERSION), _U32.pack(len(header)), header]
    params = model.parameters()
    chunks.append(_U32.pack(len(params)))
    for name, p in params.items():
        encoded = name.encode("utf-8")
        chunks += [_U32.pack(len(encoded)), encoded, _U32.pack(p.data.ndim)]
        chunks += [_U32.pack(n) for n in p.data.shape]
        chunks.append(np.ascontiguousarray(p.data, dtype="<f8").tobytes())
    body = b"".join(chunks)
    return body + get_hash(body)


def save_model(model, path):
    """Writes ``model`` to ``path``."""

    path = Path(path)
    path.write_bytes(model_to_bytes(model))
    logger.info(f"Model saved to {path}")


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, n):
        if self.offset + n > len(self.data):
            raise ModelFileError("truncated model file")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def u32(self):
        return _U32.unpack(self.take(4))[0]


def model_from_bytes(data, config=None):
    """Inverse of :func:`model_to_bytes`; see :func:`load_model`."""

    if len(data) < len(MAGIC) + 4 + _DIGEST:
        raise ModelFileError("truncated model file")
    if data[: len(MAGIC)] != MAGIC:
        raise ModelFileError("not a syntag model file")
    body, digest = data[:-_DIGEST], data[-_DIGEST:]

    reader = _Reader(body)
    reader.take(len(MAGIC))
    version = reader.u32()
    if version != FORMAT_VERSION:
        raise ModelFileError(
            f"model file version {version}, expected {FORMAT_VERSION}"
        )
    if get_hash(body) != digest:
        raise ModelFileError("checksum mismatch")

    try:
        text = reader.take(reader.u32()).decode("utf-8")
    except UnicodeDecodeError:
        raise ModelFileError("header is not valid UTF-8")
    sections = _sections(text)
    file_config = _parse_config(sections["config"])
    n_forward = int(sections["vocabulary"][0].partition("=")[2])
    vocabulary = Vocabulary(
        words={w: ii for ii, w in enumerate(sections["words"])},
        relations={r: ii for ii, r in enumerate(sections["relations"])},
        n_forward=n_forward,
    )

    requested = config or {}
    if not isinstance(requested, Mapping):
        requested = asdict(requested)
    file_values = asdict(file_config)
    differing = [
        name
        for name, value in requested.items()
        if name in file_values and value != file_values[name]
    ]
    if differing:
        logger.warning(
            "Configuration taken from the model file, ignoring requested "
            f"values of {', '.join(differing)}"
        )

    placeholder = EmbeddingTable(
        matrix=np.zeros((vocabulary.n_words, file_config.dim))
    )
    model = build_model(file_config, vocabulary, placeholder)
    params = model.parameters()

    n_tensors = reader.u32()
    seen = set()
    for _ in range(n_tensors):
        name = reader.take(reader.u32()).decode("utf-8")
        shape = tuple(reader.u32() for _ in range(reader.u32()))
        size = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(reader.take(8 * size), dtype="<f8")
        p = params.get(name)
        if p is None:
            raise ModelFileError(f"unexpected tensor {name}")
        if p.shape != shape:
            raise ModelFileError(
                f"tensor {name} has shape {shape}, expected {p.shape}"
            )
        p.data[...] = values.reshape(shape)
        seen.add(name)
    if seen != set(params):
        raise ModelFileError(f"missing tensors {sorted(set(params) - seen)}")
    if reader.offset != len(body):
        raise ModelFileError("trailing bytes after the last tensor")
    return model


def load_model(path, config=None):
    """Reads a model written by :func:`save_model`.

    Parameters
    ----------
    path : os.PathLike
    config : ModelConfig or Mapping, optional
        Requested configuration, complete or as ``{field: value}`` for the
        fields the caller set. The configuration stored in the file always
        wins; requested values that differ are reported as a warning.

    Returns
    -------
    syntag.pipeline.Model

    Raises
    ------
    ModelFileError
        Bad magic, unsupported version, checksum mismatch, truncation or
        inconsistent tensors.
    """

    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as err:
        raise ModelFileError(f"cannot read {path}: {err}") from err
    model = model_from_bytes(data, config)
    logger.info(f"Model loaded from {path}")
    return model
