"""Dataset manifests and speaker vectors.

A manifest is a UTF-8 text file with one tab-separated record per line:

    audio_path <TAB> text <TAB> speaker_id <TAB> speaker_vec

``speaker_vec`` is either a path to a little-endian float32 binary of 256
values or the 256 values inline, comma-separated.  Relative paths resolve
against the manifest's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

SPEAKER_DIM = 256


class ManifestError(ValueError):
    pass


@dataclass
class ManifestEntry:
    audio: Path
    text: str
    speaker: str
    speaker_vec: np.ndarray


def normalize_speaker(vec):
    """L2-normalize a speaker vector; rejects zero and non-finite input."""
    vec = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(vec)):
        raise ManifestError("speaker vector contains non-finite values")
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ManifestError("cannot normalize an all-zero speaker vector")
    return vec / norm


def load_speaker_vector(path, dim=SPEAKER_DIM):
    data = Path(path).read_bytes()
    expected = 4 * dim
    if len(data) != expected:
        raise ManifestError(
            f"{path}: speaker vector holds {len(data)} bytes, expected {expected}"
        )
    return np.frombuffer(data, dtype="<f4").astype(np.float64)


def save_speaker_vector(path, vec):
    vec = np.asarray(vec, dtype=np.float64)
    Path(path).write_bytes(vec.astype("<f4").tobytes())


def _parse_vec(field, base_dir, dim):
    if "," in field:
        values = np.array([float(v) for v in field.split(",")], dtype=np.float64)
        if values.size != dim:
            raise ManifestError(
                f"inline speaker vector has {values.size} values, expected {dim}"
            )
        return values
    return load_speaker_vector(base_dir / field, dim=dim)


def read_manifest(path, speaker_dim=SPEAKER_DIM):
    """Parse a manifest into entries with normalized speaker vectors."""
    path = Path(path)
    base = path.parent
    entries = []
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ManifestError(
                f"{path}:{line_no}: expected 4 tab-separated fields, got {len(fields)}"
            )
        audio, text, speaker, vec_field = fields
        vec = normalize_speaker(_parse_vec(vec_field, base, speaker_dim))
        entries.append(ManifestEntry(base / audio, text, speaker, vec))
    if not entries:
        raise ManifestError(f"{path}: manifest is empty")
    return entries


def write_manifest(path, rows):
    """Write (audio, text, speaker, vec_field) string rows."""
    lines = []
    for audio, text, speaker, vec_field in rows:
        for field in (audio, text, speaker, vec_field):
            if "\t" in field or "\n" in field:
                raise ManifestError(f"manifest field {field!r} contains a separator")
        lines.append(f"{audio}\t{text}\t{speaker}\t{vec_field}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
