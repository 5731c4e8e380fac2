"""Reading and writing vibration signals as WAV or CSV files.

WAV files are mono, 16-bit PCM or 32-bit float. The CSV format is a
`sample_rate=<int>` header line followed by one amplitude per line.
Signal ids default to the file stem.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import InvalidInputError
from .signals import Origin, SignalProvenance, VibrationSignal

_PCM16_SCALE = 32767.0


def read_signal(path, signal_id: str | None = None) -> VibrationSignal:
    """Load a WAV or CSV signal; the format is chosen by file extension."""
    path = Path(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path, signal_id)
    if path.suffix.lower() == ".csv":
        return read_csv(path, signal_id)
    raise InvalidInputError(f"unsupported signal file type: {path.name}")


def read_wav(path, signal_id: str | None = None) -> VibrationSignal:
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise InvalidInputError(f"cannot read WAV {path}: {exc}") from exc
    if data.ndim != 1:
        raise InvalidInputError(f"{path.name}: expected mono WAV, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise InvalidInputError(f"{path.name}: unsupported WAV sample format {data.dtype}")
    return VibrationSignal(
        id=signal_id or path.stem,
        samples=np.clip(samples, -1.0, 1.0),
        sample_rate=int(rate),
        provenance=SignalProvenance(Origin.IMPORTED, op_tag=f"read:{path.name}"),
    )


def write_wav(path, signal: VibrationSignal, float32: bool = True) -> None:
    path = Path(path)
    if float32:
        wavfile.write(path, signal.sample_rate, signal.samples.astype(np.float32))
    else:
        pcm = np.round(signal.samples * _PCM16_SCALE).astype(np.int16)
        wavfile.write(path, signal.sample_rate, pcm)


def read_csv(path, signal_id: str | None = None) -> VibrationSignal:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("sample_rate="):
        raise InvalidInputError(f"{path.name}: missing 'sample_rate=<int>' header")
    try:
        rate = int(lines[0].split("=", 1)[1])
    except ValueError as exc:
        raise InvalidInputError(f"{path.name}: bad sample rate {lines[0]!r}") from exc
    try:
        samples = np.array([float(v) for v in lines[1:] if v.strip()], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInputError(f"{path.name}: non-numeric amplitude: {exc}") from exc
    return VibrationSignal(
        id=signal_id or path.stem,
        samples=samples,
        sample_rate=rate,
        provenance=SignalProvenance(Origin.IMPORTED, op_tag=f"read:{path.name}"),
    )


def write_csv(path, signal: VibrationSignal) -> None:
    path = Path(path)
    lines = [f"sample_rate={signal.sample_rate}"]
    lines.extend(repr(float(v)) for v in signal.samples)
    path.write_text("\n".join(lines) + "\n")


def load_signal_dir(directory) -> list[VibrationSignal]:
    """Load every .wav/.csv signal in a directory, sorted by file name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"not a directory: {directory}")
    out = []
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in (".wav", ".csv"):
            out.append(read_signal(path))
    return out
