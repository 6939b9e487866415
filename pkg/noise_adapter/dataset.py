"""Feature encoding, source-only standardization, splitting and JSONL persistence.

Feature vector layout (length 41):
  0 n_qubits, 1 depth, 2 CX-like count, 3 H count, 4 X count,
  5 mean T1, 6 mean T2, 7 readout error, 8 CX error   (standardized)
  9..40 noisy distribution padded to 32 entries     (raw probabilities)
"""
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .circuits import Circuit, CircuitSuite, GateCounts, gate_counts
from .device import DeviceProfile, calibration_features, jitter_profile
from .errors import DataIntegrityError, InsufficientDataError, ParameterError
from .qsim import (
    CountsMap,
    Distribution,
    GateDurations,
    build_channels,
    counts_to_distribution,
    ideal_distribution,
    noisy_distribution,
    sample_counts,
)

logger = logging.getLogger(__name__)

N_SCALARS = 9
PADDED_DIM = 32
FEATURE_DIM = N_SCALARS + PADDED_DIM
CALIBRATION_INDICES = (5, 6, 7, 8)
FEATURE_NAMES = (
    "n_qubits", "depth", "cx_count", "h_count", "x_count",
    "t1_us", "t2_us", "readout_error", "cx_error",
)
STD_FLOOR = 1e-8
TRAIN_FRACTION = 0.8
STANDARDIZE_MODES = ("all", "calibration")


@dataclass
class Sample:
    '''One (noisy, ideal) pair with provenance; x is set once a scaler is applied'''
    circuit_id: str
    family: str
    backend: str
    n_qubits: int
    depth: int
    gate_counts: GateCounts
    calibration: DeviceProfile
    shots: int
    noisy_counts: Dict[str, int]
    ideal_probs: np.ndarray
    raw_scalars: np.ndarray = field(init=False)
    noisy_padded: np.ndarray = field(init=False)
    y: np.ndarray = field(init=False)
    x: Optional[np.ndarray] = None

    def __post_init__(self):
        self.gate_counts = GateCounts(*self.gate_counts)
        self.ideal_probs = np.asarray(self.ideal_probs, dtype=np.float64)
        noisy = counts_to_distribution(CountsMap(dict(self.noisy_counts), self.shots, self.n_qubits), self.n_qubits)
        self.raw_scalars = np.array(
            [self.n_qubits, self.depth, *self.gate_counts, *calibration_features(self.calibration)],
            dtype=np.float64,
        )
        self.noisy_padded = pad_distribution(noisy)
        self.y = pad_distribution(Distribution(self.ideal_probs, self.n_qubits))

    def noisy_distribution(self) -> Distribution:
        return Distribution(self.noisy_padded[: 2 ** self.n_qubits], self.n_qubits)


@dataclass
class Scaler:
    '''Per-index mean/std of the 9 scalar features'''
    mean: np.ndarray
    std: np.ndarray
    mode: str = "all"
    fitted_on: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "mode": self.mode,
            "fitted_on": list(self.fitted_on),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scaler":
        scaler = cls(np.asarray(data["mean"], dtype=np.float64), np.asarray(data["std"], dtype=np.float64),
                     data.get("mode", "all"), list(data.get("fitted_on", [])))
        if scaler.mean.shape != (N_SCALARS,) or scaler.std.shape != (N_SCALARS,) or np.any(scaler.std <= 0):
            raise DataIntegrityError("scaler must hold 9 means and 9 positive stds")
        return scaler

    def fitted_backends(self) -> List[str]:
        return sorted({tag.split("/", 1)[0] for tag in self.fitted_on})


@dataclass
class SplitSpec:
    train_idx: List[int]
    val_idx: List[int]
    seed: int

    def to_dict(self) -> Dict[str, Any]:
        return {"train_idx": self.train_idx, "val_idx": self.val_idx, "seed": self.seed}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SplitSpec":
        return cls([int(i) for i in data["train_idx"]], [int(i) for i in data["val_idx"]], int(data["seed"]))


def pad_distribution(d: Distribution) -> np.ndarray:
    if d.n_qubits > 5:
        raise ParameterError(f"cannot pad a {d.n_qubits}-qubit distribution into {PADDED_DIM} entries")
    padded = np.zeros(PADDED_DIM, dtype=np.float64)
    padded[: 2 ** d.n_qubits] = d.probs
    return padded


def encode_raw_scalars(c: Circuit, p: DeviceProfile) -> np.ndarray:
    counts = gate_counts(c)
    return np.array([c.n_qubits, c.depth, *counts, *calibration_features(p)], dtype=np.float64)


def fit_scaler(samples: Sequence[Sample], mode: str = "all") -> Scaler:
    """Population mean/std over the given samples only (source-train).

    std is floored at 1e-8 so constant columns standardize to 0. In
    "calibration" mode indices 0..4 pass through unchanged.
    """
    if mode not in STANDARDIZE_MODES:
        raise ParameterError(f"standardize mode must be one of {STANDARDIZE_MODES}, got {mode!r}")
    if len(samples) < 2:
        raise InsufficientDataError(f"need at least 2 samples to fit a scaler, got {len(samples)}")
    raw = np.stack([s.raw_scalars for s in samples])
    mean = raw.mean(axis=0)
    # pin constant columns to their exact value so they standardize to exactly 0
    constant = np.all(raw == raw[0], axis=0)
    mean[constant] = raw[0, constant]
    std = np.maximum(raw.std(axis=0), STD_FLOOR)
    if mode == "calibration":
        mean[:5] = 0.0
        std[:5] = 1.0
    return Scaler(mean, std, mode, [f"{s.backend}/{s.circuit_id}" for s in samples])


def apply_scaler(raw: np.ndarray, s: Scaler, noisy_padded: np.ndarray) -> np.ndarray:
    x = np.empty(FEATURE_DIM, dtype=np.float64)
    x[:N_SCALARS] = (raw - s.mean) / s.std
    x[N_SCALARS:] = noisy_padded
    return x


def encode_samples(samples: Iterable[Sample], scaler: Scaler) -> List[Sample]:
    '''Second pass of the dataset build: attach standardized feature vectors'''
    return [replace(s, x=apply_scaler(s.raw_scalars, scaler, s.noisy_padded)) for s in samples]


def split_train_val(n: int, seed: int) -> SplitSpec:
    '''Seeded shuffle of 0..n-1; the first floor(0.8 n) go to train'''
    if n < 2:
        raise ParameterError(f"need at least 2 samples to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(TRAIN_FRACTION * n))
    return SplitSpec(sorted(int(i) for i in order[:n_train]), sorted(int(i) for i in order[n_train:]), seed)


def build_dataset(
    suite: CircuitSuite,
    profile: DeviceProfile,
    shots: int,
    rng: np.random.Generator,
    durations: GateDurations = GateDurations(),
    jitter_sigma: float = 0.0,
) -> List[Sample]:
    """Simulate every circuit of the suite on one device.

    Returns raw samples (x unset); call encode_samples with a scaler fitted on
    source-train samples to finish the build.
    """
    channels = build_channels(profile, durations)
    samples = []
    for circuit in suite.circuits:
        device = jitter_profile(profile, jitter_sigma, rng)
        ch = channels if device is profile else build_channels(device, durations)
        counts = sample_counts(noisy_distribution(circuit, ch), shots, rng)
        samples.append(
            Sample(
                circuit_id=circuit.id,
                family=circuit.family.value,
                backend=profile.name,
                n_qubits=circuit.n_qubits,
                depth=circuit.depth,
                gate_counts=gate_counts(circuit),
                calibration=device,
                shots=shots,
                noisy_counts=counts.counts,
                ideal_probs=ideal_distribution(circuit).probs,
            )
        )
    logger.info(f"Built {len(samples)} samples for backend {profile.name} ({shots} shots each)")
    return samples


def _sample_to_record(s: Sample) -> Dict[str, Any]:
    return {
        "circuit_id": s.circuit_id,
        "family": s.family,
        "backend": s.backend,
        "n_qubits": s.n_qubits,
        "depth": s.depth,
        "gate_counts": {"cx": s.gate_counts.cx_like, "h": s.gate_counts.h, "x": s.gate_counts.x},
        "calibration": {
            "t1_us": s.calibration.t1_us,
            "t2_us": s.calibration.t2_us,
            "readout_error": s.calibration.readout_error,
            "cx_error": s.calibration.cx_error,
        },
        "shots": s.shots,
        "noisy_counts": {bits: s.noisy_counts[bits] for bits in sorted(s.noisy_counts)},
        "ideal_probs": [float(p) for p in s.ideal_probs],
    }


def _record_to_sample(record: Dict[str, Any]) -> Sample:
    n = int(record["n_qubits"])
    ideal = np.asarray(record["ideal_probs"], dtype=np.float64)
    if ideal.shape != (2 ** n,):
        raise DataIntegrityError(f"ideal_probs has {ideal.size} entries, expected {2 ** n}")
    if np.any(ideal < 0) or abs(ideal.sum() - 1.0) > 1e-9:
        raise DataIntegrityError("ideal_probs is not a probability distribution")
    counts = {str(k): int(v) for k, v in record["noisy_counts"].items()}
    if sum(counts.values()) != int(record["shots"]):
        raise DataIntegrityError(f"noisy_counts sum to {sum(counts.values())}, expected {record['shots']}")
    gc = record["gate_counts"]
    cal = record["calibration"]
    return Sample(
        circuit_id=str(record["circuit_id"]),
        family=str(record["family"]),
        backend=str(record["backend"]),
        n_qubits=n,
        depth=int(record["depth"]),
        gate_counts=GateCounts(int(gc["cx"]), int(gc["h"]), int(gc["x"])),
        calibration=DeviceProfile(name=str(record["backend"]), **cal),
        shots=int(record["shots"]),
        noisy_counts=counts,
        ideal_probs=ideal,
    )


def write_jsonl(path: Union[str, Path], samples: Sequence[Sample]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        for s in samples:
            f.write(json.dumps(_sample_to_record(s), separators=(",", ":")) + "\n")
    logger.debug(f"Wrote {len(samples)} samples to {path}")


def read_jsonl(path: Union[str, Path]) -> List[Sample]:
    path = Path(path)
    if not path.exists():
        raise DataIntegrityError("file not found; run the producing stage first", location=str(path))
    samples = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                samples.append(_record_to_sample(json.loads(line)))
            except DataIntegrityError as e:
                raise DataIntegrityError(e.message, location=f"{path}:{lineno}") from e
            except (KeyError, TypeError, ValueError) as e:
                raise DataIntegrityError(f"malformed sample record: {e}", location=f"{path}:{lineno}") from e
    return samples


def stack_features(samples: Sequence[Sample]) -> np.ndarray:
    if any(s.x is None for s in samples):
        raise ParameterError("samples must be encoded with a scaler before use")
    return np.stack([s.x for s in samples])


def stack_targets(samples: Sequence[Sample]) -> np.ndarray:
    return np.stack([s.y for s in samples])
