"""Benchmark circuit suite: Random, Bell, GHZ and QFT families.

Circuits are plain gate lists over the vocabulary {H, X, CX, CP}. Every
generator is a pure function of its arguments; randomness only enters
through an explicitly passed numpy Generator.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from .errors import DataIntegrityError, ParameterError

logger = logging.getLogger(__name__)

# generators use 2..5 qubits; single-qubit circuits are accepted for simulator checks
MIN_WIDTH = 1
MIN_QUBITS = 2
MAX_QUBITS = 5
MIN_DEPTH = 2
MAX_DEPTH = 8
VARIANTS_PER_FAMILY = 15
N_RANDOM = 40

P_CX_LAYER = 0.5
P_H = 0.35
P_X = 0.35


class GateKind(str, Enum):
    H = "H"
    X = "X"
    CX = "CX"
    CP = "CP"


class Family(str, Enum):
    RANDOM = "Random"
    BELL = "Bell"
    GHZ = "GHZ"
    QFT = "QFT"


_ARITY = {GateKind.H: 1, GateKind.X: 1, GateKind.CX: 2, GateKind.CP: 2}


@dataclass(frozen=True)
class Gate:
    '''One gate application; qubits are (control, target) for CX/CP'''
    kind: GateKind
    qubits: Tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != _ARITY[self.kind]:
            raise ParameterError(f"{self.kind.value} acts on {_ARITY[self.kind]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits) or min(self.qubits) < 0:
            raise ParameterError(f"invalid qubit indices {self.qubits}")
        if not math.isfinite(self.angle):
            raise ParameterError("gate angle must be finite")
        if self.kind is not GateKind.CP and self.angle != 0.0:
            raise ParameterError(f"{self.kind.value} takes no angle")

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) == 2

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "qubits": list(self.qubits), "angle": self.angle}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Gate":
        return cls(GateKind(data["kind"]), tuple(data["qubits"]), float(data.get("angle", 0.0)))


def H(q: int) -> Gate:
    return Gate(GateKind.H, (q,))


def X(q: int) -> Gate:
    return Gate(GateKind.X, (q,))


def CX(control: int, target: int) -> Gate:
    return Gate(GateKind.CX, (control, target))


def CP(control: int, target: int, angle: float) -> Gate:
    return Gate(GateKind.CP, (control, target), float(angle))


@dataclass(frozen=True)
class Circuit:
    '''Gate sequence with family tag; depth is derived from the gates'''
    id: str
    family: Family
    n_qubits: int
    gates: Tuple[Gate, ...]
    depth: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "gates", tuple(self.gates))
        if not MIN_WIDTH <= self.n_qubits <= MAX_QUBITS:
            raise ParameterError(f"n_qubits must be in {MIN_WIDTH}..{MAX_QUBITS}, got {self.n_qubits}")
        for gate in self.gates:
            if max(gate.qubits) >= self.n_qubits:
                raise ParameterError(f"gate {gate} exceeds circuit width {self.n_qubits}")
        object.__setattr__(self, "depth", _greedy_depth(self.gates, self.n_qubits))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "family": self.family.value,
            "n_qubits": self.n_qubits,
            "depth": self.depth,
            "gates": [g.to_dict() for g in self.gates],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Circuit":
        circuit = cls(
            id=data["id"],
            family=Family(data["family"]),
            n_qubits=int(data["n_qubits"]),
            gates=tuple(Gate.from_dict(g) for g in data["gates"]),
        )
        if "depth" in data and int(data["depth"]) != circuit.depth:
            raise DataIntegrityError(f"circuit {circuit.id}: stored depth {data['depth']} != computed {circuit.depth}")
        return circuit


@dataclass(frozen=True)
class CircuitSuite:
    '''The full benchmark suite, generated from one seed'''
    circuits: Tuple[Circuit, ...]
    seed: int

    def by_family(self) -> Dict[Family, List[Circuit]]:
        groups: Dict[Family, List[Circuit]] = {f: [] for f in Family}
        for circuit in self.circuits:
            groups[circuit.family].append(circuit)
        return groups

    def __len__(self) -> int:
        return len(self.circuits)


class GateCounts(NamedTuple):
    cx_like: int
    h: int
    x: int


def _greedy_depth(gates: Sequence[Gate], n_qubits: int) -> int:
    frontier = [0] * n_qubits
    for gate in gates:
        layer = max(frontier[q] for q in gate.qubits) + 1
        for q in gate.qubits:
            frontier[q] = layer
    return max(frontier, default=0)


def compute_depth(c: Circuit) -> int:
    '''Greedy moment count: each gate goes to the earliest layer where its qubits are free'''
    return _greedy_depth(c.gates, c.n_qubits)


def gate_counts(c: Circuit) -> GateCounts:
    cx_like = sum(1 for g in c.gates if g.kind in (GateKind.CX, GateKind.CP))
    h = sum(1 for g in c.gates if g.kind is GateKind.H)
    x = sum(1 for g in c.gates if g.kind is GateKind.X)
    return GateCounts(cx_like, h, x)


def _check_variant(variant: int) -> None:
    if not 0 <= variant < VARIANTS_PER_FAMILY:
        raise ParameterError(f"variant must be in 0..{VARIANTS_PER_FAMILY - 1}, got {variant}")


def _variant_width(variant: int) -> int:
    return MIN_QUBITS + variant % (MAX_QUBITS - MIN_QUBITS + 1)


def _draw_layer(n_qubits: int, rng: np.random.Generator) -> List[Gate]:
    layer: List[Gate] = []
    busy = set()
    if rng.random() < P_CX_LAYER:
        control, target = (int(q) for q in rng.choice(n_qubits, size=2, replace=False))
        layer.append(CX(control, target))
        busy.update((control, target))
    for q in range(n_qubits):
        if q in busy:
            continue
        u = rng.random()
        if u < P_H:
            layer.append(H(q))
        elif u < P_H + P_X:
            layer.append(X(q))
    return layer


def gen_random(n_qubits: int, depth: int, rng: np.random.Generator, circuit_id: str = "rand") -> Circuit:
    """Random layered circuit over {H, X, CX} with exactly `depth` greedy layers.

    A drawn layer that would not deepen the circuit (empty, or only touching
    idle qubits that greedy layering would pull earlier) is redrawn from the
    same stream.
    """
    if not MIN_QUBITS <= n_qubits <= MAX_QUBITS:
        raise ParameterError(f"n_qubits must be in {MIN_QUBITS}..{MAX_QUBITS}, got {n_qubits}")
    if not MIN_DEPTH <= depth <= MAX_DEPTH:
        raise ParameterError(f"depth must be in {MIN_DEPTH}..{MAX_DEPTH}, got {depth}")

    gates: List[Gate] = []
    frontier = [0] * n_qubits
    for target_depth in range(1, depth + 1):
        while True:
            layer = _draw_layer(n_qubits, rng)
            candidate = list(frontier)
            for gate in layer:
                level = max(candidate[q] for q in gate.qubits) + 1
                for q in gate.qubits:
                    candidate[q] = level
            if layer and max(candidate) == target_depth:
                break
        gates.extend(layer)
        frontier = candidate
    return Circuit(circuit_id, Family.RANDOM, n_qubits, tuple(gates))


def gen_bell(variant: int) -> Circuit:
    '''Bell pair on (0, 1); spectator qubit j gets X iff bit j-2 of the variant is set'''
    _check_variant(variant)
    n = _variant_width(variant)
    gates = [H(0), CX(0, 1)]
    for j in range(2, n):
        if (variant >> (j - 2)) & 1:
            gates.append(X(j))
    return Circuit(f"bell-{variant:03d}", Family.BELL, n, tuple(gates))


def gen_ghz(variant: int) -> Circuit:
    _check_variant(variant)
    n = _variant_width(variant)
    gates = [H(0)] + [CX(q, q + 1) for q in range(n - 1)]
    return Circuit(f"ghz-{variant:03d}", Family.GHZ, n, tuple(gates))


def gen_qft(variant: int, rng: np.random.Generator) -> Circuit:
    """Random X-prep layer followed by the QFT without the final swaps.

    Output order is bit-reversed; for basis-state inputs the ideal output is
    uniform either way.
    """
    _check_variant(variant)
    n = _variant_width(variant)
    gates: List[Gate] = [X(q) for q in range(n) if rng.random() < 0.5]
    for j in range(n):
        gates.append(H(j))
        for k in range(j + 1, n):
            gates.append(CP(k, j, math.pi / 2 ** (k - j)))
    return Circuit(f"qft-{variant:03d}", Family.QFT, n, tuple(gates))


def generate_suite(seed: int) -> CircuitSuite:
    '''40 Random, then Bell/GHZ/QFT variants 0..14, all from one seeded stream'''
    rng = np.random.default_rng(seed)
    circuits: List[Circuit] = []
    for i in range(N_RANDOM):
        n = int(rng.integers(MIN_QUBITS, MAX_QUBITS + 1))
        depth = int(rng.integers(MIN_DEPTH, MAX_DEPTH + 1))
        circuits.append(gen_random(n, depth, rng, circuit_id=f"rand-{i:03d}"))
    circuits.extend(gen_bell(v) for v in range(VARIANTS_PER_FAMILY))
    circuits.extend(gen_ghz(v) for v in range(VARIANTS_PER_FAMILY))
    circuits.extend(gen_qft(v, rng) for v in range(VARIANTS_PER_FAMILY))

    suite = CircuitSuite(tuple(circuits), seed)
    logger.debug(f"Generated suite seed={seed} with {len(suite)} circuits")
    return suite


def save_suite(suite: CircuitSuite, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"seed": suite.seed, "circuits": [c.to_dict() for c in suite.circuits]}
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_suite(path: Union[str, Path]) -> CircuitSuite:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        circuits = tuple(Circuit.from_dict(c) for c in payload["circuits"])
    except FileNotFoundError:
        raise DataIntegrityError("file not found; run the producing stage first", location=str(path)) from None
    except (KeyError, TypeError, ValueError, DataIntegrityError) as e:
        raise DataIntegrityError(f"cannot parse circuit manifest: {e}", location=str(path)) from e
    return CircuitSuite(circuits, int(payload["seed"]))
