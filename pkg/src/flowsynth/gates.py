"""Exact gate algebra for n-qubit unitaries.

Convention used everywhere in this package:
  * qubit 0 is the *leftmost* (most significant) tensor factor;
  * basis states are ordered |q0 q1 ... q_{n-1}>, so the bit of qubit q
    inside basis index i is ``(i >> (n - 1 - q)) & 1``;
  * appending a gate ``a`` to a circuit with matrix ``V`` yields ``a @ V``
    (the new gate acts after the existing circuit).

All matrices are dense ``complex128`` ndarrays of shape (2^n, 2^n).
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .errors import ConfigurationError, ValidationError

UNITARITY_TOL = 1e-9

_S2 = 1.0 / math.sqrt(2.0)

# Base matrices. Multi-qubit gates are written in the sub-space basis given by
# the stored qubit order, e.g. CNOT rows/cols are |control target>.
_CATALOG: dict[str, np.ndarray] = {
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=np.complex128),
    "X": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "Z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    "S": np.array([[1, 0], [0, 1j]], dtype=np.complex128),
    "T": np.array([[1, 0], [0, np.exp(1j * np.pi / 4)]], dtype=np.complex128),
    "CNOT": np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
        dtype=np.complex128,
    ),
    "SWAP": np.array(
        [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]],
        dtype=np.complex128,
    ),
}
_CATALOG["S†"] = _CATALOG["S"].conj().T
_CATALOG["T†"] = _CATALOG["T"].conj().T
_ccnot = np.eye(8, dtype=np.complex128)
_ccnot[[6, 7]] = _ccnot[[7, 6]]
_CATALOG["CCNOT"] = _ccnot
del _ccnot

# Accepted spellings for the daggered gates (CLI / JSON convenience).
_ALIASES = {"SDG": "S†", "TDG": "T†", "S+": "S†", "T+": "T†"}

# Placement symmetry of each catalog gate: "single" one qubit, "pair" ordered
# (control, target), "sym_pair" unordered, "ccx" two symmetric controls + target.
_PLACEMENT = {
    "H": "single", "X": "single", "Z": "single", "S": "single",
    "S†": "single", "T": "single", "T†": "single",
    "CNOT": "pair", "SWAP": "sym_pair", "CCNOT": "ccx",
}

G1_MEMBERS = ("H", "Z", "S", "S†", "T", "T†", "CNOT")
G2_MEMBERS = ("H", "X", "Z", "CNOT", "CCNOT", "SWAP")


def normalize_gate_name(name: str) -> str:
    """Map accepted spellings (``Sdg``, ``cx``, ...) onto canonical catalog names."""
    if name in _CATALOG:
        return name
    upper = name.upper()
    if upper in _ALIASES:
        return _ALIASES[upper]
    if upper == "CX":
        return "CNOT"
    if upper in _CATALOG:
        return upper
    return name


@dataclass(frozen=True)
class GateSet:
    """A named discrete gate basis.

    ``custom_matrices`` lets callers declare extra base gates (power of two
    sized unitaries); catalog names always resolve first.
    """

    name: str
    members: tuple[str, ...]
    custom_matrices: dict[str, np.ndarray] | None = None

    def __post_init__(self):
        for m in self.members:
            self.base_matrix(m)  # raises on unknown names

    def base_matrix(self, gate_name: str) -> np.ndarray:
        if gate_name in _CATALOG:
            return _CATALOG[gate_name].copy()
        if self.custom_matrices and gate_name in self.custom_matrices:
            m = np.asarray(self.custom_matrices[gate_name], dtype=np.complex128)
            if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] & (m.shape[0] - 1):
                raise ConfigurationError(f"custom gate {gate_name!r} is not a square power-of-two matrix")
            return m
        raise ConfigurationError(f"unknown gate name {gate_name!r}")

    def arity(self, gate_name: str) -> int:
        return int(round(math.log2(self.base_matrix(gate_name).shape[0])))

    def placement(self, gate_name: str) -> str:
        if gate_name in _PLACEMENT:
            return _PLACEMENT[gate_name]
        return {1: "single", 2: "pair"}.get(self.arity(gate_name), "tuple")


def gate_set(name: str, members=None, custom_matrices=None) -> GateSet:
    """Build one of the two standard sets, or a custom set from ``members``."""
    if name == "G1":
        return GateSet("G1", G1_MEMBERS)
    if name == "G2":
        return GateSet("G2", G2_MEMBERS)
    if members is None:
        raise ConfigurationError(f"unknown gate set {name!r} (expected G1, G2, or custom members)")
    return GateSet(name, tuple(normalize_gate_name(m) for m in members), custom_matrices)


def base_matrix(gate_name: str) -> np.ndarray:
    """The exact base matrix of a catalog gate."""
    name = normalize_gate_name(gate_name)
    if name not in _CATALOG:
        raise ConfigurationError(f"unknown gate name {gate_name!r}")
    return _CATALOG[name].copy()


@dataclass(frozen=True)
class GateInstance:
    """A base gate bound to ordered qubit indices.

    For SWAP and for the two controls of CCNOT the stored order is ascending;
    that canonical form is what enumeration and (de)serialization use.
    """

    gate_name: str
    qubits: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.qubits)) != len(self.qubits):
            raise ValidationError(f"duplicate qubit in {self}")
        # symmetry canonicalization
        if self.gate_name == "SWAP":
            object.__setattr__(self, "qubits", tuple(sorted(self.qubits)))
        elif self.gate_name == "CCNOT" and len(self.qubits) == 3:
            c1, c2, t = self.qubits
            object.__setattr__(self, "qubits", tuple(sorted((c1, c2))) + (t,))

    def validate(self, gs: GateSet, n: int) -> None:
        if self.gate_name not in gs.members:
            raise ValidationError(f"{self.gate_name!r} is not in gate set {gs.name}")
        if len(self.qubits) != gs.arity(self.gate_name):
            raise ValidationError(f"{self} has wrong arity for {self.gate_name}")
        if any(q < 0 or q >= n for q in self.qubits):
            raise ValidationError(f"{self} has qubit index out of range for n={n}")


def num_qubits(matrix: np.ndarray) -> int:
    d = matrix.shape[0]
    n = int(round(math.log2(d)))
    if matrix.shape != (d, d) or 2**n != d:
        raise ValidationError(f"matrix shape {matrix.shape} is not (2^n, 2^n)")
    return n


def unitarity_defect(matrix: np.ndarray) -> float:
    """Max-norm of M M† − I."""
    d = matrix.shape[0]
    return float(np.max(np.abs(matrix @ matrix.conj().T - np.eye(d))))


def assert_unitary(matrix: np.ndarray, tol: float = UNITARITY_TOL) -> None:
    defect = unitarity_defect(matrix)
    if defect > tol:
        raise ValidationError(f"matrix is not unitary (defect {defect:.3e} > {tol:.1e})")


def dagger(matrix: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return matrix.conj().T.copy()


def fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """|tr(U† V)| / d — global-phase-invariant similarity in [0, 1]."""
    if u.shape != v.shape:
        raise ValidationError(f"dimension mismatch: {u.shape} vs {v.shape}")
    d = u.shape[0]
    return float(np.abs(np.trace(u.conj().T @ v)) / d)


def embed_gate(gate: GateInstance, n: int, gs: GateSet | None = None) -> np.ndarray:
    """Embed a gate into the full 2^n-dimensional space.

    The result acts as the base matrix on ``gate.qubits`` (in their stored
    order) and as identity on every other qubit.
    """
    gs = gs if gs is not None else GateSet("catalog", (gate.gate_name,))
    g = gs.base_matrix(gate.gate_name)
    k = len(gate.qubits)
    if g.shape[0] != 2**k:
        raise ValidationError(f"{gate} qubit count does not match gate arity")
    if any(q < 0 or q >= n for q in gate.qubits):
        raise ValidationError(f"{gate} has qubit index out of range for n={n}")

    rest = [q for q in range(n) if q not in gate.qubits]
    d = 2**n
    out = np.zeros((d, d), dtype=np.complex128)
    # Bit position of qubit q inside a basis index (qubit 0 is the MSB).
    shift = [n - 1 - q for q in gate.qubits]
    rest_shift = [n - 1 - q for q in rest]
    for a in range(2**k):
        i0 = sum(((a >> (k - 1 - t)) & 1) << shift[t] for t in range(k))
        for b in range(2**k):
            if g[a, b] == 0:
                continue
            j0 = sum(((b >> (k - 1 - t)) & 1) << shift[t] for t in range(k))
            for m in range(2 ** len(rest)):
                off = sum(((m >> (len(rest) - 1 - t)) & 1) << rest_shift[t] for t in range(len(rest)))
                out[i0 + off, j0 + off] = g[a, b]
    return out


@dataclass(frozen=True)
class ActionSpace:
    """The deterministic enumeration of every legal gate placement.

    Order: gates in the set's listed order, placements in lexicographic order
    of the canonical qubit tuple.
    """

    gate_set: GateSet
    n: int
    actions: tuple[GateInstance, ...]
    _index: dict[GateInstance, int] = field(repr=False, compare=False, default_factory=dict)
    _matrices: list = field(repr=False, compare=False, default_factory=list)

    def __len__(self) -> int:
        return len(self.actions)

    def index(self, action: GateInstance) -> int:
        return self._index[action]

    @property
    def matrices(self) -> np.ndarray:
        """Embedded d×d matrices, one per action, cached. Shape (|A|, d, d)."""
        if not self._matrices:
            mats = np.stack([embed_gate(a, self.n, self.gate_set) for a in self.actions])
            self._matrices.append(mats)
        return self._matrices[0]

    def sha256(self) -> str:
        """Stable fingerprint of (gate set, n, enumeration) for checkpoint checks."""
        payload = "|".join(
            [self.gate_set.name, str(self.n)]
            + [f"{a.gate_name}:{','.join(map(str, a.qubits))}" for a in self.actions]
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _placements(kind: str, n: int) -> list[tuple[int, ...]]:
    if kind == "single":
        return [(q,) for q in range(n)]
    if kind == "pair":
        return [p for p in permutations(range(n), 2)]
    if kind == "sym_pair":
        return [c for c in combinations(range(n), 2)]
    if kind == "ccx":
        # (c1, c2, target) with c1 < c2, lexicographic over the stored tuple.
        out = []
        for c1, c2 in combinations(range(n), 2):
            for t in range(n):
                if t != c1 and t != c2:
                    out.append((c1, c2, t))
        return sorted(out)
    # generic k-ary fallback: all ordered distinct tuples
    raise ConfigurationError(f"no placement rule for kind {kind!r}")


def action_space(gs: GateSet, n: int, allow_arity_pruning: bool = False) -> ActionSpace:
    """Enumerate the action set for ``gs`` on ``n`` qubits.

    Gates whose arity exceeds ``n`` raise unless ``allow_arity_pruning`` is
    set, in which case they are silently dropped.
    """
    actions: list[GateInstance] = []
    for name in gs.members:
        arity = gs.arity(name)
        if arity > n:
            if allow_arity_pruning:
                continue
            raise ConfigurationError(
                f"gate {name!r} needs {arity} qubits but n={n}; "
                f"pass allow_arity_pruning=True to drop it"
            )
        for qubits in _placements(gs.placement(name), n):
            actions.append(GateInstance(name, qubits))
    if len(set(actions)) != len(actions):
        raise ConfigurationError("duplicate actions after canonicalization")
    space = ActionSpace(gs, n, tuple(actions))
    space._index.update({a: i for i, a in enumerate(actions)})
    return space


def circuit_matrix(circuit, n: int, gs: GateSet | None = None) -> np.ndarray:
    """Ordered product of embedded gates; later gates multiply on the left."""
    m = np.eye(2**n, dtype=np.complex128)
    for g in circuit:
        m = embed_gate(g, n, gs) @ m
    return m


def random_target(depth: int, gs: GateSet, n: int, rng: np.random.Generator,
                  space: ActionSpace | None = None):
    """A random circuit of exactly ``depth`` uniform actions and its unitary.

    The depth is an upper bound on the minimal length, not the minimal length
    itself. Returns ``(matrix, circuit)``.
    """
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    space = space if space is not None else action_space(gs, n)
    idxs = rng.integers(0, len(space), size=depth)
    circuit = [space.actions[i] for i in idxs]
    m = np.eye(2**n, dtype=np.complex128)
    for i in idxs:
        m = space.matrices[i] @ m
    return m, circuit


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def circuit_to_json(circuit, n: int) -> str:
    """One-line JSON form: {"gates":[{"g":"CNOT","q":[0,1]},...], "n":2}."""
    return json.dumps(
        {"gates": [{"g": g.gate_name, "q": list(g.qubits)} for g in circuit], "n": n},
        ensure_ascii=False,
    )


def circuit_from_json(text: str):
    """Inverse of circuit_to_json; returns (circuit, n)."""
    obj = json.loads(text)
    circuit = [GateInstance(normalize_gate_name(e["g"]), tuple(e["q"])) for e in obj["gates"]]
    return circuit, int(obj["n"])


def matrix_to_json(matrix: np.ndarray) -> str:
    """Row-major list of [re, im] pairs plus the qubit count."""
    n = num_qubits(matrix)
    flat = [[float(z.real), float(z.imag)] for z in matrix.ravel()]
    return json.dumps({"n": n, "matrix": flat})


def matrix_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    n = int(obj["n"])
    d = 2**n
    flat = np.array([complex(re, im) for re, im in obj["matrix"]], dtype=np.complex128)
    if flat.size != d * d:
        raise ValidationError(f"matrix payload has {flat.size} entries, expected {d * d}")
    return flat.reshape(d, d)
