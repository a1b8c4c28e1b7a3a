"""Error sampling: phenomenological noise and a gate-level syndrome circuit.

Only the Z-error / X-check sector is decoded.  Records hold one bit per
X check, that is per ``(d2-1)``-cell, and per round.  Round ``t`` reports
the syndrome of all qubit errors up to and including round ``t``, plus any
measurement error of that round.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .code import CssCode

# ---------------------------------------------------------------------------
# records


@dataclass
class ErrorHistory:
    """Per-round qubit Z errors ``(T, n_qubits)`` and measurement errors ``(T, n_checks)``."""

    qubit_errors: np.ndarray
    meas_errors: np.ndarray

    @property
    def rounds(self) -> int:
        return self.qubit_errors.shape[0]

    def total_qubit_error(self) -> np.ndarray:
        return (np.bitwise_xor.reduce(self.qubit_errors, axis=0)).astype(np.uint8)


_MAGIC = b"TRGM"
_VERSION = 1


@dataclass
class MeasurementRecord:
    """Outcome bits ``(T, n_checks)`` of the X checks, relative to the noiseless run.

    Binary layout (little endian)::

        4s   magic "TRGM"
        B    format version (1)
        B    D, lattice dimension
        B    d1
        B    d2
        B    final round perfect (0/1)
        D*H  lengths
        I    T, rounds
        I    number of checks per round
        ...  T*n_checks bits, row-major, packed 8 per byte, least significant bit first
    """

    outcomes: np.ndarray
    final_round_perfect: bool = True
    d1: int = 0
    d2: int = 0
    lengths: tuple[int, ...] = ()

    def __post_init__(self):
        self.outcomes = np.atleast_2d(np.asarray(self.outcomes, dtype=np.uint8) & 1)

    @property
    def rounds(self) -> int:
        return self.outcomes.shape[0]

    @property
    def num_checks(self) -> int:
        return self.outcomes.shape[1]

    def to_bytes(self) -> bytes:
        D = len(self.lengths)
        head = struct.pack(
            f"<4sBBBBB{D}HII", _MAGIC, _VERSION, D, self.d1, self.d2, int(self.final_round_perfect),
            *self.lengths, self.rounds, self.num_checks,
        )
        body = np.packbits(self.outcomes.ravel(), bitorder="little").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, data: bytes) -> "MeasurementRecord":
        if len(data) < 9 or data[:4] != _MAGIC:
            raise ValueError("not a measurement record (bad magic)")
        version, D, d1, d2, final = struct.unpack_from("<BBBBB", data, 4)
        if version != _VERSION:
            raise ValueError(f"unsupported record version {version}")
        off = 9
        if len(data) < off + 2 * D + 8:
            raise ValueError(f"truncated record header ({len(data)} bytes)")
        lengths = struct.unpack_from(f"<{D}H", data, off)
        off += 2 * D
        T, n = struct.unpack_from("<II", data, off)
        off += 8
        nbits = T * n
        body = np.frombuffer(data, dtype=np.uint8, offset=off)
        if body.size != (nbits + 7) // 8:
            raise ValueError(f"record body has {body.size} bytes, expected {(nbits + 7) // 8}")
        bits = np.unpackbits(body, bitorder="little")[:nbits].reshape(T, n)
        return cls(bits, bool(final), d1, d2, tuple(lengths))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "MeasurementRecord":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def _record(code: CssCode, outcomes: np.ndarray, final_round_perfect: bool) -> MeasurementRecord:
    lat = code.lattice
    lengths = lat.lengths if lat.lengths is not None else lat.extents
    return MeasurementRecord(outcomes, final_round_perfect, lat.d1, lat.d2, tuple(int(x) for x in lengths))


def _check_probability(name: str, p: float) -> None:
    if not (0.0 <= p <= 1.0) or p != p:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


# ---------------------------------------------------------------------------
# phenomenological noise


def sample_phenomenological(
    code: CssCode, p: float, q: float, T: int, rng: np.random.Generator, final_round_perfect: bool = True
) -> tuple[ErrorHistory, MeasurementRecord]:
    """Independent Z flips (rate ``p``) on every qubit before every round and
    outcome flips (rate ``q``) on every check, except in a perfect last round."""
    _check_probability("p", p)
    _check_probability("q", q)
    if T < 1:
        raise ValueError(f"need at least one round, got T={T}")
    lat = code.lattice
    nq, ne = lat.counts[lat.d2], lat.counts[lat.d2 - 1]
    qerr = (rng.random((T, nq)) < p).astype(np.uint8)
    merr = (rng.random((T, ne)) < q).astype(np.uint8)
    if final_round_perfect:
        merr[-1] = 0
    cum = np.bitwise_xor.accumulate(qerr, axis=0)
    sigma = np.stack([lat.boundary_dense(lat.d2, cum[t]) for t in range(T)])
    return ErrorHistory(qerr, merr), _record(code, sigma ^ merr, final_round_perfect)


# ---------------------------------------------------------------------------
# gate schedule

ROUND_ORDER = ((1, 0), (1, 1), (1, 2), (1, 3), (0, 3), (0, 2), (0, 1), (0, 0))
"""Round labels ``(n, s)`` for the direction ``(-1)^n a_s`` (0-based ``s``)."""

EDGE, CUBE = 0, 1


@dataclass
class Schedule:
    """CNOT rounds of one syndrome-extraction cycle.

    ``rounds[r]`` is an ``(m, 3)`` array of ``(kind, ancilla, face)`` with
    ``kind`` EDGE (ancilla is the control) or CUBE (ancilla is the target).
    """

    order: tuple[tuple[int, int], ...]
    rounds: list[np.ndarray]
    num_faces: int
    num_edges: int
    num_cubes: int
    idle: list[np.ndarray] = field(default_factory=list)

    def cnot_counts(self) -> np.ndarray:
        """Number of CNOTs each face takes part in over a cycle."""
        cnt = np.zeros(self.num_faces, dtype=np.int64)
        for r in self.rounds:
            np.add.at(cnt, r[:, 2], 1)
        return cnt

    def round_of(self) -> tuple[dict, dict]:
        """Maps ``(edge, face)`` and ``(cube, face)`` to their round position."""
        edge, cube = {}, {}
        for pos, r in enumerate(self.rounds):
            for kind, a, f in r.tolist():
                (edge if kind == EDGE else cube)[(a, f)] = pos
        return edge, cube


def _is_tesseract(code: CssCode) -> bool:
    lat = code.lattice
    return lat.D == 4 and lat.d2 == 2


def build_gate_schedule(code: CssCode, order=ROUND_ORDER) -> Schedule:
    """CNOT rounds between faces and their edge / cube ancillas, one direction per round.

    In the round labelled ``(-1)^n a_s`` the face ``f_{i,j}(v)`` meets the
    edge ``e_{{i,j}-s}(v + (1-n) a_s)`` when ``s`` is one of its directions
    and the cube ``c_{i,j,s}(v - n a_s)`` otherwise.
    """
    if not _is_tesseract(code):
        raise ValueError("the gate schedule is defined for four-dimensional codes with qubits on faces")
    lat = code.lattice
    coords, mask = lat.cell_coords(2)
    nf = lat.counts[2]
    rounds, idle = [], []
    for n, s in order:
        rows = []
        for dirs in lat.orientations(2):
            sel = np.flatnonzero(np.all(mask == np.isin(np.arange(4), dirs), axis=1))
            v = coords[sel]
            if s in dirs:
                other = tuple(d for d in dirs if d != s)
                u = v.copy()
                u[:, s] += 1 - n
                anc = lat._index_array(other, u)
                kind = EDGE
            else:
                cube = tuple(sorted(dirs + (s,)))
                u = v.copy()
                u[:, s] -= n
                anc = lat._index_array(cube, u)
                kind = CUBE
            ok = anc >= 0
            rows.append(np.stack([np.full(ok.sum(), kind), anc[ok], sel[ok]], axis=1))
        r = np.concatenate(rows).astype(np.int64)
        rounds.append(r)
        busy = np.zeros(nf, dtype=bool)
        busy[r[:, 2]] = True
        idle.append(np.flatnonzero(~busy))
    return Schedule(tuple(order), rounds, nf, lat.counts[1], lat.counts[3], idle)


def verify_schedule(schedule: Schedule) -> bool:
    """True iff every overlapping X/Z check pair touches its shared faces in a consistent order.

    For an edge check ``e`` and a cube check ``c`` sharing faces, either every
    ``(e, f)`` CNOT comes before the matching ``(c, f)`` CNOT or every one
    comes after it.  A schedule that reuses a qubit within a round is rejected.
    """
    e_round = {}
    c_round = {}
    for pos, r in enumerate(schedule.rounds):
        for col_kind, store in ((EDGE, e_round), (CUBE, c_round)):
            sub = r[r[:, 0] == col_kind]
            for a, f in zip(sub[:, 1].tolist(), sub[:, 2].tolist()):
                store.setdefault(f, []).append((a, pos))
        faces = r[:, 2]
        if np.unique(faces).size != faces.size:
            return False
        for kind in (EDGE, CUBE):
            anc = r[r[:, 0] == kind, 1]
            if np.unique(anc).size != anc.size:
                return False
    verdict: dict[tuple[int, int], bool] = {}
    for f, edges in e_round.items():
        for c, rc in c_round.get(f, []):
            for e, re_ in edges:
                key = (e, c)
                before = re_ < rc
                if verdict.setdefault(key, before) != before:
                    return False
    return True


# ---------------------------------------------------------------------------
# gate-level circuit with Pauli-frame propagation

# two-qubit Pauli index k in 1..15: control Pauli k >> 2, target Pauli k & 3,
# with 0 = I, 1 = X, 2 = Y, 3 = Z
_PX = np.array([0, 1, 1, 0], dtype=np.uint8)
_PZ = np.array([0, 0, 1, 1], dtype=np.uint8)


class _Circuit:
    """Qubit layout and per-round CNOT index arrays for the frame simulator.

    Register: faces, then edge ancillas, then cube ancillas.
    """

    def __init__(self, code: CssCode, schedule: Schedule):
        self.code = code
        self.nf, self.ne, self.nc = schedule.num_faces, schedule.num_edges, schedule.num_cubes
        self.n = self.nf + self.ne + self.nc
        self.edge_off = self.nf
        self.cube_off = self.nf + self.ne
        self.ctrl, self.targ, self.idle = [], [], []
        for r in schedule.rounds:
            is_edge = r[:, 0] == EDGE
            anc = np.where(is_edge, self.edge_off + r[:, 1], self.cube_off + r[:, 1])
            ctrl = np.where(is_edge, anc, r[:, 2])
            targ = np.where(is_edge, r[:, 2], anc)
            self.ctrl.append(ctrl)
            self.targ.append(targ)
            busy = np.zeros(self.n, dtype=bool)
            busy[ctrl] = True
            busy[targ] = True
            self.idle.append(np.flatnonzero(~busy))
        self.data = np.arange(self.nf)
        self.edges = np.arange(self.edge_off, self.edge_off + self.ne)
        self.cubes = np.arange(self.cube_off, self.cube_off + self.nc)
        self.hx = code.hx


class _RandomFaults:
    """Samples the circuit noise for a batch of independent runs."""

    def __init__(self, rng: np.random.Generator, batch: int, p: float):
        self.rng, self.B, self.p = rng, batch, p

    def single(self, step, qubits):
        m = qubits.size
        hit = self.rng.random((self.B, m)) < self.p
        k = self.rng.integers(1, 4, size=(self.B, m))
        k = np.where(hit, k, 0)
        return _PX[k], _PZ[k]

    def pair(self, step, ctrl, targ):
        m = ctrl.size
        hit = self.rng.random((self.B, m)) < self.p
        k = self.rng.integers(1, 16, size=(self.B, m))
        k = np.where(hit, k, 0)
        return _PX[k >> 2], _PZ[k >> 2], _PX[k & 3], _PZ[k & 3]

    def flip(self, step, qubits):
        return (self.rng.random((self.B, qubits.size)) < self.p).astype(np.uint8)


@dataclass(frozen=True)
class Fault:
    """One circuit fault.

    ``step`` is ``(cycle, stage)`` with stage ``"prep"``, ``"meas"``,
    ``"readout"`` or a CNOT round index.  ``qubits`` are register indices
    (one, or control and target); ``paulis`` the matching Pauli codes
    (1 = X, 2 = Y, 3 = Z; for ``"readout"`` a classical flip with code 1).
    """

    step: tuple
    qubits: tuple[int, ...]
    paulis: tuple[int, ...]


class _InjectedFaults:
    """Row ``b`` of the batch carries exactly ``faults[b]``."""

    def __init__(self, faults: list[Fault], n: int):
        self.B = len(faults)
        self.by_step: dict[tuple, list[tuple[int, Fault]]] = {}
        for b, f in enumerate(faults):
            self.by_step.setdefault(f.step, []).append((b, f))
        self.n = n

    def _dense(self, step, qubits_list):
        """Per-row Pauli codes on the listed register positions."""
        out = [np.zeros((self.B, q.size), dtype=np.int64) for q in qubits_list]
        lookup = [{int(x): j for j, x in enumerate(q.tolist())} for q in qubits_list]
        for b, f in self.by_step.get(step, []):
            for qb, pc in zip(f.qubits, f.paulis):
                for arr, lk in zip(out, lookup):
                    j = lk.get(qb)
                    if j is not None:
                        arr[b, j] = pc
                        break
        return out

    def single(self, step, qubits):
        (k,) = self._dense(step, [qubits])
        return _PX[k], _PZ[k]

    def pair(self, step, ctrl, targ):
        kc, kt = self._dense(step, [ctrl, targ])
        return _PX[kc], _PZ[kc], _PX[kt], _PZ[kt]

    def flip(self, step, qubits):
        (k,) = self._dense(step, [qubits])
        return (k > 0).astype(np.uint8)


def _run(circ: _Circuit, T: int, faults, batch: int):
    """Frame simulation of ``T-1`` noisy cycles and one perfect readout.

    Returns ``(outcomes (B, T, n_edges), data_z (B, nf), data_x (B, nf),
    direct_x (B, nf))`` where ``direct_x`` counts faults with an X component
    applied straight to each data qubit, before any propagation.
    """
    B = batch
    xb = np.zeros((B, circ.n), dtype=np.uint8)
    zb = np.zeros((B, circ.n), dtype=np.uint8)
    direct_x = np.zeros((B, circ.nf), dtype=np.int64)
    out = np.zeros((B, T, circ.ne), dtype=np.uint8)
    anc = np.concatenate([circ.edges, circ.cubes])
    data = circ.data

    def apply_single(step, qubits):
        fx, fz = faults.single(step, qubits)
        xb[:, qubits] ^= fx
        zb[:, qubits] ^= fz
        dmask = qubits < circ.nf
        if dmask.any():
            np.add.at(direct_x, (slice(None), qubits[dmask]), fx[:, dmask].astype(np.int64))

    for t in range(T - 1):
        # preparation: fresh ancillas, then a phase flip on |+> or a bit flip on |0>
        xb[:, anc] = 0
        zb[:, anc] = 0
        flips = faults.flip((t, "prep"), anc)
        ne = circ.ne
        zb[:, circ.edges] ^= flips[:, :ne]
        xb[:, circ.cubes] ^= flips[:, ne:]
        apply_single((t, "prep"), data)
        for r in range(len(circ.ctrl)):
            c, g = circ.ctrl[r], circ.targ[r]
            xb[:, g] ^= xb[:, c]
            zb[:, c] ^= zb[:, g]
            xc, zc, xt, zt = faults.pair((t, r), c, g)
            xb[:, c] ^= xc
            zb[:, c] ^= zc
            xb[:, g] ^= xt
            zb[:, g] ^= zt
            dc = c < circ.nf
            if dc.any():
                np.add.at(direct_x, (slice(None), c[dc]), xc[:, dc].astype(np.int64))
            dt = g < circ.nf
            if dt.any():
                np.add.at(direct_x, (slice(None), g[dt]), xt[:, dt].astype(np.int64))
            apply_single((t, r), circ.idle[r])
        # X-basis readout of edge ancillas sees their Z frame bit
        out[:, t, :] = zb[:, circ.edges] ^ faults.flip((t, "readout"), circ.edges)
        apply_single((t, "meas"), data)
    dz = zb[:, data]
    # perfect final round: syndrome of the accumulated data Z errors
    out[:, T - 1, :] = ((circ.hx @ dz.T.astype(np.int64)) % 2).T.astype(np.uint8)
    return out, dz.copy(), xb[:, data].copy(), direct_x


def simulate_gate_based_batch(code: CssCode, schedule: Schedule, p: float, T: int, rng: np.random.Generator, batch: int):
    """``batch`` independent circuit runs; see :func:`_run` for the outputs."""
    _check_probability("p", p)
    if T < 1:
        raise ValueError(f"need at least one round, got T={T}")
    circ = _Circuit(code, schedule)
    return _run(circ, T, _RandomFaults(rng, batch, p), batch)


def simulate_gate_based(code: CssCode, schedule: Schedule, p: float, T: int, rng: np.random.Generator):
    """One run: ``(MeasurementRecord, final data Z error as a dense face vector)``."""
    out, dz, _, _ = simulate_gate_based_batch(code, schedule, p, T, rng, 1)
    return _record(code, out[0], True), dz[0]


def enumerate_single_faults(code: CssCode, schedule: Schedule, cycle: int = 0) -> list[Fault]:
    """Every possible single fault of one noisy cycle."""
    circ = _Circuit(code, schedule)
    anc = np.concatenate([circ.edges, circ.cubes])
    faults = []
    for q in anc.tolist():
        faults.append(Fault((cycle, "prep"), (q,), (1,)))
    for stage in ("prep", "meas"):
        for q in circ.data.tolist():
            for pc in (1, 2, 3):
                faults.append(Fault((cycle, stage), (q,), (pc,)))
    for r in range(len(circ.ctrl)):
        for c, g in zip(circ.ctrl[r].tolist(), circ.targ[r].tolist()):
            for k in range(1, 16):
                faults.append(Fault((cycle, r), (c, g), (k >> 2, k & 3)))
        for q in circ.idle[r].tolist():
            for pc in (1, 2, 3):
                faults.append(Fault((cycle, r), (q,), (pc,)))
    for q in circ.edges.tolist():
        faults.append(Fault((cycle, "readout"), (q,), (1,)))
    return faults


def run_with_faults(code: CssCode, schedule: Schedule, faults: list[Fault], T: int = 2):
    """Noiseless runs, one per fault, each with only that fault injected."""
    circ = _Circuit(code, schedule)
    inj = _InjectedFaults(faults, circ.n)
    # a fault with Pauli code 0 on one side of a pair is the identity there
    return _run(circ, T, inj, len(faults))


def effective_x_rate(degree: int) -> float:
    """X-component fault rate per data qubit per cycle, in units of ``p``, ignoring propagation.

    ``degree`` CNOTs contribute 8/15 each, the remaining ``8 - degree``
    idle CNOT rounds and the preparation and readout steps 2/3 each.
    """
    return degree * 8 / 15 + (8 - degree) * 2 / 3 + 2 * 2 / 3
