"""Circuits on square qubit lattices.

Sites are addressed as ``(x, y)`` with ``x`` the row index and ``y`` the
column index; qubit ``(x, y)`` has flat index ``x * cols + y`` everywhere in
the package. Each moment maps sites to gates; an absent site is Identity.
Two-qubit gates are stored once, on their *anchor* site, with a direction
pointing at the partner. For CX the anchor is the control. CZ is symmetric
and always stored on the lexicographically smaller site (direction E or S).

One-hot channel layout (index 0 is Identity)::

    I, X, Y, Z, H, [T, TD], CX-N, CX-E, CX-S, CX-W, CZ-N, CZ-E, CZ-S, CZ-W

giving 13 channels without the T/TD block and 15 with it. The partner site
of a two-qubit gate is encoded as Identity.
"""

from __future__ import annotations

import enum
import itertools
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from qfe.errors import CircuitValidationError, EncodingError, ParameterError

Site = tuple[int, int]
SeedLike = Union[int, np.random.Generator, None]


class Direction(enum.Enum):
    N = "N"
    E = "E"
    S = "S"
    W = "W"

    @property
    def offset(self) -> Site:
        return _OFFSETS[self]

    @property
    def opposite(self) -> "Direction":
        return _OPPOSITE[self]

    def step(self, site: Site) -> Site:
        dx, dy = _OFFSETS[self]
        return site[0] + dx, site[1] + dy


DIRECTIONS = (Direction.N, Direction.E, Direction.S, Direction.W)
_OFFSETS = {Direction.N: (-1, 0), Direction.E: (0, 1), Direction.S: (1, 0), Direction.W: (0, -1)}
_OPPOSITE = {Direction.N: Direction.S, Direction.S: Direction.N, Direction.E: Direction.W, Direction.W: Direction.E}

SINGLE_QUBIT_NAMES = ("I", "X", "Y", "Z", "H", "T", "TD")
TWO_QUBIT_NAMES = ("CX", "CZ")
CLIFFORD_NAMES = frozenset({"I", "X", "Y", "Z", "H", "CX", "CZ"})


@dataclass(frozen=True)
class GateKind:
    """A gate type; two-qubit kinds carry the direction anchor -> partner."""

    name: str
    direction: Direction | None = None

    def __post_init__(self):
        if self.name in SINGLE_QUBIT_NAMES:
            if self.direction is not None:
                raise ParameterError(f"single-qubit gate {self.name} takes no direction")
        elif self.name in TWO_QUBIT_NAMES:
            if not isinstance(self.direction, Direction):
                raise ParameterError(f"two-qubit gate {self.name} needs a direction")
        else:
            raise ParameterError(f"unknown gate {self.name!r}")

    @property
    def is_identity(self) -> bool:
        return self.name == "I"

    @property
    def is_two_qubit(self) -> bool:
        return self.direction is not None

    @property
    def is_clifford(self) -> bool:
        return self.name in CLIFFORD_NAMES

    def __str__(self) -> str:
        return self.name if self.direction is None else f"{self.name}-{self.direction.value}"


I = GateKind("I")
X = GateKind("X")
Y = GateKind("Y")
Z = GateKind("Z")
H = GateKind("H")
T = GateKind("T")
TD = GateKind("TD")


def cx(direction: Direction | str) -> GateKind:
    return GateKind("CX", Direction(direction))


def cz(direction: Direction | str) -> GateKind:
    return GateKind("CZ", Direction(direction))


@dataclass(frozen=True)
class Palette:
    """Gates a generator may draw, plus the channel layout used for encoding.

    ``identity_weight`` is the relative weight of Identity against each single
    qubit gate of ``single`` (1.0 means Identity is as likely as X).
    ``t_channels`` defaults to whether T or TD is in ``single``; set it
    explicitly to encode Clifford-reducible circuits whose T/TD pairs are
    placed outside the palette draw.
    """

    single: tuple[str, ...] = ("X", "Y", "Z", "H")
    two: tuple[str, ...] = ("CX", "CZ")
    identity_weight: float = 1.0
    t_channels: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "single", tuple(self.single))
        object.__setattr__(self, "two", tuple(self.two))
        for name in self.single:
            if name not in SINGLE_QUBIT_NAMES or name == "I":
                raise ParameterError(f"{name!r} is not a non-identity single-qubit gate")
        for name in self.two:
            if name not in TWO_QUBIT_NAMES:
                raise ParameterError(f"{name!r} is not a two-qubit gate")
        if self.identity_weight < 0:
            raise ParameterError("identity_weight must be non-negative")
        has_t = any(n in ("T", "TD") for n in self.single)
        if self.t_channels is None:
            object.__setattr__(self, "t_channels", has_t)
        elif has_t and not self.t_channels:
            raise ParameterError("palette draws T/TD but has no T/TD channels")

    @property
    def n_channels(self) -> int:
        return 15 if self.t_channels else 13

    @property
    def channel_names(self) -> list[str]:
        names = ["I", "X", "Y", "Z", "H"]
        if self.t_channels:
            names += ["T", "TD"]
        names += [f"{g}-{d.value}" for g in TWO_QUBIT_NAMES for d in DIRECTIONS]
        return names

    def allows(self, gate: GateKind) -> bool:
        if gate.is_identity:
            return True
        if gate.name in ("T", "TD"):
            return bool(self.t_channels)
        return gate.name in self.single or gate.name in self.two

    def clifford_part(self) -> "Palette":
        single = tuple(n for n in self.single if n not in ("T", "TD"))
        return Palette(single, self.two, self.identity_weight, t_channels=self.t_channels)

    def to_dict(self) -> dict:
        return {
            "single": list(self.single),
            "two": list(self.two),
            "identity_weight": self.identity_weight,
            "t_channels": self.t_channels,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Palette":
        return cls(tuple(d["single"]), tuple(d["two"]), float(d.get("identity_weight", 1.0)), d.get("t_channels"))


# Single-moment experiments; 13 channels.
CLIFFORD_PALETTE = Palette()
# Multi-moment experiments; 15 channels.
FULL_PALETTE = Palette(single=("X", "Y", "Z", "H", "T", "TD"))
# Clifford fill with T/TD channels, for Clifford-reducible circuits.
CLIFFORD_REDUCIBLE_PALETTE = Palette(t_channels=True)

PALETTES = {"clifford": CLIFFORD_PALETTE, "full": FULL_PALETTE, "clifford-reducible": CLIFFORD_REDUCIBLE_PALETTE}


def _canonical(site: Site, gate: GateKind) -> tuple[Site, GateKind]:
    if gate.name == "CZ":
        partner = gate.direction.step(site)
        if partner < site:
            return partner, GateKind("CZ", gate.direction.opposite)
    return site, gate


@dataclass(frozen=True)
class LatticeCircuit:
    """Gates on a ``rows x cols`` lattice across ``len(moments)`` moments.

    ``moments`` may be given as a sequence of ``{site: GateKind}`` mappings; it
    is normalized to sorted tuples of ``(site, gate)`` with Identity entries
    dropped and CZ stored on its smaller site. Construction validates bounds
    and the one-gate-per-site rule.
    """

    rows: int
    cols: int
    moments: tuple = field(default=())

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ParameterError("lattice dimensions must be positive")
        norm = []
        for m, moment in enumerate(self.moments):
            items = moment.items() if isinstance(moment, Mapping) else moment
            entries: dict[Site, GateKind] = {}
            for site, gate in items:
                site = (int(site[0]), int(site[1]))
                if not isinstance(gate, GateKind):
                    raise CircuitValidationError(f"moment {m}: {gate!r} is not a GateKind")
                if gate.is_identity:
                    continue
                site, gate = _canonical(site, gate)
                if site in entries:
                    raise CircuitValidationError(f"moment {m}: two gates anchored at {site}")
                entries[site] = gate
            norm.append(tuple(sorted(entries.items(), key=lambda kv: kv[0])))
        object.__setattr__(self, "moments", tuple(norm))
        self._validate()

    def _validate(self):
        for m, moment in enumerate(self.moments):
            used: set[Site] = set()
            for site, gate in moment:
                sites = [site]
                if gate.is_two_qubit:
                    sites.append(gate.direction.step(site))
                for s in sites:
                    if not self.in_bounds(s):
                        raise CircuitValidationError(f"moment {m}: {gate} at {site} touches off-lattice site {s}")
                    if s in used:
                        raise CircuitValidationError(f"moment {m}: site {s} is used by more than one gate")
                    used.add(s)

    @property
    def depth(self) -> int:
        return len(self.moments)

    @property
    def n_qubits(self) -> int:
        return self.rows * self.cols

    def in_bounds(self, site: Site) -> bool:
        return 0 <= site[0] < self.rows and 0 <= site[1] < self.cols

    def qubit(self, site: Site) -> int:
        return site[0] * self.cols + site[1]

    def sites(self) -> Iterator[Site]:
        return itertools.product(range(self.rows), range(self.cols))

    def gates(self, m: int) -> tuple[tuple[Site, GateKind], ...]:
        """Non-identity gates of moment ``m`` in row-major anchor order."""
        return self.moments[m]

    def all_gates(self) -> Iterator[tuple[int, Site, GateKind]]:
        for m, moment in enumerate(self.moments):
            for site, gate in moment:
                yield m, site, gate

    def gate_at(self, m: int, site: Site) -> GateKind:
        """The gate anchored at ``site`` (Identity for partner or empty sites)."""
        return dict(self.moments[m]).get(tuple(site), I)

    def occupied(self, m: int) -> set[Site]:
        """Sites touched by a non-identity gate in moment ``m``."""
        out = set()
        for site, gate in self.moments[m]:
            out.add(site)
            if gate.is_two_qubit:
                out.add(gate.direction.step(site))
        return out

    def count(self, name: str) -> int:
        return sum(1 for _, _, g in self.all_gates() if g.name == name)

    def concat(self, other: "LatticeCircuit") -> "LatticeCircuit":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ParameterError("lattice shapes differ")
        return LatticeCircuit(self.rows, self.cols, self.moments + other.moments)

    def restrict(self, tile: tuple[int, int, int, int]) -> "LatticeCircuit":
        """Sub-circuit on one tile, in tile-local coordinates."""
        x0, y0, w, h = tile
        moments = []
        for m, moment in enumerate(self.moments):
            local = {}
            for site, gate in moment:
                inside = [_in_rect(s, tile) for s in _gate_sites(site, gate)]
                if all(inside):
                    local[(site[0] - x0, site[1] - y0)] = gate
                elif any(inside):
                    raise CircuitValidationError(f"moment {m}: {gate} at {site} crosses tile {tile}")
            moments.append(local)
        return LatticeCircuit(w, h, moments)

    def to_dict(self) -> dict:
        moments = []
        for moment in self.moments:
            entries = []
            for (x, y), gate in moment:
                e = {"x": x, "y": y, "gate": gate.name}
                if gate.direction is not None:
                    e["dir"] = gate.direction.value
                entries.append(e)
            moments.append(entries)
        return {"rows": self.rows, "cols": self.cols, "moments": moments}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LatticeCircuit":
        try:
            moments = []
            for entries in d["moments"]:
                items = []
                for e in entries:
                    direction = Direction(e["dir"]) if "dir" in e else None
                    items.append(((int(e["x"]), int(e["y"])), GateKind(e["gate"], direction)))
                moments.append(items)
            return cls(int(d["rows"]), int(d["cols"]), moments)
        except (KeyError, TypeError) as exc:
            raise CircuitValidationError(f"malformed circuit text form: {exc!r}") from exc


def _gate_sites(site: Site, gate: GateKind) -> list[Site]:
    return [site, gate.direction.step(site)] if gate.is_two_qubit else [site]


def _in_rect(site: Site, rect) -> bool:
    x0, y0, w, h = rect
    return x0 <= site[0] < x0 + w and y0 <= site[1] < y0 + h


@dataclass(frozen=True)
class Tiling:
    """Axis-aligned rectangles ``(x0, y0, width, height)`` covering a lattice.

    ``width`` is the extent along ``x`` (rows), ``height`` along ``y`` (cols).
    """

    tiles: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "tiles", tuple(tuple(int(v) for v in t) for t in self.tiles))

    def validate(self, rows: int, cols: int) -> None:
        owner = np.full((rows, cols), -1)
        for k, (x0, y0, w, h) in enumerate(self.tiles):
            if w < 1 or h < 1 or x0 < 0 or y0 < 0 or x0 + w > rows or y0 + h > cols:
                raise ParameterError(f"tile {k} {(x0, y0, w, h)} does not fit a {rows}x{cols} lattice")
            if (owner[x0:x0 + w, y0:y0 + h] >= 0).any():
                raise ParameterError(f"tile {k} overlaps another tile")
            owner[x0:x0 + w, y0:y0 + h] = k
        if (owner < 0).any():
            raise ParameterError("tiles do not cover the lattice")

    def owner_grid(self, rows: int, cols: int) -> np.ndarray:
        self.validate(rows, cols)
        owner = np.empty((rows, cols), dtype=int)
        for k, (x0, y0, w, h) in enumerate(self.tiles):
            owner[x0:x0 + w, y0:y0 + h] = k
        return owner

    def respects(self, c: LatticeCircuit) -> bool:
        owner = self.owner_grid(c.rows, c.cols)
        for _, site, gate in c.all_gates():
            if gate.is_two_qubit and owner[site] != owner[gate.direction.step(site)]:
                return False
        return True

    @classmethod
    def whole(cls, rows: int, cols: int) -> "Tiling":
        return cls(((0, 0, rows, cols),))

    def to_list(self) -> list[list[int]]:
        return [list(t) for t in self.tiles]


def _compositions(total: int, parts: Sequence[int]) -> list[tuple[int, ...]]:
    if total == 0:
        return [()]
    out = []
    for p in sorted(set(parts)):
        if p <= total:
            out += [(p,) + rest for rest in _compositions(total - p, parts)]
    return out


def band_tilings(rows: int, cols: int, widths: Iterable[int] = (2, 3)) -> list[Tiling]:
    """Partitions into full-length bands whose widths come from ``widths``.

    Horizontal bands (split along x) come first, then vertical ones. A band
    layout that is a single band spanning the lattice is skipped.
    """
    widths = tuple(widths)
    out = []
    for comp in _compositions(rows, widths):
        if len(comp) > 1:
            starts = np.cumsum((0,) + comp[:-1])
            out.append(Tiling(tuple((int(s), 0, w, cols) for s, w in zip(starts, comp))))
    for comp in _compositions(cols, widths):
        if len(comp) > 1:
            starts = np.cumsum((0,) + comp[:-1])
            out.append(Tiling(tuple((0, int(s), rows, w) for s, w in zip(starts, comp))))
    return out


def enumerate_tilings(rows: int, cols: int, max_side: int, min_side: int = 1) -> list[Tiling]:
    """Every partition of the lattice into rectangles with sides in [min_side, max_side]."""
    out: list[Tiling] = []
    covered = np.zeros((rows, cols), dtype=bool)

    def rec(tiles):
        free = np.argwhere(~covered)
        if len(free) == 0:
            out.append(Tiling(tuple(tiles)))
            return
        x0, y0 = (int(v) for v in free[0])
        for w in range(min_side, max_side + 1):
            if x0 + w > rows:
                break
            for h in range(min_side, max_side + 1):
                if y0 + h > cols or covered[x0:x0 + w, y0:y0 + h].any():
                    break
                covered[x0:x0 + w, y0:y0 + h] = True
                rec(tiles + [(x0, y0, w, h)])
                covered[x0:x0 + w, y0:y0 + h] = False

    rec([])
    return out


def default_tiling_catalog(rows: int, cols: int) -> list[Tiling]:
    """Band catalog: {2,3}-wide bands on 5x5-class grids, {1,2} on 3x3."""
    widths = (1, 2) if max(rows, cols) <= 3 else (2, 3)
    return band_tilings(rows, cols, widths)


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _check_common(rows, cols, depth, fraction, name="two_qubit_fraction"):
    if rows < 1 or cols < 1:
        raise ParameterError(f"invalid lattice {rows}x{cols}")
    if depth < 1:
        raise ParameterError(f"depth must be >= 1, got {depth}")
    if not 0.0 <= fraction <= 1.0:
        raise ParameterError(f"{name} must lie in [0, 1], got {fraction}")


def _fill_moment(rng, rows, cols, taken: dict, palette: Palette, two_qubit_fraction: float, owner=None) -> dict:
    """Populate one moment in place.

    Pass one visits sites in random order; a site not yet in a gate becomes a
    two-qubit anchor with probability ``two_qubit_fraction``, its partner drawn
    uniformly among free same-tile neighbours (skipped if there are none).
    Pass two gives every still-free site, in row-major order, Identity or a
    palette single-qubit gate. ``taken`` holds pre-placed gates and ends up
    holding the whole moment.
    """
    busy = set()
    for site, gate in taken.items():
        busy.update(_gate_sites(site, gate))
    if palette.two:
        for k in rng.permutation(rows * cols):
            site = (int(k) // cols, int(k) % cols)
            if site in busy or rng.random() >= two_qubit_fraction:
                continue
            free = []
            for d in DIRECTIONS:
                nb = d.step(site)
                if 0 <= nb[0] < rows and 0 <= nb[1] < cols and nb not in busy:
                    if owner is None or owner[nb] == owner[site]:
                        free.append(d)
            if free:
                d = free[int(rng.integers(len(free)))]
                name = palette.two[int(rng.integers(len(palette.two)))]
                busy.add(site)
                busy.add(d.step(site))
                taken[site] = GateKind(name, d)
    weights = np.array([palette.identity_weight] + [1.0] * len(palette.single))
    cum = np.cumsum(weights) / weights.sum()
    singles = [I] + [GateKind(n) for n in palette.single]
    for x in range(rows):
        for y in range(cols):
            if (x, y) in busy:
                continue
            gate = singles[min(int(np.searchsorted(cum, rng.random(), side="right")), len(singles) - 1)]
            if not gate.is_identity:
                taken[(x, y)] = gate
    return taken


def random_circuit(
    rows: int,
    cols: int,
    depth: int,
    palette: Palette = CLIFFORD_PALETTE,
    two_qubit_fraction: float = 0.3,
    seed: SeedLike = None,
) -> LatticeCircuit:
    """Random circuit with nearest-neighbour two-qubit gates."""
    _check_common(rows, cols, depth, two_qubit_fraction)
    rng = make_rng(seed)
    moments = [_fill_moment(rng, rows, cols, {}, palette, two_qubit_fraction) for _ in range(depth)]
    return LatticeCircuit(rows, cols, moments)


def tiled_circuit(
    rows: int,
    cols: int,
    tiling: Tiling,
    depth: int,
    palette: Palette = CLIFFORD_PALETTE,
    two_qubit_fraction: float = 0.3,
    seed: SeedLike = None,
) -> LatticeCircuit:
    """Random circuit whose two-qubit gates never cross a tile boundary.

    With a single whole-lattice tile this consumes the random stream exactly
    like :func:`random_circuit`.
    """
    _check_common(rows, cols, depth, two_qubit_fraction)
    owner = tiling.owner_grid(rows, cols)
    rng = make_rng(seed)
    moments = [_fill_moment(rng, rows, cols, {}, palette, two_qubit_fraction, owner) for _ in range(depth)]
    return LatticeCircuit(rows, cols, moments)


def clifford_reducible_circuit(
    rows: int,
    cols: int,
    depth: int,
    pair_rate: float = 0.15,
    seed: SeedLike = None,
    palette: Palette = CLIFFORD_PALETTE,
    two_qubit_fraction: float = 0.3,
    tiling: Tiling | None = None,
    allow_reversed: bool = False,
) -> LatticeCircuit:
    """Clifford circuit with (T, TD) pairs inserted on moment pairs (2m, 2m+1).

    Each site gets a pair with probability ``pair_rate`` per moment pair; with
    ``allow_reversed`` the order is (TD, T) half the time. The remaining slots
    are filled from the Clifford part of ``palette``.
    """
    _check_common(rows, cols, depth, two_qubit_fraction)
    if depth < 2:
        raise ParameterError(f"Clifford-reducible circuits need depth >= 2, got {depth}")
    if not 0.0 <= pair_rate <= 1.0:
        raise ParameterError(f"pair_rate must lie in [0, 1], got {pair_rate}")
    rng = make_rng(seed)
    owner = tiling.owner_grid(rows, cols) if tiling is not None else None
    fill = palette.clifford_part()
    moments: list[dict] = [{} for _ in range(depth)]
    for m in range(0, depth - 1, 2):
        for site in itertools.product(range(rows), range(cols)):
            if rng.random() < pair_rate:
                first, second = (TD, T) if allow_reversed and rng.random() < 0.5 else (T, TD)
                moments[m][site] = first
                moments[m + 1][site] = second
    for moment in moments:
        _fill_moment(rng, rows, cols, moment, fill, two_qubit_fraction, owner)
    return LatticeCircuit(rows, cols, moments)


def find_t_pairs(c: LatticeCircuit) -> list[tuple[Site, int]]:
    """(site, first moment) of every cancelling T/TD pair; raises if unmatched."""
    pairs = []
    inverse = {"T": "TD", "TD": "T"}
    lookup = [dict(moment) for moment in c.moments]
    for site in c.sites():
        m = 0
        while m < c.depth:
            g = lookup[m].get(site, I)
            if g.name in inverse:
                nxt = lookup[m + 1].get(site, I) if m + 1 < c.depth else I
                if nxt.name != inverse[g.name]:
                    raise CircuitValidationError(
                        f"unmatched {g.name} at site {site}, moment {m}: next moment holds {nxt.name}"
                    )
                pairs.append((site, m))
                m += 2
            else:
                m += 1
    return pairs


def reduce_to_clifford(c: LatticeCircuit) -> LatticeCircuit:
    """Replace every cancelling T/TD pair by Identity."""
    drop = set()
    for site, m in find_t_pairs(c):
        drop.add((m, site))
        drop.add((m + 1, site))
    moments = [{s: g for s, g in moment if (m, s) not in drop} for m, moment in enumerate(c.moments)]
    return LatticeCircuit(c.rows, c.cols, moments)


def channel_index(palette: Palette, gate: GateKind) -> int:
    if gate.is_identity:
        return 0
    base = {"X": 1, "Y": 2, "Z": 3, "H": 4}
    if gate.name in base:
        return base[gate.name]
    off = 2 if palette.t_channels else 0
    if gate.name == "T":
        return 5
    if gate.name == "TD":
        return 6
    d = DIRECTIONS.index(gate.direction)
    return 5 + off + (0 if gate.name == "CX" else 4) + d


def encode_one_hot(c: LatticeCircuit, palette: Palette) -> np.ndarray:
    """One-hot tensor of shape ``(depth, rows, cols, palette.n_channels)``."""
    t = np.zeros((c.depth, c.rows, c.cols, palette.n_channels), dtype=np.uint8)
    t[..., 0] = 1
    for m, (x, y), gate in c.all_gates():
        if not palette.allows(gate):
            raise EncodingError(f"gate {gate} at {(x, y)} moment {m} is outside the palette")
        t[m, x, y, 0] = 0
        t[m, x, y, channel_index(palette, gate)] = 1
    return t


def decode_one_hot(t: np.ndarray, palette: Palette) -> LatticeCircuit:
    """Inverse of :func:`encode_one_hot`."""
    t = np.asarray(t)
    if t.ndim != 4 or t.shape[-1] != palette.n_channels:
        raise EncodingError(f"expected shape (depth, rows, cols, {palette.n_channels}), got {t.shape}")
    if not np.isin(t, (0, 1)).all() or not (t.sum(axis=-1) == 1).all():
        raise EncodingError("tensor is not one-hot")
    names = palette.channel_names
    depth, rows, cols, _ = t.shape
    idx = t.argmax(axis=-1)
    moments = []
    for m in range(depth):
        entries = {}
        partners: dict[Site, Site] = {}
        for x in range(rows):
            for y in range(cols):
                name = names[idx[m, x, y]]
                if name == "I":
                    continue
                if "-" in name:
                    g, d = name.split("-")
                    gate = GateKind(g, Direction(d))
                    p = gate.direction.step((x, y))
                    if not (0 <= p[0] < rows and 0 <= p[1] < cols):
                        raise EncodingError(f"moment {m}: anchor {(x, y)} points off-lattice")
                    if idx[m, p[0], p[1]] != 0:
                        raise EncodingError(f"moment {m}: partner {p} of {(x, y)} is not Identity")
                    if p in partners:
                        raise EncodingError(f"moment {m}: partner {p} claimed by {partners[p]} and {(x, y)}")
                    partners[p] = (x, y)
                else:
                    gate = GateKind(name)
                entries[(x, y)] = gate
        moments.append(entries)
    try:
        return LatticeCircuit(rows, cols, moments)
    except CircuitValidationError as exc:
        raise EncodingError(str(exc)) from exc


def couplers(rows: int, cols: int) -> list[tuple[Site, Site]]:
    """Nearest-neighbour pairs, each ordered (smaller, larger), sorted."""
    out = []
    for x in range(rows):
        for y in range(cols):
            if y + 1 < cols:
                out.append(((x, y), (x, y + 1)))
            if x + 1 < rows:
                out.append(((x, y), (x + 1, y)))
    return sorted(out)


def gate_count_features(c: LatticeCircuit) -> np.ndarray:
    """Per-site single-qubit gate counts then per-coupler two-qubit gate counts."""
    cps = couplers(c.rows, c.cols)
    index = {cp: k for k, cp in enumerate(cps)}
    f = np.zeros(c.n_qubits + len(cps), dtype=np.int64)
    for _, site, gate in c.all_gates():
        if gate.is_two_qubit:
            pair = tuple(sorted((site, gate.direction.step(site))))
            f[c.n_qubits + index[pair]] += 1
        else:
            f[c.qubit(site)] += 1
    return f
