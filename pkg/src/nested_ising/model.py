"""
Tripartite qubit layout, coupling topology and model parameters.

Qubits are numbered 0..n-1 with the central system first, the near
environment next and the far environment last.  Qubit ``j`` is bit ``j`` of
a basis-state index and bit value 0 is the +1 eigenstate of sigma_z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidConfig, InvalidLayout, TooManyLinks
from .rng import stream

SCHEMA_VERSION = 1

# A state vector of 2**26 complex doubles is 1 GiB, and the engine keeps a
# phase table of the same size next to it.
MAX_QUBITS = 26

SUBSYSTEMS = ("c", "e", "ep")


@dataclass(frozen=True)
class QubitLayout:
    n_c: int
    n_e: int
    n_ep: int

    def __post_init__(self):
        if self.n_c not in (1, 2):
            raise InvalidLayout(f"n_c must be 1 or 2, got {self.n_c}")
        if self.n_e < 1:
            raise InvalidLayout(f"n_e must be >= 1, got {self.n_e}")
        if self.n_ep < 1:
            raise InvalidLayout(f"n_ep must be >= 1, got {self.n_ep}")
        if self.n > MAX_QUBITS:
            raise InvalidLayout(
                f"n = {self.n} qubits exceeds the memory limit of {MAX_QUBITS}"
            )

    @property
    def n(self) -> int:
        return self.n_c + self.n_e + self.n_ep

    @property
    def central(self) -> range:
        return range(0, self.n_c)

    @property
    def near(self) -> range:
        return range(self.n_c, self.n_c + self.n_e)

    @property
    def far(self) -> range:
        return range(self.n_c + self.n_e, self.n)

    def subsystem(self, name: str) -> range:
        return {"c": self.central, "e": self.near, "ep": self.far}[name]

    def subsystem_of(self, j: int) -> str | None:
        for name in SUBSYSTEMS:
            if j in self.subsystem(name):
                return name
        return None


@dataclass(frozen=True)
class KickField:
    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    @property
    def magnitude(self) -> float:
        return math.sqrt(self.bx**2 + self.by**2 + self.bz**2)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.bx, self.by, self.bz)

    @classmethod
    def tilted(cls, beta: float = 1.0) -> "KickField":
        """Field of magnitude ``beta`` at pi/4 from the Ising (z) axis in the x-z plane."""
        s = beta / math.sqrt(2.0)
        return cls(s, 0.0, s)


ZERO_FIELD = KickField()
CHAOTIC_FIELD = KickField(1.0, 0.0, 1.0)


def default_fields(central: KickField = ZERO_FIELD) -> dict[str, KickField]:
    return {"c": central, "e": CHAOTIC_FIELD, "ep": CHAOTIC_FIELD}


@dataclass(frozen=True)
class ModelConfig:
    """Full coupling specification of a central + near + far spin system.

    ``intra_links`` carry a weight (the configuration-matrix entry, usually 1)
    that is multiplied by ``J``; ``ce_links`` are scaled by ``lam`` and
    ``eep_links`` by ``gamma``; ``cep_links`` carry an explicit strength.
    """

    layout: QubitLayout
    intra_links: tuple[tuple[int, int, float], ...] = ()
    ce_links: tuple[tuple[int, int], ...] = ()
    eep_links: tuple[tuple[int, int], ...] = ()
    cep_links: tuple[tuple[int, int, float], ...] = ()
    J: float = 1.0
    lam: float = 0.0
    gamma: float = 0.0
    fields: Mapping[str, KickField] = field(default_factory=default_fields)

    def __post_init__(self):
        # normalise to tuples so configs built from lists compare equal
        object.__setattr__(
            self, "intra_links",
            tuple((int(j), int(k), float(w)) for j, k, w in self.intra_links),
        )
        object.__setattr__(
            self, "ce_links", tuple((int(j), int(k)) for j, k in self.ce_links)
        )
        object.__setattr__(
            self, "eep_links", tuple((int(j), int(k)) for j, k in self.eep_links)
        )
        object.__setattr__(
            self, "cep_links",
            tuple((int(j), int(k), float(s)) for j, k, s in self.cep_links),
        )
        object.__setattr__(self, "fields", dict(self.fields))

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "layout": {"n_c": self.layout.n_c, "n_e": self.layout.n_e,
                       "n_ep": self.layout.n_ep},
            "intra_links": [list(link) for link in self.intra_links],
            "ce_links": [list(link) for link in self.ce_links],
            "eep_links": [list(link) for link in self.eep_links],
            "cep_links": [list(link) for link in self.cep_links],
            "J": self.J,
            "lambda": self.lam,
            "gamma": self.gamma,
            "fields": {name: {"bx": f.bx, "by": f.by, "bz": f.bz}
                       for name, f in sorted(self.fields.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ModelConfig":
        expected = {"schema_version", "layout", "intra_links", "ce_links",
                    "eep_links", "cep_links", "J", "lambda", "gamma", "fields"}
        unknown = set(data) - expected
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {version!r}")
        return cls(
            layout=QubitLayout(**data["layout"]),
            intra_links=data.get("intra_links", ()),
            ce_links=data.get("ce_links", ()),
            eep_links=data.get("eep_links", ()),
            cep_links=data.get("cep_links", ()),
            J=float(data.get("J", 1.0)),
            lam=float(data.get("lambda", 0.0)),
            gamma=float(data.get("gamma", 0.0)),
            fields={name: KickField(**f) for name, f in data["fields"].items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelConfig":
        return cls.from_dict(json.loads(text))


def validate(config: ModelConfig, allow_negative: bool = False) -> list[str]:
    """Return the list of invariant violations of ``config`` (empty if valid).

    Negative ``lam``/``gamma`` are only accepted with ``allow_negative``,
    which the sign-symmetry sweeps use.
    """
    out = []
    layout = config.layout

    def check_links(name, links, allowed):
        seen = set()
        for link in links:
            j, k = link[0], link[1]
            if j == k:
                out.append(f"{name}: self-link ({j}, {k})")
                continue
            for q in (j, k):
                if not 0 <= q < layout.n:
                    out.append(f"{name}: qubit index {q} out of range in ({j}, {k})")
            key = (min(j, k), max(j, k))
            if key in seen:
                out.append(f"{name}: duplicate link ({j}, {k})")
            seen.add(key)
            if not allowed(j, k):
                out.append(f"{name}: endpoint outside subsystem in ({j}, {k})")

    def same_subsystem(j, k):
        s = layout.subsystem_of(j)
        return s is not None and s == layout.subsystem_of(k)

    def between(a, b):
        return lambda j, k: j in layout.subsystem(a) and k in layout.subsystem(b)

    check_links("intra_links", config.intra_links, same_subsystem)
    check_links("ce_links", config.ce_links, between("c", "e"))
    check_links("eep_links", config.eep_links, between("e", "ep"))
    check_links("cep_links", config.cep_links, between("c", "ep"))

    if not allow_negative:
        if config.lam < 0:
            out.append(f"lambda: must be >= 0, got {config.lam}")
        if config.gamma < 0:
            out.append(f"gamma: must be >= 0, got {config.gamma}")
    for name, value in (("J", config.J), ("lambda", config.lam),
                        ("gamma", config.gamma)):
        if not math.isfinite(value):
            out.append(f"{name}: must be finite, got {value}")
    if set(config.fields) != set(SUBSYSTEMS):
        out.append(f"fields: expected keys {list(SUBSYSTEMS)}, got {sorted(config.fields)}")
    for name, f in config.fields.items():
        if not all(math.isfinite(x) for x in f.as_tuple()):
            out.append(f"fields.{name}: components must be finite")
    return out


# --- presets -----------------------------------------------------------------

@dataclass(frozen=True)
class TopologyPreset:
    """One of the named topologies.

    kind is ``"baseline-chain"``, ``"intra-variant"`` (with ``variant`` in
    1..5), ``"random-interlinks"`` (with ``nu`` and ``seed``) or
    ``"spectator"``.
    """

    kind: str
    variant: int | None = None
    nu: int | None = None
    seed: int | None = None


PRESETS = {
    "baseline-chain": ("Fig. 2", "open chains in each environment, one c-e link, one e-e' link"),
    "intra-variant": ("Fig. 3", "baseline chain plus extra links inside the environments (variant 1-5)"),
    "random-interlinks": ("Figs. 4-6", "baseline chains with nu random e-e' links drawn from a seed"),
    "spectator": ("Fig. 10", "two uncoupled central qubits, only qubit 0 touches the near environment"),
}

INTRA_VARIANTS = {
    1: "near environment closed into a ring",
    2: "far environment closed into a ring",
    3: "next-nearest-neighbour links in the near environment",
    4: "next-nearest-neighbour links in the far environment",
    5: "both environments closed into rings with next-nearest-neighbour links",
}


def _chain(qubits: Sequence[int]) -> list[tuple[int, int]]:
    return [(qubits[i], qubits[i + 1]) for i in range(len(qubits) - 1)]


def _ring_closure(qubits: Sequence[int]) -> list[tuple[int, int]]:
    return [(qubits[0], qubits[-1])] if len(qubits) >= 3 else []


def _next_nearest(qubits: Sequence[int]) -> list[tuple[int, int]]:
    return [(qubits[i], qubits[i + 2]) for i in range(len(qubits) - 2)]


def intra_variant_links(layout: QubitLayout, variant: int) -> list[tuple[int, int]]:
    """Extra intra-environment links (on top of the open chains) for a variant."""
    near, far = list(layout.near), list(layout.far)
    extra = {
        1: lambda: _ring_closure(near),
        2: lambda: _ring_closure(far),
        3: lambda: _next_nearest(near),
        4: lambda: _next_nearest(far),
        5: lambda: (_ring_closure(near) + _ring_closure(far)
                    + _next_nearest(near) + _next_nearest(far)),
    }
    if variant not in extra:
        raise ValueError(f"intra variant must be one of {sorted(extra)}, got {variant}")
    # in a 3-qubit chain the ring closure and the next-nearest link coincide
    return list(dict.fromkeys(extra[variant]()))


def random_interlinks(layout: QubitLayout, nu: int, seed: int) -> list[tuple[int, int]]:
    """Draw ``nu`` distinct (near, far) pairs uniformly without replacement.

    The result is sorted and depends only on ``(layout, nu, seed)``.
    """
    n_pairs = layout.n_e * layout.n_ep
    if nu > n_pairs:
        raise TooManyLinks(f"nu = {nu} exceeds the {n_pairs} available near-far pairs")
    if nu < 1:
        raise TooManyLinks(f"nu must be >= 1, got {nu}")
    rng = stream(seed, "interlinks", layout.n_e, layout.n_ep, nu)
    picks = np.sort(rng.choice(n_pairs, size=nu, replace=False))
    near0, far0 = layout.near.start, layout.far.start
    return [(near0 + int(p) // layout.n_ep, far0 + int(p) % layout.n_ep) for p in picks]


def build_preset(
    preset: TopologyPreset | str,
    layout: QubitLayout,
    J: float = 1.0,
    lam: float = 0.01,
    gamma: float = 0.5,
    fields: Mapping[str, KickField] | None = None,
) -> ModelConfig:
    """Build a validated :class:`ModelConfig` for a named topology.

    Every preset starts from open nearest-neighbour chains inside each
    subsystem (none inside the central system, whose qubits never interact)
    and a c-e link from central qubit 0 to the first near qubit.  The
    baseline e-e' link joins the last near qubit to the first far qubit, so
    the whole baseline is one open chain.
    """
    if isinstance(preset, str):
        preset = TopologyPreset(preset)
    if preset.kind not in PRESETS:
        raise ValueError(f"unknown preset {preset.kind!r}; known: {sorted(PRESETS)}")
    if preset.kind == "spectator" and layout.n_c != 2:
        raise InvalidLayout(f"n_c: spectator preset needs n_c = 2, got {layout.n_c}")
    if preset.kind != "spectator" and layout.n_c != 1:
        raise InvalidLayout(f"n_c: preset {preset.kind!r} needs n_c = 1, got {layout.n_c}")

    near, far = list(layout.near), list(layout.far)
    intra = _chain(near) + _chain(far)
    if preset.kind == "intra-variant":
        if preset.variant is None:
            raise ValueError("intra-variant preset needs a variant number")
        intra += intra_variant_links(layout, preset.variant)

    if preset.kind == "random-interlinks":
        if preset.nu is None or preset.seed is None:
            raise ValueError("random-interlinks preset needs nu and seed")
        eep = random_interlinks(layout, preset.nu, preset.seed)
    else:
        eep = [(near[-1], far[0])]

    config = ModelConfig(
        layout=layout,
        intra_links=tuple(sorted((j, k, 1.0) for j, k in intra)),
        ce_links=((0, near[0]),),
        eep_links=tuple(eep),
        J=J,
        lam=lam,
        gamma=gamma,
        fields=dict(fields) if fields is not None else default_fields(),
    )
    problems = validate(config, allow_negative=True)
    if problems:
        raise InvalidConfig(problems)
    return config


def with_far_coupling(config: ModelConfig, strength: float,
                      far_qubit: int | None = None) -> ModelConfig:
    """Add a direct link between central qubit 0 and a far qubit (last one by default)."""
    if far_qubit is None:
        far_qubit = config.layout.far[-1]
    return config.with_(cep_links=config.cep_links + ((0, far_qubit, strength),))


def describe_presets() -> Iterable[str]:
    for name, (figure, text) in PRESETS.items():
        yield f"{name} ({figure}): {text}"
    for v, text in INTRA_VARIANTS.items():
        yield f"  intra-variant {v}: {text}"
