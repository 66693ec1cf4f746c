"""
Lattice and interaction models, and the Hamiltonians built from them.

All energies are frequencies E/h in MHz and all times are in microseconds,
so a Hamiltonian entry H contributes a phase 2*pi*H*t.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from fractions import Fraction
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Optional, Sequence, Tuple

import numpy as np

from .utils.logging import get_logger
from .utils.validation import ValidationError

logger = get_logger("lattice")

TWO_PI = 2.0 * np.pi
DRIVE_KINDS = ("static", "bichromatic", "escher")
BOUNDARIES = ("open", "periodic")
DEFAULT_C3_TABLE = Path(__file__).parent / "data" / "c3_table.csv"
# V is quoted as the exchange strength of this pair
REFERENCE_PAIR = frozenset({0, -1})
HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class Link:
    """Coupling between two sites; contributes (rabi/2) e^{i phase} |target><source| + h.c."""

    source: int
    target: int
    rabi_mhz: float
    phase_rad: float = 0.0

    @property
    def amplitude(self) -> complex:
        return 0.5 * self.rabi_mhz * np.exp(1j * self.phase_rad)


@dataclass(frozen=True)
class Drive:
    kind: str = "static"
    detuning_mhz: float = 0.0


@dataclass(frozen=True)
class LatticeSpec:
    """
    Declarative synthetic lattice.

    Sites are consecutive integer labels. Ordinary links join j -> j+1; a
    periodic lattice carries one extra wraparound link j_max -> j_min, which
    is also where the ring's flux-control phase lives.
    """

    sites: Tuple[int, ...]
    links: Tuple[Link, ...]
    site_detunings: Tuple[float, ...]
    boundary: str = "open"
    drive: Drive = field(default_factory=Drive)

    def __post_init__(self):
        sites = tuple(int(s) for s in self.sites)
        if len(sites) < 2:
            raise ValidationError("A lattice needs at least two sites")
        if any(b - a != 1 for a, b in zip(sites, sites[1:])):
            raise ValidationError(f"Site labels must be consecutive integers, got {sites}")
        if len(self.site_detunings) != len(sites):
            raise ValidationError(
                f"Expected {len(sites)} site detunings, got {len(self.site_detunings)}"
            )
        if self.boundary not in BOUNDARIES:
            raise ValidationError(f"Invalid boundary: {self.boundary}. Valid: {', '.join(BOUNDARIES)}")
        if self.drive.kind not in DRIVE_KINDS:
            raise ValidationError(f"Invalid drive: {self.drive.kind}. Valid: {', '.join(DRIVE_KINDS)}")
        if self.drive.kind == "escher" and self.boundary != "periodic":
            raise ValidationError("Escher drive requires a periodic boundary")

        links = []
        seen = set()
        for link in self.links:
            if link.rabi_mhz < 0:
                raise ValidationError(f"Negative Rabi rate on link {link.source}->{link.target}")
            if not np.isfinite(link.rabi_mhz) or not np.isfinite(link.phase_rad):
                raise ValidationError(f"Non-finite link {link.source}->{link.target}")
            ordinary = link.target - link.source == 1 and link.source in sites and link.target in sites
            wrap = (link.source, link.target) == (sites[-1], sites[0])
            if not (ordinary or wrap):
                raise ValidationError(
                    f"Link {link.source}->{link.target} does not join adjacent sites"
                )
            if wrap and self.boundary != "periodic":
                raise ValidationError("Wraparound link requires a periodic boundary")
            key = (link.source, link.target)
            if key in seen:
                raise ValidationError(f"Duplicate link {link.source}->{link.target}")
            seen.add(key)
            links.append(replace(link, phase_rad=float(np.mod(link.phase_rad, TWO_PI))))
        if self.boundary == "periodic" and (sites[-1], sites[0]) not in seen:
            raise ValidationError("Periodic boundary requires a wraparound link")

        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "links", tuple(links))
        object.__setattr__(self, "site_detunings", tuple(float(d) for d in self.site_detunings))

    @classmethod
    def chain(
        cls,
        sites: Iterable[int],
        rabi_mhz: float,
        tilt_mhz: float = 0.0,
        drive: Optional[Drive] = None,
    ) -> "LatticeSpec":
        """Open chain with uniform Rabi rate and a uniform tilt Delta_j = j * tilt."""
        sites = tuple(sites)
        links = tuple(Link(j, j + 1, rabi_mhz) for j in sites[:-1])
        detunings = tuple(j * tilt_mhz for j in sites)
        return cls(sites, links, detunings, "open", drive or Drive())

    @classmethod
    def ring(
        cls,
        sites: Iterable[int],
        rabi_mhz: float,
        tilt_mhz: float = 0.0,
        wrap_phase_rad: float = 0.0,
        escher: bool = True,
    ) -> "LatticeSpec":
        """Periodic ring; with escher=True the tilt continues around the ring."""
        sites = tuple(sites)
        links = tuple(Link(j, j + 1, rabi_mhz) for j in sites[:-1])
        links += (Link(sites[-1], sites[0], rabi_mhz, wrap_phase_rad),)
        detunings = tuple(j * tilt_mhz for j in sites)
        drive = Drive("escher", tilt_mhz) if escher else Drive()
        return cls(sites, links, detunings, "periodic", drive)

    @property
    def dim(self) -> int:
        return len(self.sites)

    def index(self, site: int) -> int:
        try:
            return self.sites.index(site)
        except ValueError:
            raise ValidationError(f"Site {site} is not in lattice {self.sites}") from None

    @property
    def wrap_link(self) -> Optional[Link]:
        for link in self.links:
            if (link.source, link.target) == (self.sites[-1], self.sites[0]):
                return link
        return None

    @property
    def flux(self) -> Optional[float]:
        """Sum of tunneling phases around the ring in [0, 2 pi); None for open chains."""
        if self.boundary != "periodic":
            return None
        return float(np.mod(sum(link.phase_rad for link in self.links), TWO_PI))

    def with_wrap_phase(self, phase_rad: float) -> "LatticeSpec":
        if self.boundary != "periodic":
            raise ValidationError("Only periodic lattices have a wraparound link")
        wrap = self.wrap_link
        links = tuple(replace(l, phase_rad=phase_rad) if l is wrap else l for l in self.links)
        return replace(self, links=links)

    def open_ring(self) -> "LatticeSpec":
        """The same ring with its wraparound transition disconnected."""
        wrap = self.wrap_link
        links = tuple(l for l in self.links if l is not wrap)
        drive = Drive() if self.drive.kind == "escher" else self.drive
        return replace(self, links=links, boundary="open", drive=drive)


def load_c3_table(path: Optional[Path] = None) -> Dict[FrozenSet[int], float]:
    """Read a C3 table (CSV columns i, j, c3_mhz_um3) keyed by unordered state pair."""
    path = Path(path) if path else DEFAULT_C3_TABLE
    table = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row_num, row in enumerate(csv.DictReader(f), start=2):
            try:
                i, j, c3 = int(row["i"]), int(row["j"]), float(row["c3_mhz_um3"])
            except (KeyError, TypeError, ValueError) as e:
                raise ValidationError(f"{path}:{row_num}: malformed C3 row ({e})") from None
            if i == j:
                raise ValidationError(f"{path}:{row_num}: exchange needs two distinct states")
            table[frozenset({i, j})] = c3
    logger.debug(f"Loaded {len(table)} C3 coefficients from {path}")
    return table


@dataclass(frozen=True)
class InteractionSpec:
    """
    Dipolar exchange between two atoms.

    V is the exchange strength of the reference pair {0, -1}; every other
    pair is scaled by its C3 ratio. Pairs missing from the table do not
    exchange.
    """

    v_mhz: float
    c3_entries: Tuple[Tuple[int, int, float], ...]
    separation_um: Optional[float] = None

    def __post_init__(self):
        if not np.isfinite(self.v_mhz):
            raise ValidationError("Interaction strength must be finite")
        if REFERENCE_PAIR not in self.c3_table or self.c3_table[REFERENCE_PAIR] == 0:
            raise ValidationError("C3 table must contain a nonzero entry for the pair {0, -1}")

    @classmethod
    def from_table(
        cls,
        v_mhz: Optional[float] = None,
        table: Optional[Dict[FrozenSet[int], float]] = None,
        separation_um: Optional[float] = None,
    ) -> "InteractionSpec":
        """Build from V directly, or derive V = C3^{0,-1} / d^3 from a pair separation."""
        table = load_c3_table() if table is None else table
        entries = tuple(sorted((min(p), max(p), c3) for p, c3 in table.items()))
        if separation_um is not None:
            if separation_um <= 0:
                raise ValidationError("Pair separation must be positive")
            v_mhz = table[REFERENCE_PAIR] / separation_um ** 3
        elif v_mhz is None:
            raise ValidationError("Either v_mhz or separation_um is required")
        return cls(float(v_mhz), entries, separation_um)

    @cached_property
    def c3_table(self) -> Dict[FrozenSet[int], float]:
        return {frozenset({i, j}): c3 for i, j, c3 in self.c3_entries}

    def coupling(self, i: int, j: int) -> float:
        """V_ij = V * C3^{ij} / C3^{0,-1}, zero for pairs absent from the table."""
        c3 = self.c3_table.get(frozenset({i, j}))
        if c3 is None or i == j:
            return 0.0
        return self.v_mhz * c3 / self.c3_table[REFERENCE_PAIR]

    def with_strength(self, v_mhz: float) -> "InteractionSpec":
        return replace(self, v_mhz=float(v_mhz), separation_um=None)


@dataclass(frozen=True)
class LabFrameSpec:
    """Bare-state energies and the two-tone drive of the untransformed Hamiltonian."""

    bare_energies_mhz: Tuple[float, ...]
    detuning_mhz: float
    rabi_mhz: float

    def __post_init__(self):
        energies = tuple(float(e) for e in self.bare_energies_mhz)
        if not all(np.isfinite(energies)):
            raise ValidationError("Bare energies must be finite")
        if self.rabi_mhz < 0:
            raise ValidationError("Negative Rabi rate")
        object.__setattr__(self, "bare_energies_mhz", energies)

    @property
    def transition_frequencies(self) -> Tuple[float, ...]:
        e = self.bare_energies_mhz
        return tuple(e[j + 1] - e[j] for j in range(len(e) - 1))


@dataclass(frozen=True, eq=False)
class ModulatedTerm:
    """
    Time-dependent piece f(t) M + conj(f(t)) M^dagger with f(t) = sum_k exp(-i 2 pi nu_k t).
    """

    matrix: np.ndarray
    tones_mhz: Tuple[float, ...]

    def modulation(self, t: float) -> complex:
        return complex(sum(np.exp(-1j * TWO_PI * nu * t) for nu in self.tones_mhz))

    def at(self, t: float) -> np.ndarray:
        f = self.modulation(t)
        return f * self.matrix + np.conj(f) * self.matrix.conj().T


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    """
    Dense Hermitian generator over a single-particle or two-particle basis.

    Pair basis states |i>_A |j>_B are ordered as np.kron does, index a*N + b.
    """

    static: np.ndarray
    sites: Tuple[int, ...]
    basis: str = "single"
    terms: Tuple[ModulatedTerm, ...] = ()

    def __post_init__(self):
        static = np.array(self.static, dtype=complex)
        static.flags.writeable = False
        object.__setattr__(self, "static", static)
        for term in self.terms:
            term.matrix.flags.writeable = False
        expected = len(self.sites) ** (2 if self.basis == "pair" else 1)
        if static.shape != (expected, expected):
            raise ValidationError(
                f"{self.basis} basis over {len(self.sites)} sites needs a {expected}x{expected} matrix"
            )
        if not is_hermitian(static):
            raise ValidationError("Static part is not Hermitian")

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    @property
    def is_static(self) -> bool:
        return not self.terms

    def at(self, t: float) -> np.ndarray:
        h = np.array(self.static)
        for term in self.terms:
            h += term.at(t)
        return h

    @property
    def max_tone_mhz(self) -> float:
        return max((abs(nu) for term in self.terms for nu in term.tones_mhz), default=0.0)

    @property
    def period(self) -> Optional[float]:
        """Common period (us) of all modulation tones, or None if they are incommensurate."""
        tones = [abs(nu) for term in self.terms for nu in term.tones_mhz if nu != 0]
        if not tones:
            return None
        base = min(tones)
        fractions = [Fraction(nu / base).limit_denominator(64) for nu in tones]
        if any(abs(float(fr) - nu / base) > 1e-9 for fr, nu in zip(fractions, tones)):
            return None
        denominator = np.lcm.reduce([fr.denominator for fr in fractions])
        return float(denominator) / base

    def static_limit(self) -> "HamiltonianMatrix":
        """Collapse a generator whose tones are all zero into its constant matrix."""
        if self.max_tone_mhz != 0:
            raise ValidationError("Generator has nonzero modulation tones")
        return HamiltonianMatrix(self.at(0.0), self.sites, self.basis)

    def norm_bound(self) -> float:
        """Upper bound on the spectral radius of H(t) over all t."""
        bound = np.linalg.norm(self.static, 2)
        for term in self.terms:
            bound += 2 * len(term.tones_mhz) * np.linalg.norm(term.matrix, 2)
        return float(bound)


def is_hermitian(matrix: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(matrix)))) if matrix.size else 1.0
    return bool(np.max(np.abs(matrix - matrix.conj().T), initial=0.0) <= rtol * scale)


def _link_matrix(spec: LatticeSpec, links: Sequence[Link]) -> np.ndarray:
    h = np.zeros((spec.dim, spec.dim), dtype=complex)
    for link in links:
        a, b = spec.index(link.source), spec.index(link.target)
        h[b, a] += link.amplitude
        h[a, b] += np.conj(link.amplitude)
    return h


def build_single_hamiltonian(spec: LatticeSpec) -> HamiltonianMatrix:
    """
    Single-particle generator: diagonal Delta_j and (Omega_j/2) e^{i phi_j} hopping.

    An escher drive keeps the ring's wraparound link as a modulated term
    exp(-i 2 pi N Delta t) on |j_max><j_min| (N sites), so the tilt continues
    around the ring. A bichromatic drive is handed to rotating_frame_reduce.
    """
    if spec.drive.kind == "bichromatic":
        return rotating_frame_reduce(spec)

    diagonal = np.diag(np.asarray(spec.site_detunings, dtype=complex))
    if spec.drive.kind == "escher":
        wrap = spec.wrap_link
        static_links = [l for l in spec.links if l is not wrap]
        m = np.zeros((spec.dim, spec.dim), dtype=complex)
        m[spec.index(wrap.source), spec.index(wrap.target)] = np.conj(wrap.amplitude)
        tone = spec.dim * spec.drive.detuning_mhz
        term = ModulatedTerm(m, (tone,))
        logger.debug(f"Escher ring of {spec.dim} sites, wrap tone {tone:.4g} MHz")
        return HamiltonianMatrix(diagonal + _link_matrix(spec, static_links), spec.sites, "single", (term,))

    return HamiltonianMatrix(diagonal + _link_matrix(spec, spec.links), spec.sites, "single")


def rotating_frame_reduce(
    spec: LatticeSpec, inter: Optional[InteractionSpec] = None
) -> HamiltonianMatrix:
    """
    Interaction-picture generator of the two-tone (+/- Delta) drive.

    Every link is modulated by 2 cos(2 pi Delta t); the exchange block is
    energy conserving in the bare frame and passes through unchanged.
    Site detunings stay on the diagonal as static terms; only the bare
    ladder energies are removed by the frame change.
    """
    if spec.drive.kind != "bichromatic":
        raise ValidationError(f"Rotating-frame reduction needs a bichromatic drive, got {spec.drive.kind}")
    delta = spec.drive.detuning_mhz
    m = np.zeros((spec.dim, spec.dim), dtype=complex)
    for link in spec.links:
        m[spec.index(link.target), spec.index(link.source)] += link.amplitude
    diagonal = np.diag(np.asarray(spec.site_detunings, dtype=complex))
    single = HamiltonianMatrix(diagonal, spec.sites, "single", (ModulatedTerm(m, (delta, -delta)),))
    if inter is None:
        return single
    return pair_from_single(single, inter)


def exchange_matrix(sites: Sequence[int], inter: InteractionSpec) -> np.ndarray:
    """Flip-flop block: <i,j|H_int|j,i> = V_ij in the product basis."""
    n = len(sites)
    h = np.zeros((n * n, n * n), dtype=complex)
    for a, i in enumerate(sites):
        for b, j in enumerate(sites):
            if a != b:
                h[a * n + b, b * n + a] = inter.coupling(i, j)
    return h


def pair_from_single(single: HamiltonianMatrix, inter: InteractionSpec) -> HamiltonianMatrix:
    """H_A (x) I + I (x) H_B + H_int for two distinguishable atoms."""
    if single.basis != "single":
        raise ValidationError("Pair Hamiltonians are built from a single-particle generator")
    eye = np.eye(single.dim)
    static = np.kron(single.static, eye) + np.kron(eye, single.static)
    static = static + exchange_matrix(single.sites, inter)
    terms = tuple(
        ModulatedTerm(np.kron(t.matrix, eye) + np.kron(eye, t.matrix), t.tones_mhz)
        for t in single.terms
    )
    return HamiltonianMatrix(static, single.sites, "pair", terms)


def build_pair_hamiltonian(spec: LatticeSpec, inter: InteractionSpec) -> HamiltonianMatrix:
    return pair_from_single(build_single_hamiltonian(spec), inter)


def build_lab_frame_hamiltonian(
    spec: LabFrameSpec, n_sites: int, first_site: int = 0
) -> HamiltonianMatrix:
    """
    Untransformed two-tone generator: diagonal epsilon_j and, on each link,
    (Omega/2)(exp(-i 2 pi (w_j + Delta) t) + exp(-i 2 pi (w_j - Delta) t)) |j+1><j| + h.c.
    """
    if n_sites < 2:
        raise ValidationError("Lab-frame lattice needs at least two sites")
    if len(spec.bare_energies_mhz) != n_sites:
        raise ValidationError(f"Expected {n_sites} bare energies, got {len(spec.bare_energies_mhz)}")
    sites = tuple(range(first_site, first_site + n_sites))
    terms = []
    for j, omega in enumerate(spec.transition_frequencies):
        m = np.zeros((n_sites, n_sites), dtype=complex)
        m[j + 1, j] = 0.5 * spec.rabi_mhz
        terms.append(ModulatedTerm(m, (omega + spec.detuning_mhz, omega - spec.detuning_mhz)))
    static = np.diag(np.asarray(spec.bare_energies_mhz, dtype=complex))
    return HamiltonianMatrix(static, sites, "single", tuple(terms))
