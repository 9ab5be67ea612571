"""Synthetic industrial CIR generation.

Each transmitter position gets a band-limited tapped-delay-line channel:

- one line-of-sight tap at delay ``d / c`` carrying ``K / (K + 1)`` of the
  received power and the carrier phase ``exp(-j 2 pi f d / c)``;
- ``num_taps`` diffuse taps spaced one sample apart after the LOS arrival,
  with an exponential power-delay profile whose decay constant is the RMS
  delay spread, sharing the remaining ``1 / (K + 1)``;
- received power ``d ** -path_loss_exponent`` (unit power at 1 m);
- every tap convolved with an ideal ``sinc`` pulse of the sounder bandwidth
  and sampled at ``oversampling * bandwidth``.

A share ``static_fraction`` of the diffuse power is fixed scattering owned by
the position (drawn from stream ``(seed, 2, node_id)``, so two transmitters at
one spot see the same fixed part). The rest evolves as a complex AR(1)
process with coefficient ``temporal_correlation``. Additive complex Gaussian
noise of power ``noise_floor`` is added per sample. Fading and noise come from
``(seed, stream, node_id)`` with stream 0 for Alice and 1 for a spoofer, so
generation order never matters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
K_FACTOR_CAP_DB = 60.0

STATIC_NODE_COUNT = 45
STATIC_ALICE = 23
MOBILE_NODE_COUNT = 32

# stream tags keep Alice and Eve draws independent at a shared position
_ALICE_STREAM = 0
_EVE_STREAM = 1
_SITE_STREAM = 2


@dataclass(frozen=True)
class ScenarioParams:
    carrier_frequency: float
    k_factor_db: float
    path_loss_exponent: float
    rms_delay_spread: float
    mean_delay: float
    num_taps: int
    cir_dim: int
    temporal_correlation: float
    noise_floor: float
    bandwidth: float = 200e6
    oversampling: int = 4
    static_fraction: float = 0.95

    def __post_init__(self):
        if not self.carrier_frequency > 0:
            raise ValueError("carrier_frequency must be > 0")
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        if self.cir_dim < self.num_taps:
            raise ValueError("cir_dim must be >= num_taps")
        if not 0.0 <= self.temporal_correlation <= 1.0:
            raise ValueError("temporal_correlation must lie in [0, 1]")
        if self.noise_floor < 0:
            raise ValueError("noise_floor must be >= 0")
        if not 0.0 <= self.static_fraction <= 1.0:
            raise ValueError("static_fraction must lie in [0, 1]")
        if not (self.bandwidth > 0 and self.oversampling >= 1):
            raise ValueError("bandwidth must be > 0 and oversampling >= 1")

    @property
    def sample_period(self) -> float:
        return 1.0 / (self.oversampling * self.bandwidth)

    @property
    def k_linear(self) -> float:
        return 10.0 ** (min(self.k_factor_db, K_FACTOR_CAP_DB) / 10.0)

    @property
    def half_wavelength(self) -> float:
        return SPEED_OF_LIGHT / (2.0 * self.carrier_frequency)


def static_scenario(**overrides) -> ScenarioParams:
    """Open-area, strong-LOS Rician setting (5.4 GHz, K = 12.2 dB, exponent 1.9, 6.1 ns)."""
    base = ScenarioParams(
        carrier_frequency=5.4e9, k_factor_db=12.2, path_loss_exponent=1.9,
        rms_delay_spread=6.1e-9, mean_delay=24.4e-9, num_taps=24, cir_dim=128,
        temporal_correlation=0.95, noise_floor=1e-6, bandwidth=200e6, oversampling=4,
    )
    return replace(base, **overrides)


def mobile_scenario(**overrides) -> ScenarioParams:
    """Indoor factory, weak-LOS setting (5.4 GHz, K = 4.7 dB, exponent 3.6, 177.4 ns)."""
    base = ScenarioParams(
        carrier_frequency=5.4e9, k_factor_db=4.7, path_loss_exponent=3.6,
        rms_delay_spread=177.4e-9, mean_delay=644.4e-9, num_taps=96, cir_dim=128,
        temporal_correlation=0.7, noise_floor=1e-7, bandwidth=80e6, oversampling=4,
    )
    return replace(base, **overrides)


@dataclass
class NodeGeometry:
    """Transmitter positions in meters; node ``i`` (1-based) sits at ``node_positions[i - 1]``."""

    node_positions: np.ndarray
    bob_position: np.ndarray
    alice_node: int

    def __post_init__(self):
        self.node_positions = np.asarray(self.node_positions, dtype=float).reshape(-1, 2)
        self.bob_position = np.asarray(self.bob_position, dtype=float).reshape(2)
        if not 1 <= self.alice_node <= self.num_nodes:
            raise ValueError(f"alice_node {self.alice_node} outside 1..{self.num_nodes}")

    @property
    def num_nodes(self) -> int:
        return self.node_positions.shape[0]

    @property
    def node_ids(self) -> list[int]:
        return list(range(1, self.num_nodes + 1))

    def position(self, node: int) -> np.ndarray:
        if not 1 <= node <= self.num_nodes:
            raise ValueError(f"node {node} outside 1..{self.num_nodes}")
        return self.node_positions[node - 1]

    def distance_to_bob(self, node: int) -> float:
        return float(np.linalg.norm(self.position(node) - self.bob_position))

    def distance(self, a: int, b: int) -> float:
        return float(np.linalg.norm(self.position(a) - self.position(b)))

    def min_separation(self) -> float:
        """Smallest node-to-node or node-to-Bob distance."""
        pts = np.vstack([self.node_positions, self.bob_position])
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        return float(dist[np.triu_indices(len(pts), 1)].min())

    def satisfies_half_wavelength(self, carrier_frequency: float) -> bool:
        return self.min_separation() > SPEED_OF_LIGHT / (2.0 * carrier_frequency)


def static_geometry(alice_node: int = STATIC_ALICE) -> NodeGeometry:
    """45-node open-area grid, numbered row by row moving away from Bob at the origin.

    Columns at x = -1.5, -0.5, 0, 0.5, 1.5 and rows at
    y = 7.5, 9.5, 10.5, 11, 11.5, 12, 12.5, 13.5, 15.5 give 0.5 / 1 / 2 m
    spacings; node 23 lands on (0, 11.5).
    """
    xs = [-1.5, -0.5, 0.0, 0.5, 1.5]
    ys = [7.5, 9.5, 10.5, 11.0, 11.5, 12.0, 12.5, 13.5, 15.5]
    pos = [(x, y) for y in ys for x in xs]
    return NodeGeometry(np.array(pos), np.zeros(2), alice_node)


def mobile_geometry(num_nodes: int = MOBILE_NODE_COUNT, spacing: float = 1.1) -> NodeGeometry:
    """Closed loop walked by the transmitter, starting next to the receiver.

    The loop is a circle through the start point whose center lies on the
    receiver-to-start line, so distance to the receiver grows over the first
    half of the loop and shrinks over the second.
    """
    bob = np.array([274.17, 151.64])
    start = np.array([272.8874, 150.876])
    radius = num_nodes * spacing / (2.0 * np.pi)
    away = (start - bob) / np.linalg.norm(start - bob)
    center = start + radius * away
    phase0 = np.arctan2(*(start - center)[::-1])
    angles = phase0 + 2.0 * np.pi * np.arange(num_nodes) / num_nodes
    pos = center + radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return NodeGeometry(pos, bob, 1)


@dataclass
class CirRecord:
    node_id: int
    time_index: int
    cir: np.ndarray
    is_alice: bool

    def __post_init__(self):
        self.cir = np.asarray(self.cir, dtype=complex)
        if not np.all(np.isfinite(self.cir)):
            raise ValueError("CIR contains non-finite entries")


@dataclass
class Dataset:
    scenario: ScenarioParams
    geometry: NodeGeometry | None
    records: list[CirRecord]
    seed: int
    kind: str = "static"
    eve_interval: int = 0

    def node_records(self, node: int, is_alice: bool | None = None) -> list[CirRecord]:
        return [r for r in self.records
                if r.node_id == node and (is_alice is None or r.is_alice == is_alice)]

    def node_ids(self, is_alice: bool | None = None) -> list[int]:
        seen = dict.fromkeys(r.node_id for r in self.records
                             if is_alice is None or r.is_alice == is_alice)
        return list(seen)

    def cir_matrix(self, records=None) -> np.ndarray:
        records = self.records if records is None else records
        return np.array([r.cir for r in records])


def _tap_layout(scenario: ScenarioParams):
    """Diffuse tap offsets after the LOS arrival and their normalised powers."""
    ts = scenario.sample_period
    offsets = ts * np.arange(1, scenario.num_taps + 1)
    profile = np.exp(-offsets / scenario.rms_delay_spread)
    return offsets, profile / profile.sum()


def _complex_normal(rng, var):
    scale = np.sqrt(np.asarray(var) / 2.0)
    return scale * (rng.standard_normal(np.shape(var)) + 1j * rng.standard_normal(np.shape(var)))


class NodeChannel:
    """Channel state for one transmitter position, advanced one snapshot at a time."""

    def __init__(self, scenario: ScenarioParams, geometry: NodeGeometry, node: int,
                 seed: int, stream: int = _ALICE_STREAM):
        self.scenario = scenario
        d = geometry.distance_to_bob(node)
        if d <= 0:
            raise ValueError(f"node {node} coincides with the receiver")
        k = scenario.k_linear
        power = d ** (-scenario.path_loss_exponent)
        delay = d / SPEED_OF_LIGHT
        offsets, profile = _tap_layout(scenario)
        t = scenario.sample_period * np.arange(scenario.cir_dim)
        los_gain = np.sqrt(power * k / (k + 1.0)) * np.exp(-2j * np.pi * scenario.carrier_frequency * delay)
        self.los = los_gain * np.sinc(scenario.bandwidth * (t - delay))
        self.pulses = np.sinc(scenario.bandwidth * (t[:, None] - delay - offsets[None, :]))
        self.tap_power = power / (k + 1.0) * profile
        # scattering fixed by the position itself, shared by anyone transmitting there
        site = np.random.default_rng([seed, _SITE_STREAM, node])
        kappa = scenario.static_fraction
        self.site_gains = np.sqrt(kappa) * _complex_normal(site, self.tap_power)
        self.fading_power = (1.0 - kappa) * self.tap_power
        self.rng = np.random.default_rng([seed, stream, node])
        self.gains = None
        self.time_index = -1

    def step(self) -> np.ndarray:
        rho = self.scenario.temporal_correlation
        innovation = _complex_normal(self.rng, self.fading_power)
        if self.gains is None:
            self.gains = innovation
        else:
            self.gains = rho * self.gains + np.sqrt(1.0 - rho * rho) * innovation
        noise = _complex_normal(self.rng, np.full(self.scenario.cir_dim, self.scenario.noise_floor))
        self.time_index += 1
        return self.los + self.pulses @ (self.site_gains + self.gains) + noise


def cir_for_position(scenario: ScenarioParams, geometry: NodeGeometry, node: int,
                     time_index: int, seed: int, is_alice: bool | None = None,
                     stream: int = _ALICE_STREAM) -> CirRecord:
    """CIR observed from ``node`` at ``time_index``: a deterministic function of its inputs."""
    channel = NodeChannel(scenario, geometry, node, seed, stream)
    for _ in range(time_index + 1):
        cir = channel.step()
    if is_alice is None:
        is_alice = node == geometry.alice_node
    return CirRecord(node, time_index, cir, is_alice)


def _node_series(scenario, geometry, node, seed, count, is_alice, stream=_ALICE_STREAM):
    channel = NodeChannel(scenario, geometry, node, seed, stream)
    return [CirRecord(node, t, channel.step(), is_alice) for t in range(count)]


def gen_static_dataset(seed: int, samples_per_node: int, scenario: ScenarioParams | None = None,
                       alice_node: int = STATIC_ALICE) -> Dataset:
    """45 fixed transmitters; node ``alice_node`` is legitimate, all others spoof."""
    if samples_per_node < 1:
        raise ValueError("samples_per_node must be >= 1")
    scenario = scenario or static_scenario()
    geometry = static_geometry(alice_node)
    records = []
    for node in geometry.node_ids:
        records.extend(_node_series(scenario, geometry, node, seed, samples_per_node,
                                    node == alice_node))
    return Dataset(scenario, geometry, records, seed, "static", 0)


def gen_mobile_dataset(seed: int, samples_per_node: int, eve_interval: int = 1,
                       scenario: ScenarioParams | None = None,
                       num_nodes: int = MOBILE_NODE_COUNT) -> Dataset:
    """Alice walks the loop; a spoofer follows ``eve_interval`` positions behind.

    Alice contributes ``samples_per_node`` records at every loop position. The
    spoofer contributes the same count at positions ``1 .. num_nodes - eve_interval``
    (while Alice is at ``k`` the spoofer is at ``k - eve_interval``), drawn from an
    independent stream at the same position.
    """
    if samples_per_node < 1:
        raise ValueError("samples_per_node must be >= 1")
    if not 1 <= eve_interval < num_nodes:
        raise ValueError(f"eve_interval must be in 1..{num_nodes - 1}, got {eve_interval}")
    scenario = scenario or mobile_scenario()
    geometry = mobile_geometry(num_nodes)
    records = []
    for node in geometry.node_ids:
        records.extend(_node_series(scenario, geometry, node, seed, samples_per_node, True))
    for node in range(1, num_nodes - eve_interval + 1):
        records.extend(_node_series(scenario, geometry, node, seed, samples_per_node, False,
                                    stream=_EVE_STREAM))
    return Dataset(scenario, geometry, records, seed, "mobile", eve_interval)


def cir_features(cirs: np.ndarray, mode: str = "magnitude") -> np.ndarray:
    """Real feature rows from complex CIR rows: ``|x|`` or ``[Re x, Im x]``."""
    cirs = np.atleast_2d(np.asarray(cirs, dtype=complex))
    if mode == "magnitude":
        return np.abs(cirs)
    if mode == "reim":
        return np.hstack([cirs.real, cirs.imag])
    raise ValueError(f"unknown feature mode {mode!r}")


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    mode: str = "magnitude"
    zero_variance: np.ndarray = field(default=None)

    def apply(self, cirs: np.ndarray) -> np.ndarray:
        feats = cir_features(cirs, self.mode)
        return (feats - self.mean) / self.std


def normalize(records, mode: str = "magnitude", stats: NormStats | None = None):
    """Per-feature standardisation of CIR records.

    With ``stats=None`` the mean and standard deviation are estimated from
    ``records``; zero-variance features are only mean-centred and flagged in
    ``stats.zero_variance`` (a warning is emitted). Returns ``(samples, stats)``
    with one row per record.
    """
    cirs = np.array([r.cir for r in records]) if not isinstance(records, np.ndarray) else records
    if len(cirs) == 0:
        raise ValueError("cannot normalise an empty record set")
    if stats is None:
        feats = cir_features(cirs, mode)
        mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        if flat.any():
            warnings.warn(f"{int(flat.sum())} zero-variance feature(s) left mean-centred only",
                          RuntimeWarning, stacklevel=2)
        std = np.where(flat, 1.0, std)
        stats = NormStats(mean, std, mode, flat)
    return stats.apply(cirs), stats
