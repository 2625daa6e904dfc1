from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from discrete_sampler import logger
from discrete_sampler.exceptions import DetailedBalanceError, InvalidArgumentError

MAX_HYPERCUBE_DIM_DEFAULT = 16
DETAILED_BALANCE_TOL = 1e-10


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class StateGraph:
    """Connected undirected graph over the states 0..n-1."""
    graph: nx.Graph
    kind: str = 'custom'
    labels: Tuple[str, ...] = ()
    coordinates: Optional[np.ndarray] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        g = self.graph
        if g.number_of_nodes() < 2:
            raise InvalidArgumentError('a state graph needs at least 2 nodes')
        if sorted(g.nodes) != list(range(g.number_of_nodes())):
            raise InvalidArgumentError('nodes must be labelled 0..n-1')
        if nx.number_of_selfloops(g) > 0:
            raise InvalidArgumentError('self-loops are not allowed in the edge set')
        isolated = [node for node, deg in g.degree if deg == 0]
        if isolated:
            raise InvalidArgumentError(f'isolated nodes {isolated}')
        if not nx.is_connected(g):
            raise InvalidArgumentError('state graph is not connected')
        if not nx.is_frozen(g):
            object.__setattr__(self, 'graph', nx.freeze(g))
        if not self.labels:
            object.__setattr__(self, 'labels', tuple(str(i + 1) for i in range(self.n)))
        if self.coordinates is not None:
            object.__setattr__(self, 'coordinates', _readonly(self.coordinates))

    @property
    def n(self) -> int:
        return self.graph.number_of_nodes()

    @property
    def edges(self) -> frozenset:
        return frozenset((min(i, j), max(i, j)) for i, j in self.graph.edges)

    @property
    def degrees(self) -> np.ndarray:
        return np.array([self.graph.degree[i] for i in range(self.n)], dtype=int)

    def adjacency(self) -> np.ndarray:
        return nx.to_numpy_array(self.graph, nodelist=range(self.n), weight=None)


def make_cycle(n: int) -> StateGraph:
    if n < 3:
        raise InvalidArgumentError(f'cycle needs n >= 3, got {n}')
    return StateGraph(nx.cycle_graph(n), kind='cycle', params={'n': n})


def make_two_loop(loop_sizes: Sequence[int] = (3, 3), bridge_nodes: int = 2) -> StateGraph:
    """
    Two cycles joined by a bridge path.

    Loop A takes nodes 0..a-1, the bridge nodes come next and loop B takes
    the remaining nodes. The path runs from the last node of loop A through
    the bridge nodes to the first node of loop B; ``bridge_nodes=0`` joins
    the loops by a single edge.
    """
    loop_sizes = tuple(int(s) for s in loop_sizes)
    if len(loop_sizes) != 2:
        raise InvalidArgumentError(f'two-loop graph needs exactly two loop sizes, got {loop_sizes}')
    if min(loop_sizes) < 3:
        raise InvalidArgumentError(f'each loop needs at least 3 nodes, got {loop_sizes}')
    if bridge_nodes < 0:
        raise InvalidArgumentError('bridge_nodes must be >= 0, a negative bridge leaves the loops disconnected')

    a, b = loop_sizes
    g = nx.Graph()
    nx.add_cycle(g, range(a))
    first_b = a + bridge_nodes
    nx.add_cycle(g, range(first_b, first_b + b))
    nx.add_path(g, [a - 1, *range(a, first_b), first_b])
    return StateGraph(g, kind='two_loop', params={'loop_sizes': list(loop_sizes), 'bridge_nodes': bridge_nodes})


def make_hypercube(d: int, max_dim: int = MAX_HYPERCUBE_DIM_DEFAULT) -> StateGraph:
    if d < 1:
        raise InvalidArgumentError(f'hypercube dimension must be >= 1, got {d}')
    if d > max_dim:
        raise InvalidArgumentError(f'hypercube dimension {d} exceeds the configured maximum {max_dim}')
    cube = nx.hypercube_graph(d)
    mapping = {bits: int(''.join(str(b) for b in bits), 2) for bits in cube.nodes}
    g = nx.relabel_nodes(cube, mapping)
    labels = tuple(format(i, f'0{d}b') for i in range(2 ** d))
    return StateGraph(g, kind='hypercube', labels=labels, params={'dim': d})


def make_lattice(rows: int, cols: int) -> StateGraph:
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise InvalidArgumentError(f'lattice needs rows, cols >= 1 and at least 2 nodes, got {rows}x{cols}')
    grid = nx.grid_2d_graph(rows, cols)
    g = nx.relabel_nodes(grid, {(r, c): r * cols + c for r, c in grid.nodes})
    # cell centres of the unit square
    coordinates = np.array([[(c + 0.5) / cols, (r + 0.5) / rows] for r in range(rows) for c in range(cols)])
    return StateGraph(g, kind='lattice', coordinates=coordinates, params={'rows': rows, 'cols': cols})


def graph_from_spec(spec: Dict[str, Any], max_hypercube_dim: int = MAX_HYPERCUBE_DIM_DEFAULT) -> StateGraph:
    kind = spec.get('kind')
    try:
        if kind == 'cycle':
            return make_cycle(int(spec['n']))
        if kind == 'two_loop':
            return make_two_loop(spec.get('loop_sizes', (3, 3)), int(spec.get('bridge_nodes', 2)))
        if kind == 'hypercube':
            return make_hypercube(int(spec['dim']), max_dim=max_hypercube_dim)
        if kind == 'lattice':
            return make_lattice(int(spec['rows']), int(spec['cols']))
    except KeyError as e:
        raise InvalidArgumentError(f'graph spec of kind {kind!r} is missing {e}') from e
    raise InvalidArgumentError(f'unknown graph kind {kind!r}')


@dataclass(frozen=True)
class TargetDistribution:
    unnormalized: np.ndarray
    normalized: np.ndarray
    z: float

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> 'TargetDistribution':
        weights = np.asarray(weights, dtype=float)
        if weights.ndim != 1 or weights.size < 2:
            raise InvalidArgumentError('target weights must be a 1-d array with at least 2 entries')
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise InvalidArgumentError('target weights must be finite and strictly positive')
        z = float(weights.sum())
        return cls(unnormalized=_readonly(weights), normalized=_readonly(weights / z), z=z)

    @property
    def n(self) -> int:
        return self.normalized.size


def uniform_target(g: StateGraph) -> TargetDistribution:
    return TargetDistribution.from_weights(np.ones(g.n))


def gaussian_mixture_target(
        g: StateGraph,
        centers: Sequence[Sequence[float]] = ((0.25, 0.25), (0.75, 0.75)),
        scales: Sequence[float] = (10.0, 40.0),
    ) -> TargetDistribution:
    if g.coordinates is None:
        raise InvalidArgumentError('gaussian mixture target needs a graph with grid coordinates')
    centers = np.asarray(centers, dtype=float)
    scales = np.asarray(scales, dtype=float)
    if centers.shape != (2, 2) or scales.shape != (2,):
        raise InvalidArgumentError('gaussian mixture needs two centres in [0,1]^2 and two scales')
    if np.any(scales < 0):
        raise InvalidArgumentError('gaussian mixture scales must be nonnegative')
    sq_dist = ((g.coordinates[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    weights = np.exp(-sq_dist * scales[None, :]).sum(axis=1)
    return TargetDistribution.from_weights(weights)


def antipodal_target(g: StateGraph, peak_weight: float = 16.0) -> TargetDistribution:
    """Weight ``peak_weight`` on vertex 0 and its bitwise complement, 1 elsewhere."""
    if g.kind != 'hypercube':
        raise InvalidArgumentError('antipodal target is defined on hypercube graphs only')
    weights = np.ones(g.n)
    weights[0] = peak_weight
    weights[g.n - 1] = peak_weight
    return TargetDistribution.from_weights(weights)


def target_from_spec(spec: Dict[str, Any], g: StateGraph) -> TargetDistribution:
    kind = spec.get('kind')
    if kind == 'explicit':
        weights = spec.get('weights')
        if weights is None or len(weights) != g.n:
            raise InvalidArgumentError(f'explicit target needs {g.n} weights')
        return TargetDistribution.from_weights(weights)
    if kind == 'gaussian_mixture':
        return gaussian_mixture_target(
            g,
            centers=spec.get('centers', ((0.25, 0.25), (0.75, 0.75))),
            scales=spec.get('scales', (10.0, 40.0)),
        )
    if kind == 'antipodal':
        return antipodal_target(g, peak_weight=float(spec.get('peak_weight', 16.0)))
    if kind == 'uniform':
        return uniform_target(g)
    raise InvalidArgumentError(f'unknown target kind {kind!r}')


@dataclass(frozen=True)
class CandidateKernel:
    q: np.ndarray


def random_walk_kernel(g: StateGraph) -> CandidateKernel:
    adjacency = g.adjacency()
    degrees = adjacency.sum(axis=1)
    if np.any(degrees == 0):
        raise InvalidArgumentError('random walk kernel is undefined on isolated nodes')
    return CandidateKernel(q=_readonly(adjacency / degrees[:, None]))


@dataclass(frozen=True)
class RateMatrix:
    Q: np.ndarray


def build_mh_rate_matrix(kernel: CandidateKernel, target: TargetDistribution) -> RateMatrix:
    """Q_ij = min(pi_j / pi_i * q_ji, q_ij) off the diagonal, rows summing to zero."""
    pi = target.normalized
    if np.any(pi <= 0):
        raise InvalidArgumentError('target must be strictly positive')
    q = kernel.q
    ratio = pi[None, :] / pi[:, None]
    rates = np.minimum(ratio * q.T, q)
    np.fill_diagonal(rates, 0.0)
    np.fill_diagonal(rates, -rates.sum(axis=1))
    return RateMatrix(Q=_readonly(rates))


@dataclass(frozen=True)
class WeightMatrix:
    """
    Symmetric edge weights omega_ij = pi_i Q_ij.

    ``rows``/``cols``/``values`` list the off-diagonal support in both
    directions, so every undirected edge appears twice.
    """
    omega: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.omega.shape[0]


def weight_matrix(target: TargetDistribution, rate: RateMatrix) -> WeightMatrix:
    omega = target.normalized[:, None] * rate.Q
    asymmetry = np.abs(omega - omega.T).max()
    if asymmetry > DETAILED_BALANCE_TOL:
        logger.error(f'Detailed balance violated by {asymmetry:.3e}')
        raise DetailedBalanceError(f'pi_i Q_ij is not symmetric (max deviation {asymmetry:.3e})')

    omega = 0.5 * (omega + omega.T)
    np.fill_diagonal(omega, 0.0)
    rows, cols = np.nonzero(omega > 0)
    values = omega[rows, cols]
    np.fill_diagonal(omega, -omega.sum(axis=1))
    return WeightMatrix(
        omega=_readonly(omega),
        rows=rows,
        cols=cols,
        values=_readonly(values),
    )


@dataclass(frozen=True)
class SamplingProblem:
    graph: StateGraph
    target: TargetDistribution
    kernel: CandidateKernel
    rate: RateMatrix
    weights: WeightMatrix

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def pi(self) -> np.ndarray:
        return self.target.normalized

    @property
    def Q(self) -> np.ndarray:
        return self.rate.Q

    @property
    def omega(self) -> np.ndarray:
        return self.weights.omega


def build_problem(g: StateGraph, target: TargetDistribution) -> SamplingProblem:
    if target.n != g.n:
        raise InvalidArgumentError(f'target has {target.n} states but the graph has {g.n}')
    kernel = random_walk_kernel(g)
    rate = build_mh_rate_matrix(kernel, target)
    return SamplingProblem(
        graph=g,
        target=target,
        kernel=kernel,
        rate=rate,
        weights=weight_matrix(target, rate),
    )


def problem_from_spec(
        graph_spec: Dict[str, Any],
        target_spec: Dict[str, Any],
        max_hypercube_dim: int = MAX_HYPERCUBE_DIM_DEFAULT,
    ) -> SamplingProblem:
    g = graph_from_spec(graph_spec, max_hypercube_dim=max_hypercube_dim)
    return build_problem(g, target_from_spec(target_spec, g))
