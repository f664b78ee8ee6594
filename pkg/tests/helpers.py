"""Shared fixtures: random connected graphs and bandlimited test signals."""
import numpy as np

from graphfill.graphs import Graph, build_graph, gft, laplacian
from graphfill.signals import TimeVaryingSignal


def random_connected_graph(n: int, rng: np.random.Generator, p: float = 0.25) -> Graph:
    """Erdos-Renyi edges plus a random spanning chain to force connectivity."""
    edges = set()
    order = rng.permutation(n)
    for a, b in zip(order[:-1], order[1:]):
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((i, j))
    return build_graph(n, sorted(edges))


def bandlimited_signal(
    basis,
    band: int,
    t_steps: int,
    rng: np.random.Generator,
    scale: float = 2.0,
    amp_max: float = 0.3,
    period: float = 97.0,
) -> TimeVaryingSignal:
    """Signal with all spectral energy in the lowest ``band`` frequencies.

    Each in-band coefficient drifts sinusoidally around a random base so
    the signal varies smoothly in time as well as over the graph.
    """
    base = rng.normal(0.0, scale, size=band)
    amp = rng.uniform(0.05, amp_max, size=band)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=band)
    t = np.arange(t_steps)
    coeffs = base[:, None] + amp[:, None] * np.sin(2.0 * np.pi * t[None, :] / period + phase[:, None])
    return TimeVaryingSignal(basis.eigenvectors[:, :band] @ coeffs)


def spectral_fixture(n: int = 30, band: int = 5, t_steps: int = 500, seed: int = 123):
    """Connected graph, its Fourier basis, and a bandlimited signal on it."""
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, rng)
    basis = gft(laplacian(g))
    signal = bandlimited_signal(basis, band, t_steps, rng)
    return g, basis, signal


def write_run_fixture(
    tmp_path,
    n: int = 30,
    band: int = 5,
    t_steps: int = 200,
    seed: int = 6,
    amp_max: float = 0.8,
):
    """Write edge-list and signal CSVs for a synthetic run; returns the paths.

    ``repr`` round-trips floats exactly, so CSV ingestion reproduces the
    generated signal bit-for-bit.
    """
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, rng)
    basis = gft(laplacian(g))
    signal = bandlimited_signal(basis, band, t_steps, rng, scale=2.0, amp_max=amp_max)
    edge_path = str(tmp_path / "edges.csv")
    signal_path = str(tmp_path / "signal.csv")
    with open(edge_path, "w", encoding="utf-8") as fh:
        fh.write("src,dst,weight\n")
        for i in range(n):
            for j in range(i + 1, n):
                if g.adjacency[i, j]:
                    fh.write(f"{i},{j},{float(g.adjacency[i, j])!r}\n")
    with open(signal_path, "w", encoding="utf-8") as fh:
        for row in signal.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return edge_path, signal_path, g, signal
