"""
Fixture condivise per i test
Per eseguire: pytest tests/ -v (aggiungere -m "not slow" per saltare i benchmark)
"""
import os

# esecuzione single-thread: i test di determinismo confrontano i bit
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from models import HyperParams  # noqa: E402
from services.graph_core import MultiViewNetwork, ViewGraph, binary_adjacency  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end training benchmarks (minutes)")


def make_view(name, edges, n):
    """Vista da una lista di archi (i, j)"""
    edges = list(edges)
    rows = [i for i, _ in edges]
    cols = [j for _, j in edges]
    return ViewGraph.build(name, binary_adjacency(rows, cols, n))


def random_edges(rng, n, p):
    return [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]


def make_network(view_edges, attributes):
    """Rete multi-vista da {nome: archi} e matrice attributi"""
    attributes = np.asarray(attributes, dtype=np.float64)
    n = attributes.shape[0]
    views = tuple(make_view(name, edges, n) for name, edges in view_edges.items())
    return MultiViewNetwork(views=views, attributes=attributes)


def random_network(seed, n=6, K=2, d=3, p=0.5):
    rng = np.random.default_rng(seed)
    view_edges = {f"v{k}": random_edges(rng, n, p) for k in range(K)}
    return make_network(view_edges, rng.uniform(0.0, 1.0, size=(n, d)))


@pytest.fixture
def small_network():
    """6 nodi, 2 viste, 3 attributi"""
    return random_network(seed=3)


@pytest.fixture
def small_hp():
    return HyperParams(n_views=2, filter_order=2, embedding_dim=3, attention_dim=2,
                       epochs=5, learning_rate=0.01, seed=1)


def write_config(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def run_config(tmp_path):
    """Config YAML per una pipeline piccola e veloce in tmp_path"""
    return write_config(tmp_path / "run.yaml", """\
dataset: data/manifest.ini
output_dir: out
hyperparams:
  filter_order: 2
  embedding_dim: 8
  attention_dim: 4
  epochs: 5
  learning_rate: 0.01
  seed: 3
injection:
  clique_size: 4
  n_cliques: 1
  n_attr_anomalies: 4
  candidate_pool: 10
  seed: 3
synthetic:
  n_nodes: 40
  n_views: 2
  n_communities: 2
  n_attributes: 6
  p_in: 0.2
  p_out: 0.02
  seed: 3
k_list: [5, 10]
""")
