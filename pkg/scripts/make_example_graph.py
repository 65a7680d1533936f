"""Regenerate data/example.graph, the small synthetic graph used in the
README walkthrough.

Four homophilous communities with community-correlated sparse binary
features, so a graph convolution has real structure to learn.  The file is
committed; rerun this script only if the canonical graph format changes.
"""

import argparse
from pathlib import Path

import numpy as np

from diffneg.graphio import Graph, save_graph


def build(num_nodes: int = 160, num_communities: int = 4, feat_dim: int = 16,
          intra_p: float = 0.08, inter_p: float = 0.004, seed: int = 11,
          on_p: float = 0.4, off_p: float = 0.02) -> Graph:
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_communities, num_nodes)
    block = feat_dim // num_communities
    probs = np.full((num_nodes, feat_dim), off_p)
    for v in range(num_nodes):
        lo = labels[v] * block
        probs[v, lo:lo + block] = on_p
    features = (rng.random((num_nodes, feat_dim)) < probs).astype(np.float64)
    edges = []
    for u in range(num_nodes):
        for v in range(u + 1, num_nodes):
            p = intra_p if labels[u] == labels[v] else inter_p
            if rng.random() < p:
                edges.append((u, v))
    return Graph(features, np.array(edges, dtype=np.int64))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    default_out = Path(__file__).resolve().parents[1] / "data" / "example.graph"
    parser.add_argument("--out", default=str(default_out))
    args = parser.parse_args()
    graph = build()
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_graph(graph, args.out)
    print(f"wrote {args.out}: {graph.num_nodes} nodes, {len(graph.edges)} edges, "
          f"{graph.num_features} features")


if __name__ == "__main__":
    main()
