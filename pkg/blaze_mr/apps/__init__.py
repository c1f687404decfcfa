"""The six benchmark workloads, each with a serial reference implementation."""

from .datagen import base_text, gen_data, make_edges, make_points, make_text
from .dump import dump_model
from .gmm import GmmModel, e_step, gmm_em, gmm_serial
from .kmeans import KMeansModel, initial_centers, kmeans, kmeans_serial
from .nearest import Neighbor, nearest100, nearest_serial
from .pagerank import DEFAULT_DAMPING, Graph, PageRankState, pagerank, pagerank_serial
from .pi import PI_CHUNK, count_hits, monte_carlo_pi, pi_parallel_loop, thread_rng
from .wordcount import WordCountResult, tokenize, wordcount, wordcount_serial

__all__ = [
    "DEFAULT_DAMPING",
    "GmmModel",
    "Graph",
    "KMeansModel",
    "Neighbor",
    "PI_CHUNK",
    "PageRankState",
    "WordCountResult",
    "base_text",
    "count_hits",
    "dump_model",
    "e_step",
    "gen_data",
    "gmm_em",
    "gmm_serial",
    "initial_centers",
    "kmeans",
    "kmeans_serial",
    "make_edges",
    "make_points",
    "make_text",
    "monte_carlo_pi",
    "nearest100",
    "nearest_serial",
    "pagerank",
    "pagerank_serial",
    "pi_parallel_loop",
    "thread_rng",
    "tokenize",
    "wordcount",
    "wordcount_serial",
]
