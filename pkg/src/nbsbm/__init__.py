"""Community detection in sparse percolated block-model graphs via
non-backtracking spectra."""

from .bp import bp_marginals, bp_run, bp_step, init_messages, linear_stability
from .cluster import agreement, classify_nodes, k_variance, kmeans, node_embedding
from .em import e_step, em_run, log_likelihood, m_step
from .errors import NumericalError, ValidationError
from .graphs import (adjacency_top_eigenvalue, build_graph, directed_edge_index,
                     in_out_project, line_graph_adjacency, read_edgelist, write_edgelist)
from .nbspec import (companion_matrix, dense_spectrum, nonbacktracking_matrix,
                     nonbacktracking_spectrum, right_eigenpair, structural_eigenvalues)
from .pipeline import beta_sweep, detect_transitions, run_pipeline
from .sbm import (SbmParams, average_degree, beta_thresholds, cluster_degrees,
                  deflated_matrix, kesten_stigum, model_eigenvalues, percolate,
                  sample_graph, symmetric_params, transmission_matrix)

__version__ = "0.1.0"
