"""Relation-enhanced multi-hop question answering over a knowledge base."""
from .kb import KnowledgeBase, QAExample, Subgraph, load_kb
from .retrieval import RetrievalConfig, retrieve_subgraph
from .serr import RerankConfig, build_relation_trie, rerank
from .vgae import VGAE, VGAEConfig, build_relation_graph, compute_ppr, train_qa_vgae

__version__ = "0.1.0"
