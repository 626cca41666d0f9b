"""Synthetic relational datasets from a message-passing variational autoencoder."""

from .errors import RelsynthError
from .evaluate import EvalReport, model_compatibility, privacy_score, train_test_split
from .graph import RelationalGraph, build_graph, edge_list_attribute
from .ingest import (load_checkpoint, load_dataset, load_schema, save_checkpoint,
                     write_synthetic_dataset)
from .model import GraphVaeModel, TrainConfig, synthesize, train_model
from .preprocess import decode_table, encode_table, merge_tables, split_tables
from .relational import (MISSING, AttributeSpec, Kind, Link, RelationalDataset, TableData,
                         join_on_identifier, validate)

__version__ = "0.1.0"
