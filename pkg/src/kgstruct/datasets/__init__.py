"""Bundled datasets: the 24-triple example graph, UMLS, Nations and Kinships."""

from pathlib import Path

from ..graph import KnowledgeGraph, load_dataset_dir

HERE = Path(__file__).resolve().parent
BUNDLED = ("example", "umls", "nations", "kinships")


def dataset_path(name: str) -> Path:
    if name not in BUNDLED:
        raise KeyError(f"no bundled dataset {name!r}; available: {BUNDLED}")
    return HERE / name


def load(name_or_dir) -> KnowledgeGraph:
    """Load a bundled dataset by name, or any train/valid/test directory."""
    if isinstance(name_or_dir, str) and name_or_dir in BUNDLED:
        return load_dataset_dir(dataset_path(name_or_dir))
    return load_dataset_dir(name_or_dir)
