"""Online collection, cluster summarization, and forecasting of utilization traces."""

__version__ = "0.1.0"

from monisum.trace import SyntheticSpec, TraceDataset, generate_synthetic, load_csv, write_csv

__all__ = [
    "SyntheticSpec",
    "TraceDataset",
    "generate_synthetic",
    "load_csv",
    "write_csv",
    "__version__",
]
