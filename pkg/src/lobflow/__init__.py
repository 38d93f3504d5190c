"""lobflow: order-flow reconstruction from L2 snapshots, replay verification,
and stylized-fact realism metrics for market simulators."""

__version__ = "0.1.0"

from .core import (
    BookSnapshot,
    EventKind,
    FlowEvent,
    FlowSeq,
    InstrumentSpec,
    MidSeries,
    Side,
    SnapshotSeq,
    Trade,
    bundled_instruments,
    flows_equal,
    log_returns,
    mid_price,
    mid_series,
    spread_ticks,
)
from .flow import extract_session, match_trades, read_flow_csv, write_flow_csv
from .ingest import SessionData, load_session, load_snapshots, load_trades
from .replay import ReplayOutcome, apply_event, replay_and_verify
from .synth import GenConfig, generate, generate_bounce_trades

__all__ = [
    "BookSnapshot",
    "EventKind",
    "FlowEvent",
    "FlowSeq",
    "GenConfig",
    "InstrumentSpec",
    "MidSeries",
    "ReplayOutcome",
    "SessionData",
    "Side",
    "SnapshotSeq",
    "Trade",
    "apply_event",
    "bundled_instruments",
    "extract_session",
    "flows_equal",
    "generate",
    "generate_bounce_trades",
    "load_session",
    "load_snapshots",
    "load_trades",
    "log_returns",
    "match_trades",
    "mid_price",
    "mid_series",
    "read_flow_csv",
    "replay_and_verify",
    "spread_ticks",
    "write_flow_csv",
    "__version__",
]
