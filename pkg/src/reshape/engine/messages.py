"""Control messages exchanged between the controller and workers.

Control messages travel on a separate channel with strictly higher priority
than data: a worker drains its control queue before touching the next data
item.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any

QUERY_METRICS = "QUERY_METRICS"
SHARE_PARTITION = "SHARE_PARTITION"
ACCEPT_STATE = "ACCEPT_STATE"
STATE_ACK = "STATE_ACK"
PAUSE = "PAUSE"
RESUME = "RESUME"
UPDATE_LOGIC = "UPDATE_LOGIC"
EXPECT_STATE = "EXPECT_STATE"

_ids = itertools.count(1)


@dataclass
class ControlMessage:
    kind: str
    correlation: int = 0
    payload: Any = None

    @classmethod
    def fresh(cls, kind: str, payload: Any = None) -> "ControlMessage":
        return cls(kind=kind, correlation=next(_ids), payload=payload)
