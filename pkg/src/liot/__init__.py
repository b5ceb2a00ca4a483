"""liot: a small declarative language and HTTP runtime for sensor data.

Programs declare timestamped relations with bounded history windows, triggers
that post-process every inserted record, HTTP-exposed endpoints, millisecond
timers, production rules over windowed values, and external modules reached by
HTTP GET. The engine serializes all work through one event loop, so identical
inputs always produce identical firing logs.
"""

from .ast import Program
from .engine import Engine, EndpointCall, ExternalInsert, Firing, TimerTick, naive_oracle
from .errors import LiotError
from .formatter import format_expression, format_program
from .lexer import tokenize
from .parser import parse_expression, parse_program
from .store import Record, Store

__all__ = [
    "Engine",
    "EndpointCall",
    "ExternalInsert",
    "Firing",
    "LiotError",
    "Program",
    "Record",
    "Store",
    "TimerTick",
    "format_expression",
    "format_program",
    "naive_oracle",
    "parse_expression",
    "parse_program",
    "tokenize",
]
