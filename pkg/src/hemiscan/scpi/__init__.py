from .analyzer import Analyzer, AnalyzerState
from .client import EmbeddedConnection, InstrumentError, TcpConnection, TransportError, client_measure, configure
from .parser import GRAMMAR, ScpiCommand, ScpiError, ScpiParseError, Word, format_scpi, parse_scpi
from .server import ServerHandle, serve

__all__ = [
    "Analyzer",
    "AnalyzerState",
    "EmbeddedConnection",
    "GRAMMAR",
    "InstrumentError",
    "ScpiCommand",
    "ScpiError",
    "ScpiParseError",
    "ServerHandle",
    "TcpConnection",
    "TransportError",
    "Word",
    "client_measure",
    "configure",
    "format_scpi",
    "parse_scpi",
    "serve",
]
