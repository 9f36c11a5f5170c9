"""AICL data model: values, messages, metadata and diagnostics."""

from .diagnostics import (
    RULES,
    Diagnostic,
    Rule,
    Severity,
    apply_overrides,
    diag,
    render_registry,
)
from .message import (
    META_FIELDS,
    OPTIONAL_FIELDS,
    Message,
    MessageClass,
    MessageType,
    Metadata,
    check_metadata,
    classify,
    requires_of,
)
from .values import (
    CallExpr,
    Ident,
    InvalidValue,
    Timestamp,
    Value,
    check_value,
    structural_key,
    values_equal,
)

__all__ = [
    "RULES", "Diagnostic", "Rule", "Severity", "apply_overrides", "diag", "render_registry",
    "META_FIELDS", "OPTIONAL_FIELDS", "Message", "MessageClass", "MessageType", "Metadata",
    "check_metadata", "classify", "requires_of",
    "CallExpr", "Ident", "InvalidValue", "Timestamp", "Value", "check_value",
    "structural_key", "values_equal",
]
