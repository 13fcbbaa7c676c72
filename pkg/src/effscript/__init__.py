"""Effect handlers for LLM-integrated scripts.

Workflows call abstract operations; the handlers stacked around them decide
what those operations do (sequential or overlapped LLM calls, mock, record or
replay backends, logging).
"""

from .core import (
    DispatchContext,
    Handler,
    HandlerFrame,
    Operation,
    OutOfOrderPop,
    UnhandledOperation,
    create_operation,
    current_depth,
    perform,
    push_handler,
    snapshot_context,
)
from .llm import (
    LiveLLMHandler,
    LLMCallRecord,
    MockLLMHandler,
    RecordingLLMHandler,
    ReplayLLMHandler,
    Trace,
    complete,
    parse,
)
from .runtime import (
    AsyncHandler,
    AsyncSeqHandler,
    FutureHandle,
    VirtualClock,
    WallClock,
    async_,
    await_,
    sleep_for,
)

__version__ = "0.1.0"
