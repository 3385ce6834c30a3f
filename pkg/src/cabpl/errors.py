"""Error types shared across the library and mapped to CLI exit codes."""


class ConfigurationError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class CapabilityError(RuntimeError):
    """Request exceeds what an algorithm can do, e.g. BCJR with r > 16 (CLI exit code 3)."""


class BudgetExhausted(CapabilityError):
    """A frame budget ran out before the requested collection completed."""
