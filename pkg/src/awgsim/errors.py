class ValidationError(ValueError):
    """An input, configuration value or intermediate result violates a
    documented precondition. The CLI maps this to exit code 2."""
