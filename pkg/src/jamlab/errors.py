class ExperimentError(RuntimeError):
    """An experiment's internal cross-check failed; results must not be trusted."""
