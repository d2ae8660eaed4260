"""Exception types raised by adaptalloc."""


class ValidationError(ValueError):
    """Invalid parameters, bounds, shapes or configuration."""


class SolverError(RuntimeError):
    """A linear-algebra routine could not produce a valid answer."""


class IntegrationFault(RuntimeError):
    """Non-finite values appeared while integrating a simulation.

    Attributes
    ----------
    time : float
        Simulation time at which the fault was detected.
    """

    def __init__(self, message, time):
        super().__init__(f"{message} (t = {time:.6g} s)")
        self.time = time
