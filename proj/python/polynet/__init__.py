"""Python bindings for the polynet routing library."""

from ._polynet import (  # noqa: F401
    EnvError,
    Instance,
    IoError,
    NumericError,
    Point,
    Policy,
    TimeWindow,
    __version__,
    broken_pairs,
    diversity,
    generate,
    read_instances,
    solution_cost,
    train,
    validate_solution,
    write_instances,
)
