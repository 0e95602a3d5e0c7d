"""Link model, Bell-diagonal calculus and Monte Carlo for a coherent-light qubus repeater."""

__version__ = "0.1.0"
