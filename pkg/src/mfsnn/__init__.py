"""Mixed-feedback recurrent spiking networks: analog tracking to categorical switching."""

__version__ = "0.1.0"
