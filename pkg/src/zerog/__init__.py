"""Zero-g emulation of free-flying spacecraft on a force-controlled manipulator."""

__version__ = "0.1.0"
