"""Sensor geometry description shared by meshing, phantoms, and grids."""

from dataclasses import dataclass


@dataclass(frozen=True)
class SensorGeometry:
    """Circular 16-electrode sensor.

    Lengths are in millimetres; contact impedance in ohm * m^2. Coverage is
    the fraction of the circumference occupied by electrode metal.
    """

    radius: float = 7.0
    electrode_count: int = 16
    electrode_coverage: float = 0.5
    contact_impedance: float = 1e-5

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("radius must be positive")
        if self.electrode_count != 16:
            raise ValueError("the measurement protocol requires exactly 16 electrodes")
        if not 0.0 < self.electrode_coverage < 1.0:
            raise ValueError("electrode_coverage must lie in (0, 1)")
        if self.contact_impedance <= 0:
            raise ValueError("contact_impedance must be positive")

    @property
    def diameter(self):
        return 2.0 * self.radius
