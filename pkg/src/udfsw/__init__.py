"""Zero-level-set extraction from unsigned distance fields.

An r-offset marching-cubes double cover is shrunk onto the zero set with an
accuracy-weighted loss, activation masks, direction correction and periodic
topology surgery.
"""

__version__ = "0.1.0"
